use std::f64::consts::FRAC_PI_2;

use crate::circuit::{Gate, GateKind};
use crate::math::{self, Mat2};

use super::SynthError;

/// Longest word allowed when checking that each generator's inverse is expressible.
const INVERSE_WORD_LIMIT: usize = 8;

#[derive(Clone, Debug)]
pub struct Generator {
    pub kind: GateKind,
    pub matrix: Mat2,
    /// 1 for T-like generators, 0 otherwise.
    pub t_weight: u32,
}

/// A finite single-qubit gate alphabet.
#[derive(Clone, Debug)]
pub struct GateSet {
    pub name: String,
    pub generators: Vec<Generator>,
}

impl GateSet {
    /// Fails when some generator's inverse is not a word of at most 8 generators.
    pub fn new(name: &str, kinds: Vec<(GateKind, u32)>) -> Result<GateSet, SynthError> {
        let generators: Vec<Generator> = kinds
            .into_iter()
            .map(|(kind, t_weight)| {
                let matrix = match kind.matrix() {
                    crate::circuit::GateMatrix::One(m) => m,
                    crate::circuit::GateMatrix::Two(_) => panic!("generators act on one qubit"),
                };
                Generator { kind, matrix, t_weight }
            })
            .collect();
        let gs = GateSet {
            name: name.to_string(),
            generators,
        };
        for g in &gs.generators {
            if !gs.expresses(&g.matrix.adjoint(), INVERSE_WORD_LIMIT) {
                return Err(SynthError::InvalidGateSet(format!(
                    "inverse of {} is not a word of length <= {INVERSE_WORD_LIMIT}",
                    g.kind.name()
                )));
            }
        }
        Ok(gs)
    }

    /// Whether `target` equals, up to phase, a product of at most `max_len` generators.
    fn expresses(&self, target: &Mat2, max_len: usize) -> bool {
        let mut frontier = vec![Mat2::identity()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for w in &frontier {
                for g in &self.generators {
                    let m = g.matrix * w;
                    if math::distance2(&m, target) < 1e-9 {
                        return true;
                    }
                    if !next.iter().any(|x: &Mat2| math::distance2(x, &m) < 1e-9) {
                        next.push(m);
                    }
                }
            }
            frontier = next;
        }
        false
    }

    /// `{H, S, Sdg, T, Tdg}`: the target alphabet of the enumeration backend.
    pub fn clifford_t() -> GateSet {
        GateSet::new(
            "clifford+t",
            vec![
                (GateKind::H, 0),
                (GateKind::S, 0),
                (GateKind::Sdg, 0),
                (GateKind::T, 1),
                (GateKind::Tdg, 1),
            ],
        )
        .expect("clifford+t is inverse closed")
    }

    /// `{H, T, Tdg}` used by Solovay-Kitaev.
    pub fn h_t_tdg() -> GateSet {
        GateSet::new("h,t,tdg", vec![(GateKind::H, 0), (GateKind::T, 1), (GateKind::Tdg, 1)])
            .expect("h,t,tdg is inverse closed")
    }

    /// `{Rx(pi/2), S, T}`: image of the matchgate alphabet in SU(2).
    pub fn matchgate_image() -> GateSet {
        GateSet::new(
            "rx90,s,t",
            vec![(GateKind::Rx(FRAC_PI_2), 0), (GateKind::S, 0), (GateKind::T, 1)],
        )
        .expect("rx90,s,t is inverse closed")
    }

    pub fn has_non_clifford(&self) -> bool {
        self.generators.iter().any(|g| g.t_weight > 0)
    }

    pub fn contains(&self, kind: &GateKind) -> bool {
        self.generators.iter().any(|g| &g.kind == kind)
    }

    /// Whether `kind` is a generator or the inverse of one.
    pub fn contains_or_inverse(&self, kind: &GateKind) -> bool {
        self.generators.iter().any(|g| &g.kind == kind || g.kind.inverse() == *kind)
    }

    /// Rewrites a word over `{H, S, Sdg, T, Tdg, X, Y, Z}` into this alphabet, gate for
    /// gate and up to global phase. When S is in the alphabet T-count is kept; over
    /// `{H, T, Tdg}` each S costs two T.
    pub fn translate(&self, word: &[Gate]) -> Result<Vec<Gate>, SynthError> {
        let mut out = Vec::with_capacity(word.len());
        for g in word {
            if self.contains_or_inverse(&g.kind) {
                out.push(g.clone());
                continue;
            }
            let q = g.qubits[0];
            let rx90 = || Gate::rx(FRAC_PI_2, q);
            let rep: Vec<Gate> = match (&g.kind, self.name.as_str()) {
                (GateKind::H, "rx90,s,t") => vec![Gate::s(q), rx90(), Gate::s(q)],
                (GateKind::Sdg, _) if self.contains(&GateKind::S) => vec![Gate::s(q); 3],
                (GateKind::Z, _) if self.contains(&GateKind::S) => vec![Gate::s(q); 2],
                (GateKind::Tdg, _) if self.contains(&GateKind::T) => {
                    [vec![Gate::s(q); 3], vec![Gate::t(q)]].concat()
                }
                (GateKind::S, "h,t,tdg") => vec![Gate::t(q), Gate::t(q)],
                (GateKind::Sdg, "h,t,tdg") => vec![Gate::tdg(q), Gate::tdg(q)],
                (GateKind::Z, "h,t,tdg") => vec![Gate::t(q); 4],
                (GateKind::X, "h,t,tdg") => [vec![Gate::h(q)], vec![Gate::t(q); 4], vec![Gate::h(q)]].concat(),
                (GateKind::X, _) => vec![Gate::h(q), Gate::s(q), Gate::s(q), Gate::h(q)],
                // X Z = -i Y
                (GateKind::Y, _) => vec![Gate::z(q), Gate::x(q)],
                _ => {
                    return Err(SynthError::InvalidGateSet(format!(
                        "cannot express {} over {}",
                        g.kind.name(),
                        self.name
                    )))
                }
            };
            // nested rewrite for gates like H inside X
            out.extend(self.translate(&rep)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{compute_unitary, distance, Circuit};

    #[test]
    fn standard_sets_construct() {
        assert!(GateSet::clifford_t().has_non_clifford());
        assert!(GateSet::h_t_tdg().has_non_clifford());
        assert!(GateSet::matchgate_image().has_non_clifford());
    }

    #[test]
    fn rejects_set_without_inverses() {
        // Rz(1) has infinite order, so its inverse is no finite word
        let r = GateSet::new("bad", vec![(GateKind::Rz(1.0), 0)]);
        assert!(matches!(r, Err(SynthError::InvalidGateSet(_))));
    }

    #[test]
    fn translation_preserves_unitary_and_t_count() {
        let word = vec![
            Gate::h(0),
            Gate::t(0),
            Gate::sdg(0),
            Gate::x(0),
            Gate::tdg(0),
            Gate::z(0),
            Gate::s(0),
            Gate::y(0),
        ];
        let base = Circuit::new(1, word.clone()).unwrap();
        for gs in [GateSet::matchgate_image(), GateSet::h_t_tdg(), GateSet::clifford_t()] {
            let tr = gs.translate(&word).unwrap();
            assert!(tr.iter().all(|g| gs.contains_or_inverse(&g.kind)), "{}", gs.name);
            let c = Circuit::new(1, tr).unwrap();
            let d = distance(&compute_unitary(&base).unwrap(), &compute_unitary(&c).unwrap()).unwrap();
            assert!(d < 1e-12, "{}: {d}", gs.name);
            if gs.contains(&GateKind::S) {
                assert_eq!(c.t_count(), base.t_count());
            } else {
                assert!(c.t_count() >= base.t_count());
            }
        }
    }
}
