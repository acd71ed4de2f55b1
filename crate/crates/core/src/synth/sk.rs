//! Solovay-Kitaev approximation over a finite inverse-closed gate set.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::circuit::{Gate, GateKind};
use crate::math::{self, c, Mat2};

use super::gateset::GateSet;
use super::SynthError;

pub const DEFAULT_BASE_LENGTH: usize = 14;
pub const DEFAULT_DEPTH: usize = 2;
/// Base lookups further than this from their target fail with `NetTooCoarse`.
pub const DEFAULT_BASE_TOLERANCE: f64 = 0.3;

/// Words of at most `base_length` generators, one per distinct operator.
pub struct EpsilonNet {
    gateset: GateSet,
    base_tolerance: f64,
    quats: Vec<[f64; 4]>,
    words: Vec<Vec<u8>>,
}

fn quat_key(q: &[f64; 4]) -> [i64; 4] {
    q.map(|x| (x * 1e9).round() as i64)
}

impl EpsilonNet {
    pub fn build(gateset: GateSet, base_length: usize, base_tolerance: f64) -> EpsilonNet {
        let gens: Vec<Mat2> = gateset.generators.iter().map(|g| g.matrix).collect();
        let mut seen: HashMap<[i64; 4], usize> = HashMap::new();
        let id = math::quaternion(&Mat2::identity());
        seen.insert(quat_key(&id), 0);
        let mut quats = vec![id];
        let mut mats = vec![Mat2::identity()];
        let mut words: Vec<Vec<u8>> = vec![vec![]];
        let mut frontier = vec![0usize];
        for _ in 0..base_length {
            let mut next = Vec::new();
            for &i in &frontier {
                for (gi, g) in gens.iter().enumerate() {
                    let m = g * mats[i];
                    let q = math::quaternion(&m);
                    let key = quat_key(&q);
                    if seen.contains_key(&key) {
                        continue;
                    }
                    seen.insert(key, quats.len());
                    let mut w = words[i].clone();
                    w.push(gi as u8);
                    quats.push(q);
                    mats.push(m);
                    words.push(w);
                    next.push(quats.len() - 1);
                }
            }
            frontier = next;
        }
        EpsilonNet {
            gateset,
            base_tolerance,
            quats,
            words,
        }
    }

    /// Shared `{H, T, Tdg}` net with the default base length.
    pub fn shared_default() -> Arc<EpsilonNet> {
        EpsilonNet::shared(DEFAULT_BASE_LENGTH)
    }

    pub fn shared(base_length: usize) -> Arc<EpsilonNet> {
        static NETS: OnceLock<Mutex<HashMap<usize, Arc<EpsilonNet>>>> = OnceLock::new();
        let nets = NETS.get_or_init(|| Mutex::new(HashMap::new()));
        let mut g = nets.lock().unwrap_or_else(|e| e.into_inner());
        g.entry(base_length)
            .or_insert_with(|| Arc::new(EpsilonNet::build(GateSet::h_t_tdg(), base_length, DEFAULT_BASE_TOLERANCE)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.quats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quats.is_empty()
    }

    pub fn gateset(&self) -> &GateSet {
        &self.gateset
    }

    /// Closest net element; ties go to the earlier (shorter) word.
    fn nearest(&self, u: &Mat2) -> (usize, f64) {
        let q = math::quaternion(u);
        let mut best = (0usize, -1.0f64);
        for (i, p) in self.quats.iter().enumerate() {
            let dot = (p[0] * q[0] + p[1] * q[1] + p[2] * q[2] + p[3] * q[3]).abs();
            if dot > best.1 {
                best = (i, dot);
            }
        }
        (best.0, (2.0 - 2.0 * best.1.min(1.0)).max(0.0).sqrt())
    }
}

/// A word as generator indices (time order) with its matrix.
#[derive(Clone)]
struct Approx {
    word: Vec<WordGate>,
    matrix: Mat2,
}

#[derive(Clone, Copy)]
struct WordGate {
    gen: u8,
    inverse: bool,
}

fn word_matrix(net: &EpsilonNet, w: &[WordGate]) -> Mat2 {
    w.iter().fold(Mat2::identity(), |acc, g| {
        let m = net.gateset.generators[g.gen as usize].matrix;
        (if g.inverse { m.adjoint() } else { m }) * acc
    })
}

fn invert(w: &[WordGate]) -> Vec<WordGate> {
    w.iter().rev().map(|g| WordGate { gen: g.gen, inverse: !g.inverse }).collect()
}

/// Unit axis and angle of an SU(2) rotation `cos(t/2) I - i sin(t/2) n.sigma`.
fn axis_angle(u: &Mat2) -> ([f64; 3], f64) {
    let q = math::quaternion(u);
    let v = [q[1], q[2], q[3]];
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let angle = 2.0 * q[0].clamp(-1.0, 1.0).acos();
    if norm < 1e-15 {
        ([0.0, 0.0, 1.0], 0.0)
    } else {
        (v.map(|x| x / norm), angle)
    }
}

fn rotation(axis: &[f64; 3], angle: f64) -> Mat2 {
    let (s, co) = (angle / 2.0).sin_cos();
    let [x, y, z] = *axis;
    Mat2::new(c(co, -s * z), c(-s * y, -s * x), c(s * y, -s * x), c(co, s * z))
}

/// Balanced group commutator: `delta ~ v w v^dagger w^dagger`.
fn gc_decompose(delta: &Mat2) -> (Mat2, Mat2) {
    let (n, theta) = axis_angle(delta);
    let st = (theta / 2.0).sin();
    let x2 = (1.0 - (1.0 - st * st).max(0.0).sqrt()) / 2.0;
    let phi = 2.0 * x2.sqrt().sqrt().clamp(0.0, 1.0).asin();
    let v = math::rx(phi);
    let w = math::ry(phi);
    let comm = v * w * v.adjoint() * w.adjoint();
    let (m, _) = axis_angle(&comm);
    // rotation taking axis m to axis n
    let dot = (m[0] * n[0] + m[1] * n[1] + m[2] * n[2]).clamp(-1.0, 1.0);
    let cross = [m[1] * n[2] - m[2] * n[1], m[2] * n[0] - m[0] * n[2], m[0] * n[1] - m[1] * n[0]];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let s = if cn < 1e-12 {
        if dot > 0.0 {
            Mat2::identity()
        } else {
            // antiparallel: any perpendicular axis
            let p = if m[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let k = [m[1] * p[2] - m[2] * p[1], m[2] * p[0] - m[0] * p[2], m[0] * p[1] - m[1] * p[0]];
            let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
            rotation(&k.map(|x| x / kn), std::f64::consts::PI)
        }
    } else {
        rotation(&cross.map(|x| x / cn), dot.acos())
    };
    (s * v * s.adjoint(), s * w * s.adjoint())
}

fn sk_rec(net: &EpsilonNet, u: &Mat2, depth: usize) -> Result<Approx, SynthError> {
    if depth == 0 {
        let (i, d) = net.nearest(u);
        if d > net.base_tolerance {
            return Err(SynthError::NetTooCoarse { distance: d, tolerance: net.base_tolerance });
        }
        let word: Vec<WordGate> = net.words[i].iter().map(|&g| WordGate { gen: g, inverse: false }).collect();
        let matrix = word_matrix(net, &word);
        return Ok(Approx { word, matrix });
    }
    let prev = sk_rec(net, u, depth - 1)?;
    let delta = u * prev.matrix.adjoint();
    let (v, w) = gc_decompose(&delta);
    let av = sk_rec(net, &v, depth - 1)?;
    let aw = sk_rec(net, &w, depth - 1)?;
    // operator v w v^dagger w^dagger prev, listed in time order
    let mut word = prev.word.clone();
    word.extend(invert(&aw.word));
    word.extend(invert(&av.word));
    word.extend(aw.word.iter().copied());
    word.extend(av.word.iter().copied());
    let matrix = word_matrix(net, &word);
    // Keep the shallower answer when recursion does not help on this input.
    if math::distance2(&matrix, u) > math::distance2(&prev.matrix, u) {
        return Ok(prev);
    }
    Ok(Approx { word, matrix })
}

/// Result of an SK run: gates on qubit 0 in time order, plus the achieved distance.
#[derive(Clone, Debug)]
pub struct SkWord {
    pub gates: Vec<Gate>,
    pub error: f64,
}

pub fn sk_word(net: &EpsilonNet, u: &Mat2, depth: usize) -> Result<SkWord, SynthError> {
    let a = sk_rec(net, u, depth)?;
    let gens = &net.gateset.generators;
    let mut gates: Vec<Gate> = Vec::with_capacity(a.word.len());
    for g in &a.word {
        let kind = &gens[g.gen as usize].kind;
        let kind: GateKind = if g.inverse { kind.inverse() } else { kind.clone() };
        gates.push(Gate::new(kind, &[0]).expect("one-qubit generator"));
    }
    let gates = cancel_inverse_pairs(gates);
    let error = math::distance2(&gates_matrix(&gates), u);
    Ok(SkWord { gates, error })
}

pub(crate) fn gates_matrix(gates: &[Gate]) -> Mat2 {
    gates.iter().fold(Mat2::identity(), |acc, g| match g.matrix() {
        crate::circuit::GateMatrix::One(m) => m * acc,
        crate::circuit::GateMatrix::Two(_) => unreachable!("one-qubit word"),
    })
}

/// Removes adjacent gate/inverse pairs until none remain.
pub fn cancel_inverse_pairs(gates: Vec<Gate>) -> Vec<Gate> {
    let mut out: Vec<Gate> = Vec::with_capacity(gates.len());
    for g in gates {
        if let Some(last) = out.last() {
            if last.qubits == g.qubits && last.kind.inverse() == g.kind && !g.kind.is_raw() {
                out.pop();
                continue;
            }
        }
        out.push(g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_su2(rng: &mut ChaCha8Rng) -> Mat2 {
        math::u3(rng.gen_range(0.0..3.14), rng.gen_range(-3.14..3.14), rng.gen_range(-3.14..3.14))
    }

    #[test]
    fn generator_and_identity_are_exact() {
        let net = EpsilonNet::shared(10);
        let h = sk_word(&net, &math::hadamard(), 2).unwrap();
        assert_eq!(h.gates, vec![Gate::h(0)]);
        assert!(h.error < 1e-12);
        let id = sk_word(&net, &Mat2::identity(), 2).unwrap();
        assert!(id.gates.is_empty());
    }

    #[test]
    fn group_commutator_reproduces_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            // small rotation, as in the recursion
            let axis = {
                let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0f64)];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                v.map(|x| x / n)
            };
            let d = rotation(&axis, rng.gen_range(0.01..0.3));
            let (v, w) = gc_decompose(&d);
            let comm = v * w * v.adjoint() * w.adjoint();
            assert!(math::distance2(&comm, &d) < 1e-9);
        }
    }

    #[test]
    fn error_improves_with_depth() {
        let net = EpsilonNet::shared(12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mean = [0.0; 3];
        for _ in 0..20 {
            let u = random_su2(&mut rng);
            let errs: Vec<f64> = (0..3).map(|d| sk_word(&net, &u, d).unwrap().error).collect();
            assert!(errs[2] <= errs[0] + 1e-12);
            for d in 0..3 {
                mean[d] += errs[d];
            }
        }
        assert!(mean[1] < mean[0] && mean[2] < mean[1], "{mean:?}");
    }

    #[test]
    fn coarse_net_is_reported() {
        let net = EpsilonNet::build(GateSet::h_t_tdg(), 1, 0.05);
        let r = sk_word(&net, &math::u3(0.4, 0.1, 0.2), 0);
        assert!(matches!(r, Err(SynthError::NetTooCoarse { .. })));
    }

    #[test]
    fn cancellation() {
        let g = vec![Gate::h(0), Gate::t(0), Gate::tdg(0), Gate::h(0), Gate::s(0)];
        assert_eq!(cancel_inverse_pairs(g), vec![Gate::s(0)]);
    }
}
