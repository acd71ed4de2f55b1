use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use super::CircuitError;
use crate::math::{self, Mat2, Mat4, C64, ONE};

/// Tolerance used when validating raw unitary blocks.
pub const UNITARY_TOL: f64 = 1e-10;

/// The operation carried by a [`Gate`]. Angles are in radians.
#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    H,
    S,
    Sdg,
    T,
    Tdg,
    X,
    Y,
    Z,
    /// Controlled-X with control `qubits[0]` and target `qubits[1]`.
    Cx,
    Rz(f64),
    Rx(f64),
    Ry(f64),
    /// `exp(-i theta XX / 2)`.
    Rxx(f64),
    /// Controlled-Rx with control `qubits[0]`.
    Crx(f64),
    U3 {
        theta: f64,
        phi: f64,
        lambda: f64,
    },
    /// Raw single-qubit unitary block.
    Unitary1(Arc<Mat2>),
    /// Raw two-qubit unitary block in the local basis `bit(q0) + 2 bit(q1)`.
    Unitary2(Arc<Mat4>),
}

/// Matrix of a gate in its local basis.
#[derive(Clone, Debug)]
pub enum GateMatrix {
    One(Mat2),
    Two(Mat4),
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Cx | GateKind::Rxx(_) | GateKind::Crx(_) | GateKind::Unitary2(_) => 2,
            _ => 1,
        }
    }

    /// Lower-case name used by the text formats.
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::Cx => "cx",
            GateKind::Rz(_) => "rz",
            GateKind::Rx(_) => "rx",
            GateKind::Ry(_) => "ry",
            GateKind::Rxx(_) => "rxx",
            GateKind::Crx(_) => "crx",
            GateKind::U3 { .. } => "u3",
            GateKind::Unitary1(_) => "unitary1",
            GateKind::Unitary2(_) => "unitary2",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            GateKind::Rz(t) | GateKind::Rx(t) | GateKind::Ry(t) | GateKind::Rxx(t) | GateKind::Crx(t) => {
                vec![t]
            }
            GateKind::U3 { theta, phi, lambda } => vec![theta, phi, lambda],
            _ => Vec::new(),
        }
    }

    /// Build a named kind from its text name and parameters.
    pub fn from_name(name: &str, params: &[f64]) -> Option<GateKind> {
        let p = |n: usize| if params.len() == n { Some(()) } else { None };
        Some(match name {
            "h" => p(0).map(|_| GateKind::H)?,
            "s" => p(0).map(|_| GateKind::S)?,
            "sdg" => p(0).map(|_| GateKind::Sdg)?,
            "t" => p(0).map(|_| GateKind::T)?,
            "tdg" => p(0).map(|_| GateKind::Tdg)?,
            "x" => p(0).map(|_| GateKind::X)?,
            "y" => p(0).map(|_| GateKind::Y)?,
            "z" => p(0).map(|_| GateKind::Z)?,
            "cx" => p(0).map(|_| GateKind::Cx)?,
            "rz" => p(1).map(|_| GateKind::Rz(params[0]))?,
            "rx" => p(1).map(|_| GateKind::Rx(params[0]))?,
            "ry" => p(1).map(|_| GateKind::Ry(params[0]))?,
            "rxx" => p(1).map(|_| GateKind::Rxx(params[0]))?,
            "crx" => p(1).map(|_| GateKind::Crx(params[0]))?,
            "u3" => p(3).map(|_| GateKind::U3 {
                theta: params[0],
                phi: params[1],
                lambda: params[2],
            })?,
            _ => return None,
        })
    }

    /// Named Clifford+T generators (the synthesis target alphabet).
    pub fn is_clifford_t(&self) -> bool {
        matches!(
            self,
            GateKind::H
                | GateKind::S
                | GateKind::Sdg
                | GateKind::T
                | GateKind::Tdg
                | GateKind::X
                | GateKind::Y
                | GateKind::Z
                | GateKind::Cx
        )
    }

    pub fn is_raw(&self) -> bool {
        matches!(self, GateKind::Unitary1(_) | GateKind::Unitary2(_))
    }

    pub fn matrix(&self) -> GateMatrix {
        use GateKind::*;
        match self {
            H => GateMatrix::One(math::hadamard()),
            S => GateMatrix::One(math::phase_gate(2)),
            Sdg => GateMatrix::One(math::phase_gate(-2)),
            T => GateMatrix::One(math::phase_gate(1)),
            Tdg => GateMatrix::One(math::phase_gate(-1)),
            X => GateMatrix::One(math::pauli_x()),
            Y => GateMatrix::One(math::pauli_y()),
            Z => GateMatrix::One(math::pauli_z()),
            Rz(t) => GateMatrix::One(math::rz(*t)),
            Rx(t) => GateMatrix::One(math::rx(*t)),
            Ry(t) => GateMatrix::One(math::ry(*t)),
            U3 { theta, phi, lambda } => GateMatrix::One(math::u3(*theta, *phi, *lambda)),
            Unitary1(m) => GateMatrix::One(**m),
            Cx => {
                let mut m = Mat4::zeros();
                m[(0, 0)] = ONE;
                m[(2, 2)] = ONE;
                m[(3, 1)] = ONE;
                m[(1, 3)] = ONE;
                GateMatrix::Two(m)
            }
            Crx(t) => {
                let r = math::rx(*t);
                let mut m = Mat4::zeros();
                m[(0, 0)] = ONE;
                m[(2, 2)] = ONE;
                // control is local bit 0: rows/cols 1 and 3
                m[(1, 1)] = r[(0, 0)];
                m[(1, 3)] = r[(0, 1)];
                m[(3, 1)] = r[(1, 0)];
                m[(3, 3)] = r[(1, 1)];
                GateMatrix::Two(m)
            }
            Rxx(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                let d = C64::new(co, 0.0);
                let o = C64::new(0.0, -s);
                let mut m = Mat4::zeros();
                for k in 0..4 {
                    m[(k, k)] = d;
                    m[(k, 3 - k)] = o;
                }
                GateMatrix::Two(m)
            }
            Unitary2(m) => GateMatrix::Two(**m),
        }
    }

    /// Inverse up to global phase, as a named kind where possible.
    pub fn inverse(&self) -> GateKind {
        use GateKind::*;
        match self {
            H => H,
            S => Sdg,
            Sdg => S,
            T => Tdg,
            Tdg => T,
            X => X,
            Y => Y,
            Z => Z,
            Cx => Cx,
            Rz(t) => Rz(-t),
            Rx(t) => Rx(-t),
            Ry(t) => Ry(-t),
            Rxx(t) => Rxx(-t),
            Crx(t) => Crx(-t),
            U3 { theta, phi, lambda } => U3 {
                theta: -theta,
                phi: -lambda,
                lambda: -phi,
            },
            Unitary1(m) => Unitary1(Arc::new(m.adjoint())),
            Unitary2(m) => Unitary2(Arc::new(m.adjoint())),
        }
    }
}

/// A gate bound to qubit indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: SmallVec<[usize; 2]>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[usize]) -> Result<Gate, CircuitError> {
        if qubits.len() != kind.arity() {
            return Err(CircuitError::ArityMismatch {
                gate: kind.name().to_string(),
                expected: kind.arity(),
                got: qubits.len(),
            });
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(CircuitError::DuplicateQubit(qubits[0]));
        }
        match &kind {
            GateKind::Unitary1(m) => check_unitary(&math::to_dmatrix2(m))?,
            GateKind::Unitary2(m) => check_unitary(&math::to_dmatrix4(m))?,
            _ => {}
        }
        Ok(Gate {
            kind,
            qubits: SmallVec::from_slice(qubits),
        })
    }

    /// Construct without validation; callers guarantee arity and distinct qubits.
    pub(crate) fn raw(kind: GateKind, qubits: &[usize]) -> Gate {
        debug_assert_eq!(kind.arity(), qubits.len());
        Gate {
            kind,
            qubits: SmallVec::from_slice(qubits),
        }
    }

    pub fn h(q: usize) -> Gate {
        Gate::raw(GateKind::H, &[q])
    }
    pub fn s(q: usize) -> Gate {
        Gate::raw(GateKind::S, &[q])
    }
    pub fn sdg(q: usize) -> Gate {
        Gate::raw(GateKind::Sdg, &[q])
    }
    pub fn t(q: usize) -> Gate {
        Gate::raw(GateKind::T, &[q])
    }
    pub fn tdg(q: usize) -> Gate {
        Gate::raw(GateKind::Tdg, &[q])
    }
    pub fn x(q: usize) -> Gate {
        Gate::raw(GateKind::X, &[q])
    }
    pub fn y(q: usize) -> Gate {
        Gate::raw(GateKind::Y, &[q])
    }
    pub fn z(q: usize) -> Gate {
        Gate::raw(GateKind::Z, &[q])
    }
    pub fn rz(theta: f64, q: usize) -> Gate {
        Gate::raw(GateKind::Rz(theta), &[q])
    }
    pub fn rx(theta: f64, q: usize) -> Gate {
        Gate::raw(GateKind::Rx(theta), &[q])
    }
    pub fn ry(theta: f64, q: usize) -> Gate {
        Gate::raw(GateKind::Ry(theta), &[q])
    }
    pub fn u3(theta: f64, phi: f64, lambda: f64, q: usize) -> Gate {
        Gate::raw(GateKind::U3 { theta, phi, lambda }, &[q])
    }

    /// Panics when `control == target`.
    pub fn cx(control: usize, target: usize) -> Gate {
        assert_ne!(control, target, "cx needs distinct qubits");
        Gate::raw(GateKind::Cx, &[control, target])
    }
    pub fn crx(theta: f64, control: usize, target: usize) -> Gate {
        assert_ne!(control, target, "crx needs distinct qubits");
        Gate::raw(GateKind::Crx(theta), &[control, target])
    }
    pub fn rxx(theta: f64, a: usize, b: usize) -> Gate {
        assert_ne!(a, b, "rxx needs distinct qubits");
        Gate::raw(GateKind::Rxx(theta), &[a, b])
    }

    pub fn unitary1(m: Mat2, q: usize) -> Result<Gate, CircuitError> {
        Gate::new(GateKind::Unitary1(Arc::new(m)), &[q])
    }
    pub fn unitary2(m: Mat4, q0: usize, q1: usize) -> Result<Gate, CircuitError> {
        Gate::new(GateKind::Unitary2(Arc::new(m)), &[q0, q1])
    }

    pub fn arity(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_single(&self) -> bool {
        self.qubits.len() == 1
    }

    pub fn acts_on(&self, q: usize) -> bool {
        self.qubits.contains(&q)
    }

    pub fn matrix(&self) -> GateMatrix {
        self.kind.matrix()
    }

    /// Counts toward T-count: T and Tdg each count 1.
    pub fn is_t(&self) -> bool {
        matches!(self.kind, GateKind::T | GateKind::Tdg)
    }

    /// Matchgate-mode T-count: `Rz` by an odd multiple of pi/4 counts 1.
    pub fn is_hat_t(&self) -> bool {
        match self.kind {
            GateKind::Rz(t) => matches!(math::pi4_multiple(t, 1e-9), Some(k) if k % 2 == 1),
            _ => false,
        }
    }

    /// Identity up to global phase, to `tol` in max norm.
    pub fn is_identity(&self, tol: f64) -> bool {
        match self.matrix() {
            GateMatrix::One(m) => math::is_identity_up_to_phase(&math::to_dmatrix2(&m), tol),
            GateMatrix::Two(m) => math::is_identity_up_to_phase(&math::to_dmatrix4(&m), tol),
        }
    }

    pub fn inverse(&self) -> Gate {
        Gate {
            kind: self.kind.inverse(),
            qubits: self.qubits.clone(),
        }
    }

    /// Same gate with qubit `q` replaced by `map[q]`.
    pub fn remapped(&self, map: &[usize]) -> Gate {
        Gate {
            kind: self.kind.clone(),
            qubits: self.qubits.iter().map(|&q| map[q]).collect(),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        let p = self.kind.params();
        if !p.is_empty() {
            let s: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
            write!(f, "({})", s.join(","))?;
        }
        let q: Vec<String> = self.qubits.iter().map(|q| format!("q{q}")).collect();
        write!(f, " {}", q.join(","))
    }
}

pub(crate) fn check_unitary(m: &nalgebra::DMatrix<C64>) -> Result<(), CircuitError> {
    let dev = math::unitarity_deviation(m);
    if dev > UNITARY_TOL {
        Err(CircuitError::NotUnitary { deviation: dev })
    } else {
        Ok(())
    }
}

/// Rz angles that are exact Clifford+T gates map to their named equivalents.
pub fn named_phase_gates(k: u8, q: usize) -> Vec<Gate> {
    match k % 8 {
        0 => vec![],
        1 => vec![Gate::t(q)],
        2 => vec![Gate::s(q)],
        3 => vec![Gate::s(q), Gate::t(q)],
        4 => vec![Gate::z(q)],
        5 => vec![Gate::z(q), Gate::t(q)],
        6 => vec![Gate::sdg(q)],
        _ => vec![Gate::tdg(q)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::ZERO;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn named_matrices_are_unitary() {
        let kinds = [
            GateKind::H,
            GateKind::S,
            GateKind::Tdg,
            GateKind::Y,
            GateKind::Cx,
            GateKind::Rz(0.3),
            GateKind::Rx(1.3),
            GateKind::Ry(-0.2),
            GateKind::Rxx(0.9),
            GateKind::Crx(2.1),
            GateKind::U3 {
                theta: 0.1,
                phi: 0.2,
                lambda: 0.3,
            },
        ];
        for k in kinds {
            let dev = match k.matrix() {
                GateMatrix::One(m) => math::unitarity_deviation(&math::to_dmatrix2(&m)),
                GateMatrix::Two(m) => math::unitarity_deviation(&math::to_dmatrix4(&m)),
            };
            assert!(dev < 1e-12, "{k:?}");
        }
    }

    #[test]
    fn rejects_bad_arity_and_non_unitary() {
        assert!(matches!(
            Gate::new(GateKind::Cx, &[0]),
            Err(CircuitError::ArityMismatch { .. })
        ));
        assert!(matches!(Gate::new(GateKind::Cx, &[1, 1]), Err(CircuitError::DuplicateQubit(1))));
        let bad = Mat2::new(ONE, ONE, ZERO, ONE);
        assert!(matches!(Gate::unitary1(bad, 0), Err(CircuitError::NotUnitary { .. })));
    }

    #[test]
    fn hat_t_detection() {
        assert!(Gate::rz(FRAC_PI_4, 0).is_hat_t());
        assert!(Gate::rz(-FRAC_PI_4, 0).is_hat_t());
        assert!(!Gate::rz(FRAC_PI_2, 0).is_hat_t());
        assert!(!Gate::rz(0.3, 0).is_hat_t());
    }
}
