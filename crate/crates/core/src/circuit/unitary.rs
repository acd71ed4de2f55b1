use nalgebra::DMatrix;

use super::{Circuit, CircuitError, Gate, GateMatrix};
use crate::math::{self, Mat2, Mat4, C64, ONE, ZERO};

pub type UnitaryMatrix = DMatrix<C64>;

/// Widest circuit `compute_unitary` will simulate densely.
pub const DEFAULT_SIM_LIMIT: usize = 12;

pub fn compute_unitary(c: &Circuit) -> Result<UnitaryMatrix, CircuitError> {
    compute_unitary_with_limit(c, DEFAULT_SIM_LIMIT)
}

pub fn compute_unitary_with_limit(c: &Circuit, limit: usize) -> Result<UnitaryMatrix, CircuitError> {
    let n = c.n_qubits();
    if n > limit {
        return Err(CircuitError::WidthExceeded { n_qubits: n, limit });
    }
    let dim = 1usize << n;
    let mut u = DMatrix::from_fn(dim, dim, |i, j| if i == j { ONE } else { ZERO });
    for g in c.gates() {
        apply_gate(&mut u, g);
    }
    Ok(u)
}

/// Left-multiplies every column of `u` by the embedding of `g`.
fn apply_gate(u: &mut UnitaryMatrix, g: &Gate) {
    match g.matrix() {
        GateMatrix::One(m) => apply_1q(u, &m, g.qubits[0]),
        GateMatrix::Two(m) => apply_2q(u, &m, g.qubits[0], g.qubits[1]),
    }
}

fn apply_1q(u: &mut UnitaryMatrix, m: &Mat2, q: usize) {
    let dim = u.nrows();
    let bit = 1usize << q;
    for col in 0..u.ncols() {
        let mut column = u.column_mut(col);
        for i in 0..dim {
            if i & bit != 0 {
                continue;
            }
            let (a, b) = (column[i], column[i | bit]);
            column[i] = m[(0, 0)] * a + m[(0, 1)] * b;
            column[i | bit] = m[(1, 0)] * a + m[(1, 1)] * b;
        }
    }
}

fn apply_2q(u: &mut UnitaryMatrix, m: &Mat4, q0: usize, q1: usize) {
    let dim = u.nrows();
    let (b0, b1) = (1usize << q0, 1usize << q1);
    let idx = |base: usize| [base, base | b0, base | b1, base | b0 | b1];
    for col in 0..u.ncols() {
        let mut column = u.column_mut(col);
        for base in 0..dim {
            if base & (b0 | b1) != 0 {
                continue;
            }
            let ix = idx(base);
            let v = [column[ix[0]], column[ix[1]], column[ix[2]], column[ix[3]]];
            for r in 0..4 {
                column[ix[r]] = m[(r, 0)] * v[0] + m[(r, 1)] * v[1] + m[(r, 2)] * v[2] + m[(r, 3)] * v[3];
            }
        }
    }
}

/// Operator-norm distance minimized over global phase.
pub fn distance(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64, CircuitError> {
    if u.nrows() != v.nrows() || u.ncols() != v.ncols() {
        return Err(CircuitError::DimMismatch(u.nrows(), v.nrows()));
    }
    Ok(math::phase_min_opnorm(u, v))
}

/// Phase-invariant trace distance `sqrt(1 - |tr(u^dagger v)| / d)`.
pub fn trace_distance(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64, CircuitError> {
    if u.nrows() != v.nrows() || u.ncols() != v.ncols() {
        return Err(CircuitError::DimMismatch(u.nrows(), v.nrows()));
    }
    let d = u.nrows() as f64;
    let mut tr = ZERO;
    for j in 0..u.ncols() {
        for i in 0..u.nrows() {
            tr += u[(i, j)].conj() * v[(i, j)];
        }
    }
    Ok((1.0 - (tr.norm() / d).min(1.0)).max(0.0).sqrt())
}
