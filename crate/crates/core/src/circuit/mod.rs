//! Circuit intermediate representation.
//!
//! Qubit 0 is the least-significant bit of a basis index everywhere in the crate.

mod gate;
pub mod json;
pub mod qasm;
mod unitary;

use std::fmt;

use thiserror::Error;

pub use gate::{named_phase_gates, Gate, GateKind, GateMatrix, UNITARY_TOL};
pub use unitary::{
    compute_unitary, compute_unitary_with_limit, distance, trace_distance, UnitaryMatrix,
    DEFAULT_SIM_LIMIT,
};

/// Tolerance for identity detection (up to phase) in merges and cleanup.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("gate {gate} expects {expected} qubits, got {got}")]
    ArityMismatch {
        gate: String,
        expected: usize,
        got: usize,
    },
    #[error("qubit {0} repeated in one gate")]
    DuplicateQubit(usize),
    #[error("qubit {qubit} out of range for width {n_qubits}")]
    IndexOutOfRange { qubit: usize, n_qubits: usize },
    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("width {n_qubits} exceeds simulation limit {limit}")]
    WidthExceeded { n_qubits: usize, limit: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("gate {0} has no text representation")]
    UnrepresentableGate(String),
    #[error("circuit needs at least one qubit")]
    EmptyWidth,
}

/// An ordered list of gates over `n_qubits` wires. Rewrites return new values.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize, gates: Vec<Gate>) -> Result<Circuit, CircuitError> {
        if n_qubits == 0 {
            return Err(CircuitError::EmptyWidth);
        }
        for g in &gates {
            check_qubits(g, n_qubits)?;
        }
        Ok(Circuit { n_qubits, gates })
    }

    pub fn empty(n_qubits: usize) -> Circuit {
        assert!(n_qubits > 0, "circuit needs at least one qubit");
        Circuit {
            n_qubits,
            gates: Vec::new(),
        }
    }

    /// Internal constructor for rewrites that preserve validity by construction.
    pub(crate) fn from_parts(n_qubits: usize, gates: Vec<Gate>) -> Circuit {
        debug_assert!(gates.iter().all(|g| g.qubits.iter().all(|&q| q < n_qubits)));
        Circuit { n_qubits, gates }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn into_gates(self) -> Vec<Gate> {
        self.gates
    }

    /// New circuit with `g` appended.
    pub fn with_gate(&self, g: Gate) -> Result<Circuit, CircuitError> {
        check_qubits(&g, self.n_qubits)?;
        let mut gates = self.gates.clone();
        gates.push(g);
        Ok(Circuit::from_parts(self.n_qubits, gates))
    }

    /// `self` followed by `other`; the width is the larger of the two.
    pub fn concat(&self, other: &Circuit) -> Circuit {
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().cloned());
        Circuit::from_parts(self.n_qubits.max(other.n_qubits), gates)
    }

    /// Drops every gate equal to the identity up to phase (tolerance 1e-10).
    pub fn remove_identities(&self) -> Circuit {
        let gates = self
            .gates
            .iter()
            .filter(|g| !g.is_identity(IDENTITY_TOL))
            .cloned()
            .collect();
        Circuit::from_parts(self.n_qubits, gates)
    }

    /// Number of T and Tdg gates.
    pub fn t_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_t()).count()
    }

    /// Matchgate-mode count: `Rz` by odd multiples of pi/4 plus any explicit T/Tdg.
    pub fn hat_t_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_hat_t() || g.is_t()).count()
    }

    pub fn per_qubit_t_count(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_qubits];
        for g in self.gates.iter().filter(|g| g.is_t()) {
            out[g.qubits[0]] += 1;
        }
        out
    }

    pub fn two_qubit_count(&self) -> usize {
        self.gates.iter().filter(|g| g.arity() == 2).count()
    }

    pub fn cx_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::Cx).count()
    }

    /// Sorted unordered pairs `(i, j)`, `i < j`, that share at least one two-qubit gate.
    pub fn interacting_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .gates
            .iter()
            .filter(|g| g.arity() == 2)
            .map(|g| {
                let (a, b) = (g.qubits[0], g.qubits[1]);
                (a.min(b), a.max(b))
            })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Inverse circuit (reversed order, each gate inverted).
    pub fn inverse(&self) -> Circuit {
        let gates = self.gates.iter().rev().map(Gate::inverse).collect();
        Circuit::from_parts(self.n_qubits, gates)
    }

    pub fn unitary(&self) -> Result<UnitaryMatrix, CircuitError> {
        compute_unitary(self)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "circuit on {} qubits, {} gates", self.n_qubits, self.gates.len())?;
        for g in &self.gates {
            writeln!(f, "  {g}")?;
        }
        Ok(())
    }
}

fn check_qubits(g: &Gate, n_qubits: usize) -> Result<(), CircuitError> {
    for &q in g.qubits.iter() {
        if q >= n_qubits {
            return Err(CircuitError::IndexOutOfRange { qubit: q, n_qubits });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;

    #[test]
    fn remove_identities_examples() {
        let c = Circuit::new(2, vec![Gate::rz(0.0, 0), Gate::cx(0, 1)]).unwrap();
        assert_eq!(c.remove_identities().gates(), &[Gate::cx(0, 1)]);

        let id = Gate::unitary2(math::Mat4::identity(), 0, 1).unwrap();
        let c = Circuit::new(2, vec![id]).unwrap();
        assert!(c.remove_identities().is_empty());

        let c = Circuit::new(2, vec![Gate::h(0), Gate::cx(0, 1), Gate::t(1)]).unwrap();
        assert_eq!(c.remove_identities(), c);
    }

    #[test]
    fn t_count_examples() {
        let c = Circuit::new(1, vec![Gate::t(0)]).unwrap();
        assert_eq!(c.t_count(), 1);
        let c = Circuit::new(2, vec![Gate::h(0), Gate::s(1), Gate::cx(0, 1)]).unwrap();
        assert_eq!(c.t_count(), 0);
        let c = Circuit::new(1, vec![Gate::t(0), Gate::tdg(0), Gate::t(0)]).unwrap();
        assert_eq!(c.t_count(), 3);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            Circuit::new(2, vec![Gate::cx(0, 2)]),
            Err(CircuitError::IndexOutOfRange { qubit: 2, .. })
        ));
        assert!(Circuit::new(0, vec![]).is_err());
    }

    #[test]
    fn interacting_pairs_are_sorted_and_unique() {
        let c = Circuit::new(
            4,
            vec![Gate::cx(1, 0), Gate::cx(0, 1), Gate::rxx(0.2, 3, 2), Gate::h(1)],
        )
        .unwrap();
        assert_eq!(c.interacting_pairs(), vec![(0, 1), (2, 3)]);
    }
}
