//! Local synthesis: Euler and KAK decompositions, Clifford+T approximation of
//! single-qubit unitaries, memoization, and the pluggable backends.

pub mod backend;
pub mod euler;
pub mod gateset;
pub mod kak;
pub mod memo;
pub mod pipeline;
pub mod rz_enum;
pub mod sk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{named_phase_gates, Circuit, Gate, GateKind};
use crate::math::{self, Mat2};

pub use backend::{BackendKind, BackendStats, LocalBackend, SynthBackend};
pub use euler::{euler_zyz, EulerZyz};
pub use gateset::GateSet;
pub use kak::{kak_decompose, weyl_coordinates, KakDecomposition};
pub use memo::UnitaryKey;
pub use pipeline::{merge_and_synthesize, synthesize_merged, PipelineError, SynthOutput};
pub use sk::EpsilonNet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("no word within {eps} found at T-count <= {budget}")]
    BudgetExhausted { eps: f64, budget: u32 },
    #[error("tolerance {eps} is below the supported minimum {min}")]
    EpsilonTooSmall { eps: f64, min: f64 },
    #[error("epsilon net too coarse: nearest element at {distance:.4} exceeds {tolerance}")]
    NetTooCoarse { distance: f64, tolerance: f64 },
    #[error("KAK eigenvector alignment failed after perturbed retry")]
    NumericalInstability,
    #[error("input matrix is not unitary")]
    NotUnitary,
    #[error("invalid gate set: {0}")]
    InvalidGateSet(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
}

/// A synthesized word with its cost and measured error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    #[serde(with = "crate::circuit::json::serde_circuit")]
    pub word: Circuit,
    pub t_count: usize,
    pub error: f64,
    pub backend_id: String,
    pub input_key: UnitaryKey,
}


/// How single-qubit unitaries are approximated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OneQubitMethod {
    /// Euler split, each rotation by table enumeration with T-count budget.
    Enum { budget: u32 },
    /// Solovay-Kitaev on the whole unitary.
    Sk { depth: usize, base_length: usize },
}

impl Default for OneQubitMethod {
    fn default() -> Self {
        OneQubitMethod::Enum {
            budget: rz_enum::DEFAULT_BUDGET,
        }
    }
}

fn result(word: Vec<Gate>, target: &Mat2, backend_id: &str) -> SynthesisResult {
    let error = math::distance2(&sk::gates_matrix(&word), target);
    let word = Circuit::from_parts(1, word);
    SynthesisResult {
        t_count: word.t_count(),
        word,
        error,
        backend_id: backend_id.to_string(),
        input_key: UnitaryKey::from_mat2(target),
    }
}

/// Minimum-T-count word for `Rz(theta)` within `eps`, translated into `gs`.
pub fn synth_rz_enum(theta: f64, eps: f64, gs: &GateSet) -> Result<SynthesisResult, SynthError> {
    synth_rz_enum_with_budget(theta, eps, gs, rz_enum::DEFAULT_BUDGET)
}

pub fn synth_rz_enum_with_budget(theta: f64, eps: f64, gs: &GateSet, budget: u32) -> Result<SynthesisResult, SynthError> {
    if !gs.has_non_clifford() {
        return Err(SynthError::InvalidGateSet(format!("{} has no non-Clifford generator", gs.name)));
    }
    let w = rz_enum::rz_word(theta, eps, budget)?;
    let word = gs.translate(&w.gates)?;
    Ok(result(word, &math::rz(theta), "enum"))
}

/// Solovay-Kitaev on the whole unitary; the achieved error is reported, not bounded.
pub fn synth_1q_sk(u: &Mat2, depth: usize, net: &EpsilonNet) -> Result<SynthesisResult, SynthError> {
    let w = sk::sk_word(net, u, depth)?;
    Ok(result(w.gates, u, "sk"))
}

/// Gates (time order, qubit 0) for `Rz(theta)` within `tol`, plus the achieved error.
fn rz_gates(theta: f64, tol: f64, budget: u32) -> Result<(Vec<Gate>, f64), SynthError> {
    if let Some(k) = math::pi4_multiple(theta, 1e-12) {
        return Ok((named_phase_gates(k, 0), 0.0));
    }
    let w = rz_enum::rz_word(theta, tol, budget)?;
    Ok((w.gates, w.error))
}

/// Approximates a single-qubit unitary over Clifford+T.
///
/// With the enumeration method the ZYZ angles are synthesized one by one; rotations by
/// multiples of pi/4 are exact and the tolerance left over is split evenly among the
/// remaining rotations, so every rotation gets at least `eps / r` and the total stays
/// within `eps`.
pub fn synth_u3_clifford_t(u: &Mat2, eps: f64, method: OneQubitMethod) -> Result<SynthesisResult, SynthError> {
    match method {
        OneQubitMethod::Sk { depth, base_length } => synth_1q_sk(u, depth, &EpsilonNet::shared(base_length)),
        OneQubitMethod::Enum { budget } => {
            let e = euler_zyz(u);
            // time order: Rz(lambda), Ry(theta), Rz(phi)
            let rots = [(e.lambda, false), (e.theta, true), (e.phi, false)];
            let mut remaining = rots.iter().filter(|(a, _)| math::pi4_multiple(*a, 1e-12).is_none()).count();
            let mut used = 0.0;
            let mut word: Vec<Gate> = Vec::new();
            for (angle, is_y) in rots {
                let exact = math::pi4_multiple(angle, 1e-12).is_some();
                let tol = if exact { eps } else { (eps - used) / remaining as f64 };
                let (gates, err) = rz_gates(angle, tol, budget)?;
                if !exact {
                    remaining -= 1;
                    used += err;
                }
                if gates.is_empty() {
                    continue;
                }
                if is_y {
                    // Ry = S H Rz H Sdg
                    word.push(Gate::sdg(0));
                    word.push(Gate::h(0));
                    word.extend(gates);
                    word.push(Gate::h(0));
                    word.push(Gate::s(0));
                } else {
                    word.extend(gates);
                }
            }
            Ok(result(sk::cancel_inverse_pairs(word), u, "enum"))
        }
    }
}

/// Single-qubit kinds that need no synthesis in the Clifford+T target set.
pub fn is_clifford_t_1q(kind: &GateKind) -> bool {
    kind.is_clifford_t() && kind.arity() == 1
}
