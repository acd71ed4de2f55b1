//! Merge-and-synthesize: identity removal, plan application, local synthesis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Gate, GateKind, GateMatrix};
use crate::merge::{apply_plan, one_qubit_merge, MergeError, Plan};

use super::{SynthBackend, SynthError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("synthesis failed: {0}")]
    Synth(#[from] SynthError),
}

/// Synthesized circuit plus the bookkeeping needed for error bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    #[serde(with = "crate::circuit::json::serde_circuit")]
    pub circuit: Circuit,
    pub t_count: usize,
    /// Two-qubit blocks sent through KAK.
    pub kak_blocks: usize,
    /// Single-qubit unitaries approximated over the target set.
    pub synth_blocks: usize,
    /// Sum of the per-block approximation errors, a bound on the end-to-end distance.
    pub error_sum: f64,
}

impl SynthOutput {
    /// K of the `K * eps` bound: every locally synthesized block.
    pub fn blocks(&self) -> usize {
        self.kak_blocks + self.synth_blocks
    }
}

/// Runs the full local pipeline on `c` under `plan`.
///
/// Steps: drop identity gates, apply the plan, KAK every two-qubit gate other than CX,
/// optionally merge single-qubit runs per wire, then synthesize every single-qubit gate
/// outside the target set.
pub fn merge_and_synthesize(
    c: &Circuit,
    backend: &dyn SynthBackend,
    plan: &Plan,
    merge_1q: bool,
) -> Result<SynthOutput, PipelineError> {
    let merged = apply_plan(&c.remove_identities(), plan)?;
    synthesize_merged(&merged, backend, merge_1q)
}

/// The synthesis half of [`merge_and_synthesize`], for a circuit the plan was already
/// applied to.
pub fn synthesize_merged(
    merged: &Circuit,
    backend: &dyn SynthBackend,
    merge_1q: bool,
) -> Result<SynthOutput, PipelineError> {
    let c = merged;
    let mut kak_blocks = 0;
    let mut gates: Vec<Gate> = Vec::with_capacity(merged.len() * 4);
    for g in merged.gates() {
        match (&g.kind, g.matrix()) {
            (GateKind::Cx, _) | (_, GateMatrix::One(_)) => gates.push(g.clone()),
            (_, GateMatrix::Two(m)) => {
                kak_blocks += 1;
                let local = backend.synth_2q(&m)?;
                let map = [g.qubits[0], g.qubits[1]];
                gates.extend(local.iter().map(|x| x.remapped(&map)));
            }
        }
    }
    let mut lowered = Circuit::from_parts(c.n_qubits(), gates).remove_identities();
    if merge_1q {
        for q in 0..c.n_qubits() {
            lowered = one_qubit_merge(&lowered, q)?;
        }
    }

    let todo: Vec<usize> = lowered
        .gates()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_single() && !backend.is_target_1q(&g.kind))
        .map(|(k, _)| k)
        .collect();
    let words = todo
        .par_iter()
        .map(|&k| match lowered.gates()[k].matrix() {
            GateMatrix::One(m) => backend.synth_1q(&m),
            GateMatrix::Two(_) => unreachable!(),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out: Vec<Gate> = Vec::with_capacity(lowered.len() * 8);
    let mut error_sum = 0.0;
    let mut next = 0;
    for (k, g) in lowered.gates().iter().enumerate() {
        if next < todo.len() && todo[next] == k {
            let r = &words[next];
            error_sum += r.error;
            let map = [g.qubits[0]];
            out.extend(r.word.gates().iter().map(|x| x.remapped(&map)));
            next += 1;
        } else {
            out.push(g.clone());
        }
    }
    let circuit = Circuit::from_parts(c.n_qubits(), out);
    Ok(SynthOutput {
        t_count: circuit.t_count(),
        circuit,
        kak_blocks,
        synth_blocks: todo.len(),
        error_sum,
    })
}

/// Whether every gate is Clifford+T (CX the only two-qubit gate).
pub fn is_clifford_t_circuit(c: &Circuit) -> bool {
    c.gates().iter().all(|g| g.kind.is_clifford_t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{compute_unitary, distance};
    use crate::math;
    use crate::merge::tests::pathological;
    use crate::synth::{BackendKind, LocalBackend, OneQubitMethod};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn backend(eps: f64) -> LocalBackend {
        LocalBackend::with_method(BackendKind::KakEnum, OneQubitMethod::Enum { budget: 18 }, eps)
    }

    #[test]
    fn identity_circuit_is_free() {
        let c = Circuit::new(2, vec![Gate::rz(0.0, 0), Gate::unitary2(math::Mat4::identity(), 0, 1).unwrap()]).unwrap();
        let out = merge_and_synthesize(&c, &backend(0.01), &Plan::new(), true).unwrap();
        assert!(out.circuit.is_empty());
        assert_eq!(out.t_count, 0);
    }

    #[test]
    fn pathological_plan_leaves_cx() {
        let c = pathological(0.37, 4);
        let b = backend(0.05);
        let out = merge_and_synthesize(&c, &b, &Plan::from(vec![(0, 1)]), true).unwrap();
        assert_eq!(out.t_count, 0);
        assert_eq!(out.circuit.gates(), &[Gate::cx(1, 2)]);
        let none = merge_and_synthesize(&c, &b, &Plan::new(), true).unwrap();
        assert!(none.t_count > 0);
    }

    #[test]
    fn output_is_target_set_and_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eps = 0.05;
        let b = backend(eps);
        for _ in 0..4 {
            let mut gates = Vec::new();
            for _ in 0..8 {
                let q = rng.gen_range(0..3);
                match rng.gen_range(0..4) {
                    0 => gates.push(Gate::rz(rng.gen_range(-3.0..3.0), q)),
                    1 => gates.push(Gate::rx(rng.gen_range(-3.0..3.0), q)),
                    2 => gates.push(Gate::cx(q, (q + 1) % 3)),
                    _ => gates.push(Gate::rxx(rng.gen_range(-3.0..3.0), q, (q + 1) % 3)),
                }
            }
            let c = Circuit::new(3, gates).unwrap();
            for plan in [Plan::new(), Plan::from(vec![(0, 1), (1, 2)])] {
                let out = merge_and_synthesize(&c, &b, &plan, true).unwrap();
                assert!(is_clifford_t_circuit(&out.circuit));
                let d = distance(&compute_unitary(&c).unwrap(), &compute_unitary(&out.circuit).unwrap()).unwrap();
                assert!(d <= out.error_sum + 1e-7, "{d} > {}", out.error_sum);
                assert!(d <= out.blocks() as f64 * eps + 1e-9);
            }
        }
    }

    #[test]
    fn one_qubit_merge_helps_rz_pairs() {
        let b = LocalBackend::with_method(BackendKind::KakEnum, OneQubitMethod::Enum { budget: 22 }, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut on, mut off) = (0, 0);
        for _ in 0..10 {
            let c = Circuit::new(1, vec![Gate::rz(rng.gen_range(0.0..6.0), 0), Gate::rz(rng.gen_range(0.0..6.0), 0)]).unwrap();
            on += merge_and_synthesize(&c, &b, &Plan::new(), true).unwrap().t_count;
            off += merge_and_synthesize(&c, &b, &Plan::new(), false).unwrap().t_count;
        }
        assert!((on as f64) < 0.7 * off as f64, "{on} vs {off}");
    }
}
