//! Unitary-preserving merge actions and plan application.
//!
//! Runs are positional: a run is a stretch of the instruction list, never a dataflow region.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Gate, GateKind, GateMatrix, IDENTITY_TOL};
use crate::math::{self, Mat2, Mat4};
use crate::synth::euler::euler_zyz;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MergeError {
    #[error("qubit {qubit} out of range for width {n_qubits}")]
    IndexOutOfRange { qubit: usize, n_qubits: usize },
    #[error("merge pair needs two distinct qubits, got ({0}, {0})")]
    EqualIndices(usize),
}

/// Ordered sequence of two-qubit merge actions. Serializes as `[[i, j], ...]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan(pub Vec<(usize, usize)>);

impl Plan {
    pub fn new() -> Plan {
        Plan(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn push(&mut self, pair: (usize, usize)) {
        self.0.push(pair);
    }

    pub fn with(&self, pair: (usize, usize)) -> Plan {
        let mut p = self.clone();
        p.push(pair);
        p
    }

    pub fn prefix(&self, k: usize) -> Plan {
        Plan(self.0[..k].to_vec())
    }
}

impl From<Vec<(usize, usize)>> for Plan {
    fn from(v: Vec<(usize, usize)>) -> Self {
        Plan(v)
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|(i, j)| format!("({i},{j})")).collect();
        write!(f, "[{}]", s.join(" "))
    }
}

fn check(c: &Circuit, q: usize) -> Result<(), MergeError> {
    if q >= c.n_qubits() {
        Err(MergeError::IndexOutOfRange {
            qubit: q,
            n_qubits: c.n_qubits(),
        })
    } else {
        Ok(())
    }
}

/// U3 gate equal to `m` up to global phase.
pub fn u3_from_matrix(m: &Mat2, q: usize) -> Gate {
    let e = euler_zyz(m);
    Gate::u3(e.theta, e.phi, e.lambda, q)
}

fn single_matrix(g: &Gate) -> Mat2 {
    match g.matrix() {
        GateMatrix::One(m) => m,
        GateMatrix::Two(_) => unreachable!("single-qubit gate expected"),
    }
}

/// Replaces each maximal run of single-qubit gates on qubit `i` by one U3, or drops it
/// when it composes to the identity. A run ends at any gate touching `i` that is not a
/// single-qubit gate on `i`, and at any multi-qubit gate.
pub fn one_qubit_merge(c: &Circuit, i: usize) -> Result<Circuit, MergeError> {
    check(c, i)?;
    let mut out: Vec<Gate> = Vec::with_capacity(c.len());
    let mut buf: Vec<Gate> = Vec::new();
    let flush = |buf: &mut Vec<Gate>, out: &mut Vec<Gate>| {
        match buf.len() {
            0 => {}
            1 => {
                if !buf[0].is_identity(IDENTITY_TOL) {
                    out.push(buf[0].clone());
                }
            }
            _ => {
                let mut u = Mat2::identity();
                for g in buf.iter() {
                    u = single_matrix(g) * u;
                }
                if !math::is_identity_up_to_phase(&math::to_dmatrix2(&u), IDENTITY_TOL) {
                    out.push(u3_from_matrix(&u, i));
                }
            }
        }
        buf.clear();
    };
    for g in c.gates() {
        if g.is_single() && g.qubits[0] == i {
            buf.push(g.clone());
        } else if g.acts_on(i) || !g.is_single() {
            flush(&mut buf, &mut out);
            out.push(g.clone());
        } else {
            out.push(g.clone());
        }
    }
    flush(&mut buf, &mut out);
    Ok(Circuit::from_parts(c.n_qubits(), out))
}

/// Local 4x4 matrix of a gate supported inside `{i, j}`, basis `bit(i) + 2 bit(j)`.
pub fn pair_local_matrix(g: &Gate, i: usize, j: usize) -> Mat4 {
    debug_assert!(g.qubits.iter().all(|&q| q == i || q == j));
    let id = Mat2::identity();
    match g.matrix() {
        GateMatrix::One(m) => {
            if g.qubits[0] == i {
                math::kron2(&id, &m)
            } else {
                math::kron2(&m, &id)
            }
        }
        GateMatrix::Two(m) => {
            if g.qubits[0] == i {
                m
            } else {
                swap_bits(&m)
            }
        }
    }
}

/// Conjugation by SWAP: relabels local bit 0 as bit 1.
pub fn swap_bits(m: &Mat4) -> Mat4 {
    let p = [0usize, 2, 1, 3];
    Mat4::from_fn(|r, c| m[(p[r], p[c])])
}

fn is_identity4(m: &Mat4) -> bool {
    math::is_identity_up_to_phase(&math::to_dmatrix4(m), IDENTITY_TOL)
}

/// Replaces each maximal run of gates supported inside `{i, j}` (containing at least one
/// two-qubit gate and at least two gates) by one two-qubit block, then absorbs
/// neighbouring single-qubit gates on `i` and `j` into those blocks.
pub fn two_qubit_merge(c: &Circuit, i: usize, j: usize) -> Result<Circuit, MergeError> {
    if i == j {
        return Err(MergeError::EqualIndices(i));
    }
    check(c, i)?;
    check(c, j)?;
    let (i, j) = (i.min(j), i.max(j));
    let gates = c.gates();
    // Output slots, indexed like the input; `None` marks removed gates.
    let mut slots: Vec<Option<Gate>> = gates.iter().cloned().map(Some).collect();
    let mut is_block = vec![false; gates.len()];
    let mut run: Vec<usize> = Vec::new();

    let mut flush = |run: &mut Vec<usize>, slots: &mut Vec<Option<Gate>>| {
        let has_two = run.iter().any(|&k| gates[k].arity() == 2);
        if run.len() == 1 && gates[run[0]].is_identity(IDENTITY_TOL) {
            slots[run[0]] = None;
        } else if has_two && run.len() >= 2 {
            let mut b = Mat4::identity();
            for &k in run.iter() {
                b = pair_local_matrix(&gates[k], i, j) * b;
            }
            for &k in run.iter() {
                slots[k] = None;
            }
            if !is_identity4(&b) {
                let last = *run.last().unwrap();
                slots[last] = Some(Gate::raw_block2(b, i, j));
                is_block[last] = true;
            }
        }
        run.clear();
    };

    for (k, g) in gates.iter().enumerate() {
        let inside = g.qubits.iter().all(|&q| q == i || q == j);
        let touches = g.acts_on(i) || g.acts_on(j);
        if inside {
            run.push(k);
        } else if touches {
            flush(&mut run, &mut slots);
        }
    }
    flush(&mut run, &mut slots);

    absorb(&mut slots, &is_block, i, j);
    Ok(Circuit::from_parts(c.n_qubits(), slots.into_iter().flatten().collect()))
}

/// Moves single-qubit gates on `i` or `j` into the nearest following block on their wire
/// when the next multi-qubit gate on that wire is a block, otherwise into the nearest
/// preceding block.
fn absorb(slots: &mut [Option<Gate>], is_block: &[bool], i: usize, j: usize) {
    let wire = |q: usize| if q == i { 0 } else { 1 };
    // Backward pass: `next[w]` is the slot of the next multi-qubit gate on wire w.
    let mut next: [Option<usize>; 2] = [None, None];
    for k in (0..slots.len()).rev() {
        let Some(g) = slots[k].as_ref() else { continue };
        if g.arity() == 2 {
            for &q in g.qubits.iter() {
                if q == i || q == j {
                    next[wire(q)] = Some(k);
                }
            }
            continue;
        }
        let q = g.qubits[0];
        if q != i && q != j {
            continue;
        }
        if let Some(b) = next[wire(q)].filter(|&b| is_block[b]) {
            let m = pair_local_matrix(g, i, j);
            let blk = block_matrix(slots[b].as_ref().unwrap());
            slots[b] = Some(Gate::raw_block2(blk * m, i, j));
            slots[k] = None;
        }
    }
    // Forward pass for the rest.
    let mut prev: [Option<usize>; 2] = [None, None];
    for k in 0..slots.len() {
        let Some(g) = slots[k].as_ref() else { continue };
        if g.arity() == 2 {
            for &q in g.qubits.iter() {
                if q == i || q == j {
                    prev[wire(q)] = Some(k);
                }
            }
            continue;
        }
        let q = g.qubits[0];
        if q != i && q != j {
            continue;
        }
        if let Some(b) = prev[wire(q)].filter(|&b| is_block[b]) {
            let m = pair_local_matrix(g, i, j);
            let blk = block_matrix(slots[b].as_ref().unwrap());
            slots[b] = Some(Gate::raw_block2(m * blk, i, j));
            slots[k] = None;
        }
    }
}

fn block_matrix(g: &Gate) -> Mat4 {
    match &g.kind {
        GateKind::Unitary2(m) => **m,
        _ => unreachable!("blocks are raw two-qubit unitaries"),
    }
}

impl Gate {
    pub(crate) fn raw_block2(m: Mat4, i: usize, j: usize) -> Gate {
        Gate::raw(GateKind::Unitary2(Arc::new(m)), &[i, j])
    }
}

/// Left fold of [`two_qubit_merge`] over the plan.
pub fn apply_plan(c: &Circuit, plan: &Plan) -> Result<Circuit, MergeError> {
    let mut cur = c.clone();
    for &(i, j) in plan.pairs() {
        cur = two_qubit_merge(&cur, i, j)?;
    }
    Ok(cur)
}

/// Number of two-qubit gates on `{i, j}` that sit in runs of at least two gates, i.e.
/// the gates `two_qubit_merge(c, i, j)` would fold into a block.
pub fn mergeable_two_qubit_gates(c: &Circuit, i: usize, j: usize) -> usize {
    let (i, j) = (i.min(j), i.max(j));
    let mut total = 0;
    let (mut len, mut twos) = (0usize, 0usize);
    let mut close = |len: &mut usize, twos: &mut usize| {
        if *len >= 2 {
            total += *twos;
        }
        *len = 0;
        *twos = 0;
    };
    for g in c.gates() {
        let inside = g.qubits.iter().all(|&q| q == i || q == j);
        if inside {
            len += 1;
            if g.arity() == 2 {
                twos += 1;
            }
        } else if g.acts_on(i) || g.acts_on(j) {
            close(&mut len, &mut twos);
        }
    }
    close(&mut len, &mut twos);
    total
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::circuit::{compute_unitary, distance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_u4(rng: &mut ChaCha8Rng) -> Mat4 {
        let mut m = Mat4::identity();
        for _ in 0..4 {
            let a = math::u3(rng.gen_range(0.0..3.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0));
            let b = math::u3(rng.gen_range(0.0..3.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0));
            let cx = match GateKind::Cx.matrix() {
                GateMatrix::Two(c) => c,
                _ => unreachable!(),
            };
            m = cx * math::kron2(&a, &b) * m;
        }
        m
    }

    pub(crate) fn pathological(alpha: f64, seed: u64) -> Circuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_u4(&mut rng);
        Circuit::new(
            3,
            vec![
                Gate::rz(alpha, 1),
                Gate::unitary2(u, 0, 1).unwrap(),
                Gate::unitary2(u.adjoint(), 0, 1).unwrap(),
                Gate::rz(-alpha, 1),
                Gate::cx(1, 2),
            ],
        )
        .unwrap()
    }

    fn same_unitary(a: &Circuit, b: &Circuit) -> bool {
        distance(&compute_unitary(a).unwrap(), &compute_unitary(b).unwrap()).unwrap() < 1e-9
    }

    #[test]
    fn one_qubit_merge_examples() {
        let c = Circuit::new(1, vec![Gate::rz(0.7, 0), Gate::rz(-0.7, 0)]).unwrap();
        assert!(one_qubit_merge(&c, 0).unwrap().is_empty());

        let c = Circuit::new(2, vec![Gate::rz(0.3, 0), Gate::h(0), Gate::cx(0, 1), Gate::t(0)]).unwrap();
        let m = one_qubit_merge(&c, 0).unwrap();
        assert_eq!(m.len(), 3);
        assert!(matches!(m.gates()[0].kind, GateKind::U3 { .. }));
        assert_eq!(m.gates()[1], Gate::cx(0, 1));
        assert_eq!(m.gates()[2], Gate::t(0));
        assert!(same_unitary(&c, &m));

        let c = Circuit::new(2, vec![Gate::h(1), Gate::t(1)]).unwrap();
        assert_eq!(one_qubit_merge(&c, 0).unwrap(), c);
        assert!(one_qubit_merge(&c, 2).is_err());
    }

    #[test]
    fn multi_qubit_gate_elsewhere_splits_runs() {
        let c = Circuit::new(3, vec![Gate::h(0), Gate::cx(1, 2), Gate::h(0)]).unwrap();
        let m = one_qubit_merge(&c, 0).unwrap();
        assert_eq!(m, c);
    }

    #[test]
    fn pathological_merge() {
        let c = pathological(0.37, 1);
        let m = two_qubit_merge(&c, 0, 1).unwrap();
        assert_eq!(m.gates(), &[Gate::cx(1, 2)]);
        let one = apply_plan(&c, &Plan(vec![(0, 1)])).unwrap();
        let two = apply_plan(&c, &Plan(vec![(1, 2), (0, 1)])).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(two.len(), 2);
        assert!(same_unitary(&c, &two));
    }

    #[test]
    fn disjoint_pair_is_untouched() {
        let c = Circuit::new(4, vec![Gate::cx(2, 3), Gate::h(2), Gate::rxx(0.3, 2, 3)]).unwrap();
        assert_eq!(two_qubit_merge(&c, 0, 1).unwrap(), c);
        assert_eq!(apply_plan(&c, &Plan::new()).unwrap(), c);
    }

    #[test]
    fn chained_merges_form_single_blocks() {
        // gates on (1,2) then (2,3), interleaved with local rotations
        let c = Circuit::new(
            4,
            vec![
                Gate::rx(0.2, 1),
                Gate::cx(1, 2),
                Gate::rz(0.4, 2),
                Gate::crx(0.9, 2, 1),
                Gate::cx(0, 1),
                Gate::rxx(0.5, 2, 3),
                Gate::ry(0.1, 3),
                Gate::cx(3, 2),
            ],
        )
        .unwrap();
        let a = two_qubit_merge(&c, 1, 2).unwrap();
        let blocks = a.gates().iter().filter(|g| matches!(g.kind, GateKind::Unitary2(_))).count();
        assert_eq!(blocks, 1);
        assert!(same_unitary(&c, &a));
        let b = two_qubit_merge(&a, 2, 3).unwrap();
        assert!(same_unitary(&c, &b));
        assert_eq!(b.len(), 3);
        assert!(b.len() <= a.len());
    }

    #[test]
    fn merge_errors() {
        let c = Circuit::empty(2);
        assert_eq!(two_qubit_merge(&c, 1, 1), Err(MergeError::EqualIndices(1)));
        assert!(matches!(two_qubit_merge(&c, 0, 5), Err(MergeError::IndexOutOfRange { .. })));
    }

    #[test]
    fn plan_json_shape() {
        let p = Plan(vec![(0, 1), (2, 3)]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[0,1],[2,3]]");
        let back: Plan = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn mergeable_count() {
        let c = pathological(0.3, 2);
        assert_eq!(mergeable_two_qubit_gates(&c, 0, 1), 2);
        assert_eq!(mergeable_two_qubit_gates(&c, 1, 2), 1);
        let lone = Circuit::new(2, vec![Gate::cx(0, 1)]).unwrap();
        assert_eq!(mergeable_two_qubit_gates(&lone, 0, 1), 0);
    }
}
