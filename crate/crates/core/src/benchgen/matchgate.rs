//! Matchgate compilation through the su(2) image of `{X_a X_{a+1}, Z_e}`.
//!
//! On the even-parity sector `{|00>, |11>}` of a neighbouring pair, `XX` acts as `X`
//! and `Z` on either endpoint acts as `Z`, so a run whose `Rz` gates sit on a single
//! endpoint is the lift of one SU(2) element. Words over `{Rx(pi/2), S, T}` lift back
//! gate by gate to `{Rxx(pi/2), Rz(pi/2), Rz(pi/4)}`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Gate, GateKind};
use crate::math::{self, Mat2};
use crate::merge::Plan;
use crate::search::{circuit_fingerprint, Evaluation, PlanKey, PlanMemo, PlanObjective, SearchError};
use crate::synth::memo::{fnv1a, Namespace};
use crate::synth::{GateSet, PipelineError, SynthBackend, SynthError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchgateError {
    #[error("not a matchgate: {0}")]
    NotMatchgate(String),
    #[error("run uses Rz on both endpoints of its pair")]
    MixedEndpoints,
    #[error("gate {0} has no matchgate preimage")]
    NoPreimage(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl From<MatchgateError> for SearchError {
    fn from(e: MatchgateError) -> Self {
        match e {
            MatchgateError::Synth(s) => SearchError::Pipeline(PipelineError::Synth(s)),
            other => SearchError::Other(other.to_string()),
        }
    }
}

fn adjacent(g: &Gate) -> Option<usize> {
    let (p, q) = (g.qubits[0], g.qubits[1]);
    (p.abs_diff(q) == 1).then_some(p.min(q))
}

/// Every gate is `Rz` or a nearest-neighbour `Rxx`.
pub fn is_matchgate_circuit(c: &Circuit) -> bool {
    initial_segments(c).is_ok()
}

/// SU(2) image of a run on pair `(a, a+1)`: `Rxx(t)` maps to `Rx(t)` and `Rz(t)` on the
/// endpoint to `Rz(t)`. Also returns the endpoint, if the run has any `Rz`.
pub fn phi_map(run: &[Gate], a: usize) -> Result<(Mat2, Option<usize>), MatchgateError> {
    let mut endpoint = None;
    let mut m = Mat2::identity();
    for g in run {
        let step = match g.kind {
            GateKind::Rxx(t) if adjacent(g) == Some(a) => math::rx(t),
            GateKind::Rz(t) if g.qubits[0] == a || g.qubits[0] == a + 1 => {
                let q = g.qubits[0];
                if *endpoint.get_or_insert(q) != q {
                    return Err(MatchgateError::MixedEndpoints);
                }
                math::rz(t)
            }
            _ => return Err(MatchgateError::NotMatchgate(format!("{g} outside pair ({a}, {})", a + 1))),
        };
        m = step * m;
    }
    Ok((m, endpoint))
}

/// Lifts a word over `{Rx(pi/2), S, T}` and inverses to matchgates on `(a, a+1)` with
/// `Rz` gates on `endpoint`.
pub fn phi_inverse(word: &[Gate], a: usize, endpoint: usize) -> Result<Vec<Gate>, MatchgateError> {
    let e = endpoint;
    word.iter()
        .map(|g| match g.kind {
            GateKind::Rx(t) if (t.abs() - FRAC_PI_2).abs() < 1e-12 => Ok(Gate::rxx(t, a, a + 1)),
            GateKind::S => Ok(Gate::rz(FRAC_PI_2, e)),
            GateKind::Sdg => Ok(Gate::rz(-FRAC_PI_2, e)),
            GateKind::T => Ok(Gate::rz(FRAC_PI_4, e)),
            GateKind::Tdg => Ok(Gate::rz(-FRAC_PI_4, e)),
            _ => Err(MatchgateError::NoPreimage(g.to_string())),
        })
        .collect()
}

/// `Rz(k pi/4)` as at most two gates from `{Rz(+-pi/2), Rz(+-pi/4)}`.
fn rz_native(k: u8, q: usize) -> Vec<Gate> {
    let (s, t) = (FRAC_PI_2, FRAC_PI_4);
    match k % 8 {
        0 => vec![],
        1 => vec![Gate::rz(t, q)],
        2 => vec![Gate::rz(s, q)],
        3 => vec![Gate::rz(s, q), Gate::rz(t, q)],
        4 => vec![Gate::rz(s, q), Gate::rz(s, q)],
        5 => vec![Gate::rz(-s, q), Gate::rz(-t, q)],
        6 => vec![Gate::rz(-s, q)],
        _ => vec![Gate::rz(-t, q)],
    }
}

/// Collapses runs of adjacent `Rz(k pi/4)` on one wire.
fn tidy(gates: Vec<Gate>) -> Vec<Gate> {
    let mut out: Vec<Gate> = Vec::with_capacity(gates.len());
    let mut acc: Option<(usize, u32)> = None;
    let flush = |out: &mut Vec<Gate>, acc: &mut Option<(usize, u32)>| {
        if let Some((q, k)) = acc.take() {
            out.extend(rz_native((k % 8) as u8, q));
        }
    };
    for g in gates {
        match (&g.kind, math::pi4_multiple(g.kind.params().first().copied().unwrap_or(0.0), 1e-9)) {
            (GateKind::Rz(_), Some(k)) => {
                let q = g.qubits[0];
                match acc {
                    Some((p, ref mut total)) if p == q => *total += k as u32,
                    _ => {
                        flush(&mut out, &mut acc);
                        acc = Some((q, k as u32));
                    }
                }
            }
            _ => {
                flush(&mut out, &mut acc);
                out.push(g);
            }
        }
    }
    flush(&mut out, &mut acc);
    out
}

fn is_native(g: &Gate) -> bool {
    match g.kind {
        GateKind::Rz(t) => math::pi4_multiple(t, 1e-12).is_some(),
        GateKind::Rxx(t) => matches!(math::pi4_multiple(t, 1e-12), Some(k) if k % 2 == 0),
        _ => false,
    }
}

/// Native gates rewritten into the output alphabet.
fn native_gates(gates: &[Gate]) -> Vec<Gate> {
    let mut out = Vec::new();
    for g in gates {
        match g.kind {
            GateKind::Rxx(t) => {
                let k = math::pi4_multiple(t, 1e-12).unwrap_or(0) / 2;
                let (a, b) = (g.qubits[0], g.qubits[1]);
                match k {
                    1 => out.push(Gate::rxx(FRAC_PI_2, a, b)),
                    2 => out.extend([Gate::rxx(FRAC_PI_2, a, b), Gate::rxx(FRAC_PI_2, a, b)]),
                    3 => out.push(Gate::rxx(-FRAC_PI_2, a, b)),
                    _ => {}
                }
            }
            _ => out.push(g.clone()),
        }
    }
    tidy(out)
}

/// Whether `g` is in `{Rxx(+-pi/2), Rz(+-pi/2), Rz(+-pi/4)}`.
pub fn in_matchgate_target_set(g: &Gate) -> bool {
    let ok = |t: f64, allowed: &[f64]| allowed.iter().any(|a| (t - a).abs() < 1e-12);
    match g.kind {
        GateKind::Rxx(t) => adjacent(g).is_some() && ok(t, &[FRAC_PI_2, -FRAC_PI_2]),
        GateKind::Rz(t) => ok(t, &[FRAC_PI_2, -FRAC_PI_2, FRAC_PI_4, -FRAC_PI_4]),
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Support {
    Wire(usize),
    Pair { a: usize, endpoint: Option<usize> },
}

#[derive(Clone, Debug, PartialEq)]
struct Segment {
    support: Support,
    gates: Vec<Gate>,
}

impl Segment {
    fn of(g: &Gate) -> Segment {
        let support = match adjacent_pair(g) {
            Some(a) => Support::Pair { a, endpoint: None },
            None => Support::Wire(g.qubits[0]),
        };
        Segment {
            support,
            gates: vec![g.clone()],
        }
    }

    fn touches(&self, q: usize) -> bool {
        match self.support {
            Support::Wire(w) => w == q,
            Support::Pair { a, .. } => a == q || a + 1 == q,
        }
    }

    fn endpoint(&self) -> Option<usize> {
        match self.support {
            Support::Wire(w) => Some(w),
            Support::Pair { endpoint, .. } => endpoint,
        }
    }
}

fn adjacent_pair(g: &Gate) -> Option<usize> {
    if g.arity() == 2 {
        adjacent(g)
    } else {
        None
    }
}

/// Pair merge on `(a, a+1)`: runs of segments inside the pair, uninterrupted by segments
/// that reach outside it, are fused while their `Rz` gates stay on one endpoint. The
/// fused segment takes the slot of its last member. Returns the new list and the number
/// of segments that joined a group of two or more.
fn merge_pair(segs: &[Segment], a: usize) -> (Vec<Segment>, usize) {
    let b = a + 1;
    let mut out: Vec<Segment> = Vec::with_capacity(segs.len());
    let mut open: Option<(usize, usize)> = None; // (index in out, members)
    let mut absorbed = 0;
    for s in segs {
        if !s.touches(a) && !s.touches(b) {
            out.push(s.clone());
            continue;
        }
        let inside = match s.support {
            Support::Wire(_) => true,
            Support::Pair { a: p, .. } => p == a,
        };
        if !inside {
            open = None;
            out.push(s.clone());
            continue;
        }
        if let Some((idx, members)) = open {
            let g_ep = out[idx].endpoint();
            let compatible = match (g_ep, s.endpoint()) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            };
            if compatible {
                let mut g = out.remove(idx);
                g.support = Support::Pair {
                    a,
                    endpoint: g_ep.or(s.endpoint()),
                };
                g.gates.extend(s.gates.iter().cloned());
                absorbed += if members == 1 { 2 } else { 1 };
                out.push(g);
                open = Some((out.len() - 1, members + 1));
                continue;
            }
        }
        out.push(s.clone());
        open = Some((out.len() - 1, 1));
    }
    (out, absorbed)
}

/// Fuses consecutive single-wire segments on the same wire.
fn merge_wires(segs: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segs.len());
    // index in `out` of the last segment touching each wire
    let mut last: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for s in segs {
        if let Support::Wire(q) = s.support {
            if let Some(&i) = last.get(&q) {
                if out[i].support == Support::Wire(q) {
                    out[i].gates.extend(s.gates);
                    continue;
                }
            }
            last.insert(q, out.len());
        } else if let Support::Pair { a, .. } = s.support {
            last.insert(a, out.len());
            last.insert(a + 1, out.len());
        }
        out.push(s);
    }
    out
}

struct Lowered {
    gates: Vec<Gate>,
    error: f64,
    synthesized: bool,
}

fn lower_segment(s: &Segment, n: usize, backend: &dyn SynthBackend, image: &GateSet) -> Result<Lowered, MatchgateError> {
    if s.gates.iter().all(is_native) {
        return Ok(Lowered {
            gates: native_gates(&s.gates),
            error: 0.0,
            synthesized: false,
        });
    }
    let (a, endpoint) = match s.support {
        Support::Wire(q) => (if q + 1 < n { q } else { q - 1 }, q),
        Support::Pair { a, endpoint } => (a, endpoint.unwrap_or(a)),
    };
    let (m, _) = phi_map(&s.gates, a)?;
    let r = backend.synth_1q(&m)?;
    let word = image.translate(r.word.gates())?;
    Ok(Lowered {
        gates: tidy(phi_inverse(&word, a, endpoint)?),
        error: r.error,
        synthesized: true,
    })
}

/// Result of lowering a segmentation to the matchgate target set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchgateSynthOutput {
    #[serde(with = "crate::circuit::json::serde_circuit")]
    pub circuit: Circuit,
    /// Occurrences of `Rz(+-pi/4)`.
    pub t_count: usize,
    /// Segments that went through synthesis (K of the `K * eps` bound).
    pub blocks: usize,
    pub error_sum: f64,
}

fn lower(segs: &[Segment], n: usize, backend: &dyn SynthBackend) -> Result<MatchgateSynthOutput, MatchgateError> {
    let image = GateSet::matchgate_image();
    let parts = segs
        .par_iter()
        .map(|s| lower_segment(s, n, backend, &image))
        .collect::<Result<Vec<_>, _>>()?;
    let mut gates = Vec::new();
    let (mut blocks, mut error_sum) = (0, 0.0);
    for p in parts {
        gates.extend(p.gates);
        blocks += p.synthesized as usize;
        error_sum += p.error;
    }
    let circuit = Circuit::from_parts(n, gates);
    Ok(MatchgateSynthOutput {
        t_count: circuit.hat_t_count(),
        circuit,
        blocks,
        error_sum,
    })
}

fn initial_segments(c: &Circuit) -> Result<Vec<Segment>, MatchgateError> {
    let ok = |g: &Gate| match g.kind {
        GateKind::Rz(_) => true,
        GateKind::Rxx(_) => adjacent(g).is_some(),
        _ => false,
    };
    if let Some(g) = c.gates().iter().find(|g| !ok(g)) {
        return Err(MatchgateError::NotMatchgate(g.to_string()));
    }
    Ok(c.gates().iter().map(Segment::of).collect())
}

/// Compiles a matchgate circuit with maximal pair runs (one merge per neighbouring
/// pair, left to right) and wire runs fused.
pub fn synth_matchgate(c: &Circuit, backend: &dyn SynthBackend) -> Result<MatchgateSynthOutput, MatchgateError> {
    let mut segs = initial_segments(c)?;
    for a in 0..c.n_qubits().saturating_sub(1) {
        segs = merge_pair(&segs, a).0;
    }
    lower(&merge_wires(segs), c.n_qubits(), backend)
}

/// Plan objective for matchgate circuits: the baseline synthesizes every gate on its own
/// (wire runs fused when `merge_1q`), and each action is a pair merge on neighbours.
pub struct MatchgateObjective {
    n: usize,
    fingerprint: u64,
    config: u64,
    backend: Arc<dyn SynthBackend>,
    merge_1q: bool,
    plans: Arc<PlanMemo>,
    base: Arc<Vec<Segment>>,
    segs: Namespace<Plan, Vec<Segment>>,
    evals: AtomicU64,
}

impl MatchgateObjective {
    pub fn new(c: &Circuit, backend: Arc<dyn SynthBackend>, merge_1q: bool) -> Result<MatchgateObjective, MatchgateError> {
        MatchgateObjective::with_memo(c, backend, merge_1q, Arc::new(PlanMemo::default()))
    }

    pub fn with_memo(c: &Circuit, backend: Arc<dyn SynthBackend>, merge_1q: bool, plans: Arc<PlanMemo>) -> Result<MatchgateObjective, MatchgateError> {
        let c = c.remove_identities();
        let config = backend.config_hash() ^ fnv1a(*b"matchgate") ^ (merge_1q as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Ok(MatchgateObjective {
            n: c.n_qubits(),
            fingerprint: circuit_fingerprint(&c),
            config,
            backend,
            merge_1q,
            plans,
            base: Arc::new(initial_segments(&c)?),
            segs: Namespace::default(),
            evals: AtomicU64::new(0),
        })
    }

    fn segments(&self, plan: &Plan) -> Arc<Vec<Segment>> {
        if plan.is_empty() {
            return self.base.clone();
        }
        if let Some(s) = self.segs.get(plan) {
            return s;
        }
        let parent = self.segments(&plan.prefix(plan.len() - 1));
        let (i, j) = plan.pairs()[plan.len() - 1];
        let s = if j == i + 1 { Arc::new(merge_pair(&parent, i).0) } else { parent };
        self.segs.put(plan.clone(), s.clone());
        s
    }

    /// Full synthesis output under `plan`.
    pub fn synthesize(&self, plan: &Plan) -> Result<MatchgateSynthOutput, MatchgateError> {
        let segs = (*self.segments(plan)).clone();
        let segs = if self.merge_1q { merge_wires(segs) } else { segs };
        lower(&segs, self.n, self.backend.as_ref())
    }
}

impl PlanObjective for MatchgateObjective {
    fn n_qubits(&self) -> usize {
        self.n
    }

    fn evaluate(&self, plan: &Plan) -> Result<Arc<Evaluation>, SearchError> {
        let key = PlanKey {
            circuit: self.fingerprint,
            config: self.config,
            plan: plan.clone(),
        };
        if let Some(e) = self.plans.get(&key) {
            return Ok(e);
        }
        self.evals.fetch_add(1, Ordering::Relaxed);
        let out = self.synthesize(plan)?;
        let mut per_qubit_t = vec![0; self.n];
        for g in out.circuit.gates().iter().filter(|g| g.is_hat_t()) {
            per_qubit_t[g.qubits[0]] += 1;
        }
        let e = Arc::new(Evaluation {
            t_count: out.t_count,
            per_qubit_t,
            blocks: out.blocks,
            error_sum: out.error_sum,
            circuit: out.circuit,
        });
        self.plans.put(key, e.clone());
        Ok(e)
    }

    fn candidate_pairs(&self, plan: &Plan) -> Result<Vec<(usize, usize)>, SearchError> {
        let segs = self.segments(plan);
        Ok((0..self.n.saturating_sub(1))
            .filter(|&a| merge_pair(&segs, a).1 > 0)
            .map(|a| (a, a + 1))
            .collect())
    }

    fn mergeable(&self, plan: &Plan, i: usize, j: usize) -> Result<usize, SearchError> {
        let (i, j) = (i.min(j), i.max(j));
        if j != i + 1 {
            return Ok(0);
        }
        Ok(merge_pair(&self.segments(plan), i).1)
    }

    fn evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }
}
