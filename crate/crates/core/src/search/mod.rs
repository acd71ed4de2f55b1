//! Plan search: objectives, greedy search and refinement, exhaustive search, and the
//! sequential-decision environment in [`env`].

pub mod env;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{json::to_json, Circuit, Gate, GateKind};
use crate::merge::{mergeable_two_qubit_gates, two_qubit_merge, MergeError, Plan};
use crate::synth::memo::{fnv1a, Namespace};
use crate::synth::{synthesize_merged, PipelineError, SynthBackend};

pub use env::{policy_search, Env, Observation, PolicyConfig, PolicyOptimizer};

/// Default cap on the number of plans brute force may enumerate.
pub const DEFAULT_CEILING: u64 = 1_000_000;
/// Merged circuits are cached for at most this many plans per objective.
const MERGED_CACHE_CAP: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("enumeration needs {plans} plans, above the ceiling {ceiling}")]
    CeilingExceeded { plans: u64, ceiling: u64 },
    #[error("pair ({0}, {1}) is not a valid action")]
    InvalidAction(usize, usize),
    #[error("{0}")]
    Other(String),
}

impl From<MergeError> for SearchError {
    fn from(e: MergeError) -> Self {
        SearchError::Pipeline(PipelineError::Merge(e))
    }
}

/// Result of synthesizing a circuit under one plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub t_count: usize,
    pub per_qubit_t: Vec<usize>,
    pub circuit: Circuit,
    /// Locally synthesized blocks (K of the `K * eps` bound).
    pub blocks: usize,
    pub error_sum: f64,
}

/// Something plans can be scored against. Implementations memoize at plan level.
pub trait PlanObjective: Sync {
    fn n_qubits(&self) -> usize;
    fn evaluate(&self, plan: &Plan) -> Result<Arc<Evaluation>, SearchError>;
    /// Pairs worth merging once `plan` has been applied.
    fn candidate_pairs(&self, plan: &Plan) -> Result<Vec<(usize, usize)>, SearchError>;
    /// How many two-qubit gates merging `(i, j)` after `plan` would combine.
    fn mergeable(&self, plan: &Plan, i: usize, j: usize) -> Result<usize, SearchError>;
    /// Plan evaluations that missed the plan-level memo.
    fn evaluations(&self) -> u64;
}

/// Stable 64-bit fingerprint of a circuit (exact float bits included).
pub fn circuit_fingerprint(c: &Circuit) -> u64 {
    fnv1a(to_json(c).into_bytes())
}

/// Plan-level memo key: circuit, configuration and plan.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PlanKey {
    pub circuit: u64,
    pub config: u64,
    pub plan: Plan,
}

pub type PlanMemo = Namespace<PlanKey, Evaluation>;

/// Prefix-sharing cache of `apply_plan` results.
struct MergedCache {
    base: Arc<Circuit>,
    map: Namespace<Plan, Circuit>,
}

impl MergedCache {
    fn new(base: Circuit) -> MergedCache {
        MergedCache {
            base: Arc::new(base),
            map: Namespace::default(),
        }
    }

    fn get(&self, plan: &Plan) -> Result<Arc<Circuit>, MergeError> {
        if plan.is_empty() {
            return Ok(self.base.clone());
        }
        if let Some(c) = self.map.get(plan) {
            return Ok(c);
        }
        let parent = self.get(&plan.prefix(plan.len() - 1))?;
        let (i, j) = plan.pairs()[plan.len() - 1];
        let c = Arc::new(two_qubit_merge(&parent, i, j)?);
        if self.map.len() < MERGED_CACHE_CAP {
            self.map.put(plan.clone(), c.clone());
        }
        Ok(c)
    }
}

/// T-count of the Clifford+T pipeline (identity removal, plan, local synthesis).
pub struct CliffordTObjective {
    fingerprint: u64,
    config: u64,
    backend: Arc<dyn SynthBackend>,
    merge_1q: bool,
    plans: Arc<PlanMemo>,
    merged: MergedCache,
    evals: AtomicU64,
}

impl CliffordTObjective {
    pub fn new(c: &Circuit, backend: Arc<dyn SynthBackend>, merge_1q: bool) -> CliffordTObjective {
        CliffordTObjective::with_memo(c, backend, merge_1q, Arc::new(PlanMemo::default()))
    }

    /// Shares a plan-level memo, e.g. across suite cells.
    pub fn with_memo(c: &Circuit, backend: Arc<dyn SynthBackend>, merge_1q: bool, plans: Arc<PlanMemo>) -> CliffordTObjective {
        let config = backend.config_hash() ^ (merge_1q as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        CliffordTObjective {
            fingerprint: circuit_fingerprint(c),
            config,
            backend,
            merge_1q,
            plans,
            merged: MergedCache::new(c.remove_identities()),
            evals: AtomicU64::new(0),
        }
    }

    pub fn backend(&self) -> &Arc<dyn SynthBackend> {
        &self.backend
    }

    pub fn merged(&self, plan: &Plan) -> Result<Arc<Circuit>, SearchError> {
        Ok(self.merged.get(plan)?)
    }
}

impl PlanObjective for CliffordTObjective {
    fn n_qubits(&self) -> usize {
        self.merged.base.n_qubits()
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
        let merged = self.merged(plan)?;
        let out = synthesize_merged(&merged, self.backend.as_ref(), self.merge_1q)?;
        let e = Arc::new(Evaluation {
            t_count: out.t_count,
            per_qubit_t: out.circuit.per_qubit_t_count(),
            blocks: out.blocks(),
            error_sum: out.error_sum,
            circuit: out.circuit,
        });
        self.plans.put(key, e.clone());
        Ok(e)
    }

    fn candidate_pairs(&self, plan: &Plan) -> Result<Vec<(usize, usize)>, SearchError> {
        Ok(self.merged(plan)?.interacting_pairs())
    }

    fn mergeable(&self, plan: &Plan, i: usize, j: usize) -> Result<usize, SearchError> {
        Ok(mergeable_two_qubit_gates(&*self.merged(plan)?, i, j))
    }

    fn evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }
}

/// One committed action with its reward (T-count decrease) and the T-count after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub action: (usize, usize),
    pub reward: i64,
    pub t_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub plan: Plan,
    pub t_count_initial: usize,
    pub t_count_final: usize,
    /// Plan evaluations performed (plan-memo misses).
    pub evaluations: u64,
    pub trajectory: Vec<TrajectoryStep>,
    /// Plans scored, memo hits included.
    #[serde(default)]
    pub visited: u64,
}

impl SearchOutcome {
    pub fn reduction(&self) -> f64 {
        if self.t_count_initial == 0 {
            0.0
        } else {
            (self.t_count_initial as f64 - self.t_count_final as f64) / self.t_count_initial as f64
        }
    }
}

/// Greedy completion starting from `start`: each round applies every candidate pair
/// tentatively and commits the one with the largest strict T-count decrease (lowest
/// pair on ties), until none decreases it.
pub fn greedy_from(obj: &dyn PlanObjective, start: &Plan) -> Result<SearchOutcome, SearchError> {
    let evals0 = obj.evaluations();
    let t0 = obj.evaluate(&Plan::new())?.t_count;
    let mut plan = start.clone();
    let mut cur = obj.evaluate(&plan)?.t_count;
    let mut trajectory = Vec::new();
    let mut visited = 2;
    loop {
        let cands = obj.candidate_pairs(&plan)?;
        visited += cands.len() as u64;
        let scored: Vec<((usize, usize), usize)> = cands
            .par_iter()
            .map(|&p| obj.evaluate(&plan.with(p)).map(|e| (p, e.t_count)))
            .collect::<Result<_, _>>()?;
        let best = scored.into_iter().filter(|&(_, t)| t < cur).min_by_key(|&(p, t)| (t, p));
        let Some((p, t)) = best else { break };
        plan.push(p);
        trajectory.push(TrajectoryStep {
            action: p,
            reward: cur as i64 - t as i64,
            t_count: t,
        });
        cur = t;
    }
    Ok(SearchOutcome {
        plan,
        t_count_initial: t0,
        t_count_final: cur,
        evaluations: obj.evaluations() - evals0,
        trajectory,
        visited,
    })
}

pub fn greedy_search(obj: &dyn PlanObjective) -> Result<SearchOutcome, SearchError> {
    greedy_from(obj, &Plan::new())
}

/// Best greedy completion over all prefixes of `plan`, or `plan` itself if nothing
/// beats it. With a deterministic objective the result is never worse than either
/// `plan` or plain greedy search (the empty prefix).
pub fn greedy_refine(obj: &dyn PlanObjective, plan: &Plan) -> Result<SearchOutcome, SearchError> {
    let evals0 = obj.evaluations();
    let t0 = obj.evaluate(&Plan::new())?.t_count;
    let mut best_plan = plan.clone();
    let mut best_t = obj.evaluate(plan)?.t_count;
    let mut visited = 1;
    for k in 0..=plan.len() {
        let g = greedy_from(obj, &plan.prefix(k))?;
        visited += g.visited;
        if g.t_count_final < best_t {
            best_t = g.t_count_final;
            best_plan = g.plan;
        }
    }
    Ok(SearchOutcome {
        trajectory: replay(obj, &best_plan)?,
        plan: best_plan,
        t_count_initial: t0,
        t_count_final: best_t,
        evaluations: obj.evaluations() - evals0,
        visited,
    })
}

/// Per-action rewards along `plan`.
pub fn replay(obj: &dyn PlanObjective, plan: &Plan) -> Result<Vec<TrajectoryStep>, SearchError> {
    let mut prev = obj.evaluate(&Plan::new())?.t_count;
    let mut out = Vec::with_capacity(plan.len());
    for k in 1..=plan.len() {
        let t = obj.evaluate(&plan.prefix(k))?.t_count;
        out.push(TrajectoryStep {
            action: plan.pairs()[k - 1],
            reward: prev as i64 - t as i64,
            t_count: t,
        });
        prev = t;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct BruteForceConfig {
    pub max_len: usize,
    pub ceiling: u64,
    /// Qubit permutations under which the circuit is invariant; plans are enumerated
    /// only when lexicographically minimal in their orbit.
    pub symmetries: Vec<Vec<usize>>,
}

impl BruteForceConfig {
    pub fn new(max_len: usize) -> BruteForceConfig {
        BruteForceConfig {
            max_len,
            ceiling: DEFAULT_CEILING,
            symmetries: Vec::new(),
        }
    }

    pub fn with_symmetries(mut self, s: Vec<Vec<usize>>) -> BruteForceConfig {
        self.symmetries = s;
        self
    }
}

fn map_plan(plan: &[(usize, usize)], perm: &[usize]) -> Vec<(usize, usize)> {
    plan.iter()
        .map(|&(i, j)| {
            let (a, b) = (perm[i], perm[j]);
            (a.min(b), a.max(b))
        })
        .collect()
}

fn is_orbit_minimal(plan: &[(usize, usize)], syms: &[Vec<usize>]) -> bool {
    syms.iter().all(|p| map_plan(plan, p).as_slice() >= plan)
}

/// Exhaustive search over plans of length at most `max_len` drawn from the circuit's
/// interacting pairs. Immediate repeats are skipped (merging is idempotent), and with
/// symmetries only orbit-minimal plans are scored.
pub fn brute_force_search(obj: &dyn PlanObjective, cfg: &BruteForceConfig) -> Result<SearchOutcome, SearchError> {
    let evals0 = obj.evaluations();
    let pairs = obj.candidate_pairs(&Plan::new())?;
    let p = pairs.len() as u64;
    let mut total: u64 = 0;
    let mut layer: u64 = 1;
    for _ in 0..=cfg.max_len {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(p);
    }
    if total > cfg.ceiling {
        return Err(SearchError::CeilingExceeded {
            plans: total,
            ceiling: cfg.ceiling,
        });
    }
    let t0 = obj.evaluate(&Plan::new())?.t_count;
    let mut best = (t0, Plan::new());
    let mut visited = 1u64;
    let mut stack: Vec<Plan> = vec![Plan::new()];
    while let Some(plan) = stack.pop() {
        if plan.len() == cfg.max_len {
            continue;
        }
        // reverse so the stack pops pairs in ascending order
        for &pair in pairs.iter().rev() {
            if plan.pairs().last() == Some(&pair) {
                continue;
            }
            let next = plan.with(pair);
            if !is_orbit_minimal(next.pairs(), &cfg.symmetries) {
                continue;
            }
            stack.push(next);
        }
        if !plan.is_empty() {
            visited += 1;
            let t = obj.evaluate(&plan)?.t_count;
            if (t, plan.len(), &plan) < (best.0, best.1.len(), &best.1) {
                best = (t, plan);
            }
        }
    }
    Ok(SearchOutcome {
        trajectory: replay(obj, &best.1)?,
        plan: best.1,
        t_count_initial: t0,
        t_count_final: best.0,
        evaluations: obj.evaluations() - evals0,
        visited,
    })
}

/// Layer-sorted form used to compare a circuit with its relabelings: gates bucketed by
/// ASAP layer, each bucket sorted, symmetric gates with sorted qubits.
fn layered_form(c: &Circuit) -> Vec<Vec<String>> {
    let mut depth = vec![0usize; c.n_qubits()];
    let mut layers: Vec<Vec<String>> = Vec::new();
    for g in c.gates() {
        let l = g.qubits.iter().map(|&q| depth[q]).max().unwrap_or(0);
        for &q in g.qubits.iter() {
            depth[q] = l + 1;
        }
        if layers.len() <= l {
            layers.resize(l + 1, Vec::new());
        }
        let mut qs: Vec<usize> = g.qubits.to_vec();
        if matches!(g.kind, GateKind::Rxx(_)) {
            qs.sort_unstable();
        }
        layers[l].push(format!("{:?}@{:?}", g.kind, qs));
    }
    for l in layers.iter_mut() {
        l.sort();
    }
    layers
}

/// Non-trivial translations (mod n) and reflections of the qubit line under which the
/// layered form of `c` is unchanged.
///
/// Merges are positional, so reordering commuting gates inside a layer can in principle
/// change merge results; the reduction is a heuristic and callers that need certainty
/// should compare against the unreduced search.
pub fn circuit_symmetries(c: &Circuit) -> Vec<Vec<usize>> {
    let n = c.n_qubits();
    let base = layered_form(c);
    let mut out = Vec::new();
    for reflect in [false, true] {
        for shift in 0..n {
            if shift == 0 && !reflect {
                continue;
            }
            let perm: Vec<usize> = (0..n)
                .map(|q| {
                    let r = if reflect { n - 1 - q } else { q };
                    (r + shift) % n
                })
                .collect();
            let relabeled: Vec<Gate> = c.gates().iter().map(|g| g.remapped(&perm)).collect();
            if layered_form(&Circuit::from_parts(n, relabeled)) == base {
                out.push(perm);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::tests::pathological;
    use crate::synth::{BackendKind, LocalBackend, OneQubitMethod};

    fn objective(c: &Circuit) -> CliffordTObjective {
        let b = LocalBackend::with_method(BackendKind::KakEnum, OneQubitMethod::Enum { budget: 18 }, 0.05);
        CliffordTObjective::new(c, Arc::new(b), true)
    }

    #[test]
    fn clifford_circuit_needs_no_plan() {
        let c = Circuit::new(2, vec![Gate::cx(0, 1)]).unwrap();
        let g = greedy_search(&objective(&c)).unwrap();
        assert!(g.plan.is_empty());
        assert_eq!(g.t_count_final, 0);
    }

    #[test]
    fn greedy_matches_brute_force_on_pathological() {
        let c = pathological(0.41, 2);
        let obj = objective(&c);
        let g = greedy_search(&obj).unwrap();
        assert_eq!(g.plan, Plan::from(vec![(0, 1)]));
        assert_eq!(g.t_count_final, 0);
        let b = brute_force_search(&obj, &BruteForceConfig::new(2)).unwrap();
        assert_eq!(b.t_count_final, g.t_count_final);
        assert_eq!(b.plan, Plan::from(vec![(0, 1)]));
        let steps: Vec<usize> = g.trajectory.iter().map(|s| s.t_count).collect();
        assert!(steps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn disjoint_rz_layers_need_no_pair_actions() {
        let c = Circuit::new(
            2,
            vec![Gate::rz(0.3, 0), Gate::rz(0.8, 1), Gate::rz(0.2, 0), Gate::rz(1.1, 1)],
        )
        .unwrap();
        let g = greedy_search(&objective(&c)).unwrap();
        assert!(g.plan.is_empty());
    }

    #[test]
    fn refine_examples() {
        let c = pathological(0.41, 2);
        let obj = objective(&c);
        let g = greedy_search(&obj).unwrap();
        let r0 = greedy_refine(&obj, &Plan::new()).unwrap();
        assert_eq!((r0.plan.clone(), r0.t_count_final), (g.plan.clone(), g.t_count_final));
        let opt = greedy_refine(&obj, &g.plan).unwrap();
        assert_eq!(opt.plan, g.plan);
        let bad = Plan::from(vec![(1, 2)]);
        let t_bad = obj.evaluate(&bad).unwrap().t_count;
        let r = greedy_refine(&obj, &bad).unwrap();
        assert!(r.t_count_final < t_bad);
        assert_eq!(r.plan, Plan::from(vec![(0, 1)]));
    }

    #[test]
    fn brute_force_limits() {
        let c = pathological(0.41, 2);
        let obj = objective(&c);
        let b = brute_force_search(&obj, &BruteForceConfig::new(0)).unwrap();
        assert!(b.plan.is_empty());
        let mut cfg = BruteForceConfig::new(30);
        cfg.ceiling = 1000;
        assert!(matches!(brute_force_search(&obj, &cfg), Err(SearchError::CeilingExceeded { .. })));
    }

    #[test]
    fn plan_memo_avoids_recomputation() {
        let c = pathological(0.41, 2);
        let obj = objective(&c);
        let p = Plan::from(vec![(1, 2), (0, 1)]);
        obj.evaluate(&p).unwrap();
        let n = obj.evaluations();
        obj.evaluate(&p).unwrap();
        assert_eq!(obj.evaluations(), n);
    }

    #[test]
    fn symmetric_brickwork_prunes_but_keeps_optimum() {
        // uniform angles on a ring of 4: invariant under even shifts and reflections
        let mut gates = Vec::new();
        for _ in 0..2 {
            for q in 0..4 {
                gates.push(Gate::rz(0.3, q));
            }
            gates.push(Gate::rxx(0.7, 0, 1));
            gates.push(Gate::rxx(0.7, 2, 3));
            for q in 0..4 {
                gates.push(Gate::rx(0.5, q));
            }
            gates.push(Gate::rxx(0.7, 1, 2));
            gates.push(Gate::rxx(0.7, 3, 0));
        }
        let c = Circuit::new(4, gates).unwrap();
        let syms = circuit_symmetries(&c);
        assert!(!syms.is_empty());
        let obj = objective(&c);
        let full = brute_force_search(&obj, &BruteForceConfig::new(2)).unwrap();
        let red = brute_force_search(&obj, &BruteForceConfig::new(2).with_symmetries(syms)).unwrap();
        assert!(red.visited < full.visited);
        assert_eq!(red.t_count_final, full.t_count_final);
    }

    #[test]
    fn outcome_json_shape() {
        let c = pathological(0.41, 2);
        let g = greedy_search(&objective(&c)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&g).unwrap();
        assert_eq!(v["plan"], serde_json::json!([[0, 1]]));
        for k in ["t_count_initial", "t_count_final", "evaluations", "trajectory"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
