//! Experiment harness: strategies, verification, run reports and suites.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchgen::matchgate::in_matchgate_target_set;
use crate::benchgen::{slice_layers, MatchgateObjective, TaskSpec};
use crate::circuit::{compute_unitary_with_limit, distance, Circuit, CircuitError, UnitaryMatrix};
use crate::merge::Plan;
use crate::search::env::{CrossEntropy, SoftmaxPolicyGradient, UniformRandom};
use crate::search::{
    brute_force_search, circuit_symmetries, greedy_refine, greedy_search, policy_search, BruteForceConfig, CliffordTObjective,
    Env, PlanMemo, PlanObjective, PolicyConfig, PolicyOptimizer, SearchError, SearchOutcome, DEFAULT_CEILING,
};
use crate::synth::memo::fnv1a;
use crate::synth::pipeline::is_clifford_t_circuit;
use crate::synth::{rz_enum, sk, BackendKind, LocalBackend, OneQubitMethod, SynthBackend};

pub const REPORT_SCHEMA: u32 = 1;
/// Widest circuit whose end-to-end distance is checked densely.
pub const DENSE_CHECK_LIMIT: usize = 8;
pub const DEFAULT_EPSILON: f64 = 0.01;
/// Absolute slack on `distance <= K eps` for floating-point noise in the simulation.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    Greedy,
    Search,
    Refine,
    Brute,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::None => "none",
            Strategy::Greedy => "greedy",
            Strategy::Search => "search",
            Strategy::Refine => "refine",
            Strategy::Brute => "brute",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Strategy::None),
            "greedy" => Ok(Strategy::Greedy),
            "search" => Ok(Strategy::Search),
            "refine" => Ok(Strategy::Refine),
            "brute" => Ok(Strategy::Brute),
            _ => Err(format!("unknown strategy '{s}'")),
        }
    }
}

/// Learner behind the `search` strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Random,
    Cem,
    Pg,
}

impl FromStr for LearnerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(LearnerKind::Random),
            "cem" => Ok(LearnerKind::Cem),
            "pg" => Ok(LearnerKind::Pg),
            _ => Err(format!("unknown learner '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub epsilon: f64,
    pub strategies: Vec<Strategy>,
    /// Fuse single-qubit runs after the plan (both in the baseline and under plans).
    pub merge_1q: bool,
    /// T-count budget of the enumeration tables.
    pub budget: Option<u32>,
    pub learner: LearnerKind,
    pub policy: PolicyConfig,
    pub brute_max_len: usize,
    pub brute_ceiling: u64,
    pub sim_limit: usize,
    /// Layer-wise mode: optimize slices of this many entangling layers independently.
    pub layer_wise: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendKind::KakEnum,
            epsilon: DEFAULT_EPSILON,
            strategies: vec![Strategy::None, Strategy::Greedy],
            merge_1q: true,
            budget: None,
            learner: LearnerKind::Cem,
            policy: PolicyConfig::default(),
            brute_max_len: 4,
            brute_ceiling: DEFAULT_CEILING,
            sim_limit: DENSE_CHECK_LIMIT,
            layer_wise: None,
        }
    }
}

impl RunConfig {
    pub fn hash(&self) -> u64 {
        fnv1a(serde_json::to_string(self).expect("config serializes").into_bytes())
    }

    pub fn make_backend(&self) -> LocalBackend {
        make_backend(self.backend, self.epsilon, self.budget)
    }
}

pub fn make_backend(kind: BackendKind, eps: f64, budget: Option<u32>) -> LocalBackend {
    match kind {
        BackendKind::KakEnum => LocalBackend::with_method(
            kind,
            OneQubitMethod::Enum {
                budget: budget.unwrap_or(rz_enum::DEFAULT_BUDGET),
            },
            eps,
        ),
        BackendKind::KakSk => LocalBackend::with_method(
            kind,
            OneQubitMethod::Sk {
                depth: sk::DEFAULT_DEPTH,
                base_length: sk::DEFAULT_BASE_LENGTH,
            },
            eps,
        ),
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shared state for runs with one backend configuration.
#[derive(Clone)]
pub struct RunContext {
    pub backend: Arc<dyn SynthBackend>,
    pub plans: Arc<PlanMemo>,
}

impl RunContext {
    pub fn new(backend: Arc<dyn SynthBackend>) -> RunContext {
        RunContext {
            backend,
            plans: Arc::new(PlanMemo::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub distance: f64,
    pub bound: f64,
    pub bound_ok: bool,
}

/// Distance between two circuits up to phase, checked against `K eps`.
pub fn verify_circuit(original: &Circuit, synthesized: &Circuit, eps: f64, k: usize, limit: usize) -> Result<Verification, CircuitError> {
    let u = compute_unitary_with_limit(original, limit)?;
    verify_against(&u, synthesized, eps, k, limit)
}

fn verify_against(u: &UnitaryMatrix, synthesized: &Circuit, eps: f64, k: usize, limit: usize) -> Result<Verification, CircuitError> {
    let v = compute_unitary_with_limit(synthesized, limit)?;
    let d = distance(u, &v)?;
    let bound = k as f64 * eps;
    Ok(Verification {
        distance: d,
        bound,
        bound_ok: d <= bound + BOUND_SLACK,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub t_count: usize,
    pub plan: Plan,
    pub plan_length: usize,
    pub wall_time: f64,
    pub evaluations: u64,
    /// Locally synthesized blocks (K).
    pub blocks: usize,
    pub error_sum: f64,
    pub bound: f64,
    pub distance: Option<f64>,
    pub bound_ok: Option<bool>,
    pub gate_set_ok: bool,
    #[serde(with = "crate::circuit::json::serde_circuit")]
    pub circuit: Circuit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub distance_no_presyn: Option<f64>,
    pub distance_presyn: Option<f64>,
    /// `K eps` for the pre-synthesized circuit.
    pub bound: Option<f64>,
    /// `distance_no_presyn / distance_presyn`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub task: Option<u64>,
    pub policy: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub task: String,
    pub n_qubits: usize,
    pub matchgate: bool,
    pub backend: String,
    pub epsilon: f64,
    pub merge_1q: bool,
    pub layer_wise: Option<usize>,
    pub seeds: Seeds,
    pub config_hash: String,
    pub t_count_initial: usize,
    pub results: Vec<StrategyResult>,
    pub errors: ErrorMetrics,
    /// Backend cache misses during this run.
    pub synth_calls: u64,
    pub partial: bool,
    pub failures: Vec<String>,
}

impl RunReport {
    pub fn result(&self, s: Strategy) -> Option<&StrategyResult> {
        self.results.iter().find(|r| r.strategy == s)
    }

    /// Percentage reduction of strategy `s` against the baseline.
    pub fn reduction_pct(&self, s: Strategy) -> Option<f64> {
        let r = self.result(s)?;
        if self.t_count_initial == 0 {
            return Some(0.0);
        }
        Some(100.0 * (self.t_count_initial as f64 - r.t_count as f64) / self.t_count_initial as f64)
    }

    /// Recounts T gates in every stored circuit and compares with the reported numbers.
    pub fn check_integrity(&self) -> bool {
        self.results.iter().all(|r| {
            let t = if self.matchgate { r.circuit.hat_t_count() } else { r.circuit.t_count() };
            t == r.t_count && r.plan_length == r.plan.len()
        })
    }

    pub fn gate_sets_ok(&self) -> bool {
        self.results.iter().all(|r| r.gate_set_ok)
    }

    pub fn bounds_ok(&self) -> bool {
        self.results.iter().all(|r| r.bound_ok != Some(false))
    }
}

fn objective<'a>(c: &Circuit, matchgate: bool, ctx: &RunContext, cfg: &RunConfig) -> Result<Box<dyn PlanObjective + 'a>, SearchError> {
    Ok(if matchgate {
        Box::new(MatchgateObjective::with_memo(c, ctx.backend.clone(), cfg.merge_1q, ctx.plans.clone())?)
    } else {
        Box::new(CliffordTObjective::with_memo(c, ctx.backend.clone(), cfg.merge_1q, ctx.plans.clone()))
    })
}

fn learner(cfg: &RunConfig, obj: &dyn PlanObjective) -> Result<Box<dyn PolicyOptimizer>, SearchError> {
    let env = Env::new(obj, cfg.policy.horizon)?;
    let (na, h) = (env.n_actions(), env.horizon());
    Ok(match cfg.learner {
        LearnerKind::Random => Box::new(UniformRandom),
        LearnerKind::Cem => Box::new(CrossEntropy::new(na, h)),
        LearnerKind::Pg => Box::new(SoftmaxPolicyGradient::new(obj.n_qubits(), na, h)),
    })
}

/// Plans for every requested strategy on one objective, with wall times.
fn plan_strategies(obj: &dyn PlanObjective, c: &Circuit, cfg: &RunConfig) -> Result<Vec<(Strategy, SearchOutcome, f64)>, SearchError> {
    let mut out: Vec<(Strategy, SearchOutcome, f64)> = Vec::new();
    let mut search_plan: Option<SearchOutcome> = None;
    let mut run_search = |obj: &dyn PlanObjective| -> Result<SearchOutcome, SearchError> {
        if let Some(s) = &search_plan {
            return Ok(s.clone());
        }
        let mut l = learner(cfg, obj)?;
        let s = policy_search(obj, l.as_mut(), &cfg.policy)?;
        search_plan = Some(s.clone());
        Ok(s)
    };
    for &s in &cfg.strategies {
        let start = Instant::now();
        let outcome = match s {
            Strategy::None => {
                let t = obj.evaluate(&Plan::new())?.t_count;
                SearchOutcome {
                    plan: Plan::new(),
                    t_count_initial: t,
                    t_count_final: t,
                    evaluations: 0,
                    trajectory: Vec::new(),
                    visited: 1,
                }
            }
            Strategy::Greedy => greedy_search(obj)?,
            Strategy::Search => run_search(obj)?,
            Strategy::Refine => {
                let base = run_search(obj)?;
                let start = Instant::now();
                let r = greedy_refine(obj, &base.plan)?;
                out.push((s, r, start.elapsed().as_secs_f64()));
                continue;
            }
            Strategy::Brute => {
                let bf = BruteForceConfig {
                    ceiling: cfg.brute_ceiling,
                    ..BruteForceConfig::new(cfg.brute_max_len)
                }
                .with_symmetries(circuit_symmetries(c));
                brute_force_search(obj, &bf)?
            }
        };
        out.push((s, outcome, start.elapsed().as_secs_f64()));
    }
    Ok(out)
}

struct Piece {
    t_count: usize,
    plan: Plan,
    evaluations: u64,
    wall: f64,
    blocks: usize,
    error_sum: f64,
    circuit: Circuit,
}

fn run_slices(c: &Circuit, matchgate: bool, cfg: &RunConfig, ctx: &RunContext) -> Result<(usize, BTreeMap<Strategy, Piece>), SearchError> {
    let slices = match cfg.layer_wise {
        Some(k) => slice_layers(c, k),
        None => vec![c.clone()],
    };
    let mut t0 = 0;
    let mut acc: BTreeMap<Strategy, Piece> = BTreeMap::new();
    for s in &slices {
        let obj = objective(s, matchgate, ctx, cfg)?;
        t0 += obj.evaluate(&Plan::new())?.t_count;
        for (strategy, outcome, wall) in plan_strategies(obj.as_ref(), s, cfg)? {
            let start = Instant::now();
            let e = obj.evaluate(&outcome.plan)?;
            let wall = wall + start.elapsed().as_secs_f64();
            let p = acc.entry(strategy).or_insert_with(|| Piece {
                t_count: 0,
                plan: Plan::new(),
                evaluations: 0,
                wall: 0.0,
                blocks: 0,
                error_sum: 0.0,
                circuit: Circuit::empty(c.n_qubits()),
            });
            p.t_count += e.t_count;
            p.plan.0.extend(outcome.plan.pairs());
            p.evaluations += outcome.evaluations;
            p.wall += wall;
            p.blocks += e.blocks;
            p.error_sum += e.error_sum;
            p.circuit = p.circuit.concat(&e.circuit);
        }
    }
    Ok((t0, acc))
}

/// Runs every configured strategy on `c`. Failures are recorded in the report
/// (`partial`) rather than returned.
pub fn run_circuit(label: &str, c: &Circuit, matchgate: bool, task_seed: Option<u64>, cfg: &RunConfig, ctx: &RunContext) -> RunReport {
    let calls0 = ctx.backend.stats();
    let mut report = RunReport {
        schema: REPORT_SCHEMA,
        task: label.to_string(),
        n_qubits: c.n_qubits(),
        matchgate,
        backend: ctx.backend.id(),
        epsilon: ctx.backend.epsilon(),
        merge_1q: cfg.merge_1q,
        layer_wise: cfg.layer_wise,
        seeds: Seeds {
            task: task_seed,
            policy: cfg.policy.seed,
        },
        config_hash: format!("{:016x}", cfg.hash() ^ ctx.backend.config_hash()),
        t_count_initial: 0,
        results: Vec::new(),
        errors: ErrorMetrics::default(),
        synth_calls: 0,
        partial: false,
        failures: Vec::new(),
    };
    let (t0, pieces) = match run_slices(c, matchgate, cfg, ctx) {
        Ok(x) => x,
        Err(e) => {
            report.partial = true;
            report.failures.push(e.to_string());
            return report;
        }
    };
    report.t_count_initial = t0;
    let eps = ctx.backend.epsilon();
    let original = if c.n_qubits() <= cfg.sim_limit {
        compute_unitary_with_limit(c, cfg.sim_limit).ok()
    } else {
        None
    };
    for (strategy, p) in pieces {
        let gate_set_ok = if matchgate {
            p.circuit.gates().iter().all(in_matchgate_target_set)
        } else {
            is_clifford_t_circuit(&p.circuit)
        };
        if !gate_set_ok {
            report.failures.push(format!("{strategy}: output leaves the target gate set"));
        }
        let v = original.as_ref().map(|u| verify_against(u, &p.circuit, eps, p.blocks, cfg.sim_limit)).transpose();
        let v = match v {
            Ok(v) => v,
            Err(e) => {
                report.failures.push(format!("{strategy}: {e}"));
                None
            }
        };
        report.results.push(StrategyResult {
            strategy,
            t_count: p.t_count,
            plan_length: p.plan.len(),
            plan: p.plan,
            wall_time: p.wall,
            evaluations: p.evaluations,
            blocks: p.blocks,
            error_sum: p.error_sum,
            bound: p.blocks as f64 * eps,
            distance: v.as_ref().map(|v| v.distance),
            bound_ok: v.as_ref().map(|v| v.bound_ok),
            gate_set_ok,
            circuit: p.circuit,
        });
    }
    report.results.sort_by_key(|r| cfg.strategies.iter().position(|s| *s == r.strategy));
    let baseline = report.result(Strategy::None).and_then(|r| r.distance);
    // the pre-synthesized reference is the lowest-T strategy other than the baseline
    let best = report
        .results
        .iter()
        .filter(|r| r.strategy != Strategy::None)
        .min_by_key(|r| r.t_count);
    report.errors = ErrorMetrics {
        distance_no_presyn: baseline,
        distance_presyn: best.and_then(|r| r.distance),
        bound: best.map(|r| r.bound),
        ratio: match (baseline, best.and_then(|r| r.distance)) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        },
    };
    report.synth_calls = ctx.backend.stats().since(&calls0).synth_calls();
    report.partial = !report.failures.is_empty();
    report
}

/// Generates the task circuit and runs it.
pub fn run_pipeline(task: &TaskSpec, cfg: &RunConfig, ctx: &RunContext) -> RunReport {
    run_circuit(&task.to_string(), &task.generate(), task.is_matchgate(), Some(task.seed()), cfg, ctx)
}

/// Suite file: the cross-product of tasks, backends and seeds, each cell running every
/// strategy of the embedded run configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub tasks: Vec<String>,
    /// Overrides the seed of every task when present.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_backends")]
    pub backends: Vec<BackendKind>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Persist backend memo tables here between suite runs.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub run: RunConfig,
}

fn default_backends() -> Vec<BackendKind> {
    vec![BackendKind::KakEnum]
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<SuiteConfig, HarnessError> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.cells()?;
        Ok(cfg)
    }

    /// `(task, backend)` for every cell, in output order.
    pub fn cells(&self) -> Result<Vec<(TaskSpec, BackendKind)>, HarnessError> {
        let mut out = Vec::new();
        for t in &self.tasks {
            let spec: TaskSpec = t.parse().map_err(|e| HarnessError::Config(format!("{t}: {e}")))?;
            let specs: Vec<TaskSpec> = match &self.seeds {
                Some(seeds) => seeds.iter().map(|&s| spec.with_seed(s)).collect(),
                None => vec![spec],
            };
            for s in specs {
                for &b in &self.backends {
                    out.push((s.clone(), b));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub backend: String,
    pub strategy: Strategy,
    pub instances: usize,
    pub mean_t_count: f64,
    pub mean_reduction_pct: f64,
    pub mean_plan_length: f64,
    /// Mean of `distance_no_presyn / distance_presyn` where defined; empty otherwise.
    pub mean_error_ratio: Option<f64>,
    pub mean_wall_time: f64,
    pub mean_evaluations: f64,
}

/// Task label with the seed stripped, used to group instances.
pub fn task_family_label(task: &str) -> String {
    let (family, rest) = task.split_once(':').unwrap_or((task, ""));
    let params: Vec<&str> = rest.split(',').filter(|p| !p.starts_with("seed=") && !p.is_empty()).collect();
    format!("{family}:{}", params.join(","))
}

pub fn summarize(reports: &[RunReport]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, Strategy), Vec<&RunReport>> = BTreeMap::new();
    for r in reports.iter().filter(|r| !r.partial) {
        for s in &r.results {
            groups.entry((task_family_label(&r.task), r.backend.clone(), s.strategy)).or_default().push(r);
        }
    }
    let mean = |v: Vec<f64>| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
    groups
        .into_iter()
        .map(|((task, backend, strategy), rs)| {
            let res: Vec<&StrategyResult> = rs.iter().filter_map(|r| r.result(strategy)).collect();
            SummaryRow {
                instances: rs.len(),
                mean_t_count: mean(res.iter().map(|r| r.t_count as f64).collect()).unwrap_or(0.0),
                mean_reduction_pct: mean(rs.iter().filter_map(|r| r.reduction_pct(strategy)).collect()).unwrap_or(0.0),
                mean_plan_length: mean(res.iter().map(|r| r.plan_length as f64).collect()).unwrap_or(0.0),
                mean_error_ratio: if strategy == Strategy::None { None } else { mean(rs.iter().filter_map(|r| r.errors.ratio).collect()) },
                mean_wall_time: mean(res.iter().map(|r| r.wall_time).collect()).unwrap_or(0.0),
                mean_evaluations: mean(res.iter().map(|r| r.evaluations as f64).collect()).unwrap_or(0.0),
                task,
                backend,
                strategy,
            }
        })
        .collect()
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Config(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Config(e.to_string()))?;
    r.deserialize().map(|x| x.map_err(|e| HarnessError::Config(e.to_string()))).collect()
}

pub fn read_reports(path: &Path) -> Result<Vec<RunReport>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| HarnessError::Config(e.to_string())))
        .collect()
}

pub struct SuiteOutcome {
    pub reports: Vec<RunReport>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every cell (in parallel up to `workers`), isolating per-cell failures, and
/// writes `reports.jsonl` and `summary.csv` under `out`.
pub fn run_suite(cfg: &SuiteConfig, out: &Path) -> Result<SuiteOutcome, HarnessError> {
    let cells = cfg.cells()?;
    let mut contexts: BTreeMap<String, (Arc<LocalBackend>, RunContext)> = BTreeMap::new();
    for &b in &cfg.backends {
        let backend = Arc::new(make_backend(b, cfg.run.epsilon, cfg.run.budget));
        if let Some(dir) = &cfg.cache_dir {
            backend.load_cache(dir)?;
        }
        let ctx = RunContext::new(backend.clone());
        contexts.insert(b.to_string(), (backend, ctx));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let reports: Vec<RunReport> = pool.install(|| {
        cells
            .par_iter()
            .map(|(task, b)| {
                let ctx = &contexts[&b.to_string()].1;
                let cell_cfg = RunConfig { backend: *b, ..cfg.run.clone() };
                std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_pipeline(task, &cell_cfg, ctx))).unwrap_or_else(|_| RunReport {
                    schema: REPORT_SCHEMA,
                    task: task.to_string(),
                    n_qubits: task.n_qubits(),
                    matchgate: task.is_matchgate(),
                    backend: b.to_string(),
                    epsilon: cfg.run.epsilon,
                    merge_1q: cfg.run.merge_1q,
                    layer_wise: cfg.run.layer_wise,
                    seeds: Seeds {
                        task: Some(task.seed()),
                        policy: cfg.run.policy.seed,
                    },
                    config_hash: format!("{:016x}", cell_cfg.hash()),
                    t_count_initial: 0,
                    results: Vec::new(),
                    errors: ErrorMetrics::default(),
                    synth_calls: 0,
                    partial: true,
                    failures: vec!["cell panicked".into()],
                })
            })
            .collect()
    });
    std::fs::create_dir_all(out)?;
    let mut jsonl = String::new();
    for r in &reports {
        jsonl.push_str(&serde_json::to_string(r).map_err(|e| HarnessError::Config(e.to_string()))?);
        jsonl.push('\n');
    }
    std::fs::write(out.join("reports.jsonl"), jsonl)?;
    let summary = summarize(&reports);
    write_summary_csv(&summary, &out.join("summary.csv"))?;
    if let Some(dir) = &cfg.cache_dir {
        for (backend, _) in contexts.values() {
            backend.save_cache(dir)?;
        }
    }
    Ok(SuiteOutcome { reports, summary })
}

/// Three-panel SVG (mean T-count, mean reduction, mean plan length) with one bar group
/// per task label and one bar per strategy.
pub fn plot_summary_svg(rows: &[SummaryRow]) -> String {
    let mut tasks: Vec<String> = rows.iter().map(|r| format!("{} [{}]", r.task, r.backend)).collect();
    tasks.dedup();
    tasks.sort();
    tasks.dedup();
    let mut strategies: Vec<Strategy> = rows.iter().map(|r| r.strategy).collect();
    strategies.sort();
    strategies.dedup();
    let colors = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"];
    let (pw, ph, margin) = (360.0, 260.0, 50.0);
    let width = 3.0 * (pw + margin) + margin;
    let height = ph + 2.0 * margin + 20.0 * tasks.len() as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let panels: [(&str, fn(&SummaryRow) -> f64); 3] = [
        ("mean T-count", |r| r.mean_t_count),
        ("T-count reduction (%)", |r| r.mean_reduction_pct),
        ("plan length", |r| r.mean_plan_length),
    ];
    for (k, (title, value)) in panels.iter().enumerate() {
        let x0 = margin + k as f64 * (pw + margin);
        let y0 = margin;
        let vmax = rows.iter().map(value).fold(0.0f64, f64::max).max(1e-9);
        svg.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{title}</text>\n", x0 + pw / 2.0, y0 - 15.0));
        svg.push_str(&format!("<rect x=\"{x0}\" y=\"{y0}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\"/>\n"));
        svg.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{vmax:.1}</text>\n", x0 - 4.0, y0 + 4.0));
        let group_w = pw / tasks.len().max(1) as f64;
        let bar_w = group_w * 0.8 / strategies.len().max(1) as f64;
        for (ti, t) in tasks.iter().enumerate() {
            for (si, s) in strategies.iter().enumerate() {
                let Some(r) = rows.iter().find(|r| format!("{} [{}]", r.task, r.backend) == *t && r.strategy == *s) else { continue };
                let v = value(r).max(0.0);
                let h = ph * v / vmax;
                let x = x0 + ti as f64 * group_w + group_w * 0.1 + si as f64 * bar_w;
                svg.push_str(&format!(
                    "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"><title>{t} {s}: {v:.2}</title></rect>\n",
                    y0 + ph - h,
                    bar_w * 0.95,
                    colors[si % colors.len()]
                ));
            }
            svg.push_str(&format!("<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x0 + (ti as f64 + 0.5) * group_w, y0 + ph + 14.0, ti + 1));
        }
    }
    for (si, s) in strategies.iter().enumerate() {
        let x = margin + si as f64 * 90.0;
        let y = margin + ph + 30.0;
        svg.push_str(&format!("<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>", y - 9.0, colors[si % colors.len()]));
        svg.push_str(&format!("<text x=\"{}\" y=\"{y}\">{s}</text>\n", x + 14.0));
    }
    for (ti, t) in tasks.iter().enumerate() {
        svg.push_str(&format!("<text x=\"{margin}\" y=\"{}\">{}: {}</text>\n", margin + ph + 50.0 + 20.0 * ti as f64, ti + 1, xml_escape(t)));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;
    use crate::merge::tests::pathological;

    fn quick_cfg(strategies: Vec<Strategy>) -> RunConfig {
        RunConfig {
            strategies,
            epsilon: 0.05,
            budget: Some(18),
            policy: PolicyConfig { episodes: 40, ..PolicyConfig::default() },
            ..RunConfig::default()
        }
    }

    fn ctx(cfg: &RunConfig) -> RunContext {
        RunContext::new(Arc::new(cfg.make_backend()))
    }

    #[test]
    fn none_is_empty_plan_pipeline() {
        let cfg = quick_cfg(vec![Strategy::None]);
        let c = pathological(0.41, 2);
        let r = run_circuit("p", &c, false, None, &cfg, &ctx(&cfg));
        let direct = crate::synth::merge_and_synthesize(&c, &cfg.make_backend(), &Plan::new(), true).unwrap();
        assert_eq!(r.results[0].t_count, direct.t_count);
        assert!(r.results[0].plan.is_empty());
        assert!(r.check_integrity() && r.gate_sets_ok() && r.bounds_ok());
    }

    #[test]
    fn pathological_greedy_removes_rz_cost() {
        let cfg = quick_cfg(vec![Strategy::None, Strategy::Greedy, Strategy::Search, Strategy::Refine, Strategy::Brute]);
        let c = pathological(0.41, 2);
        let r = run_circuit("p", &c, false, None, &cfg, &ctx(&cfg));
        assert!(!r.partial, "{:?}", r.failures);
        assert!(r.t_count_initial > 0);
        assert_eq!(r.result(Strategy::Greedy).unwrap().t_count, 0);
        assert_eq!(r.reduction_pct(Strategy::Greedy), Some(100.0));
        let refine = r.result(Strategy::Refine).unwrap().t_count;
        assert!(refine <= r.result(Strategy::Search).unwrap().t_count);
        assert!(refine <= r.result(Strategy::Greedy).unwrap().t_count);
        assert!(r.check_integrity());
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<RunReport>(&json).unwrap(), r);
    }

    #[test]
    fn verification_bounds() {
        let c = Circuit::new(2, vec![Gate::rz(0.3, 0), Gate::cx(0, 1)]).unwrap();
        let v = verify_circuit(&c, &c, 0.01, 0, 8).unwrap();
        assert!(v.distance < 1e-12 && v.bound_ok);
        let b = make_backend(BackendKind::KakEnum, 0.01, None);
        let out = crate::synth::merge_and_synthesize(&Circuit::new(1, vec![Gate::rz(0.3, 0)]).unwrap(), &b, &Plan::new(), true).unwrap();
        let v = verify_circuit(&Circuit::new(1, vec![Gate::rz(0.3, 0)]).unwrap(), &out.circuit, 0.01, out.blocks(), 8).unwrap();
        assert_eq!(out.blocks(), 1);
        assert!(v.distance <= 0.01 && v.bound_ok);
        assert!(matches!(verify_circuit(&Circuit::empty(9), &Circuit::empty(9), 0.01, 0, 8), Err(CircuitError::WidthExceeded { .. })));
    }

    #[test]
    fn merged_blocks_do_not_outnumber_unmerged() {
        let cfg = quick_cfg(vec![Strategy::None, Strategy::Greedy]);
        let r = run_circuit("p", &pathological(0.41, 2), false, None, &cfg, &ctx(&cfg));
        assert!(r.result(Strategy::Greedy).unwrap().blocks <= r.result(Strategy::None).unwrap().blocks);
    }

    #[test]
    fn layer_wise_concatenates_slices() {
        let task: TaskSpec = "linear:n=3,blocks=2,kind=rxx_brick,seed=1".parse().unwrap();
        let cfg = RunConfig { layer_wise: Some(1), ..quick_cfg(vec![Strategy::None, Strategy::Greedy]) };
        let r = run_pipeline(&task, &cfg, &ctx(&cfg));
        assert!(!r.partial, "{:?}", r.failures);
        assert!(r.check_integrity() && r.bounds_ok());
        let whole = run_pipeline(&task, &RunConfig { layer_wise: None, ..cfg.clone() }, &ctx(&cfg));
        assert_eq!(r.result(Strategy::None).unwrap().t_count, whole.result(Strategy::None).unwrap().t_count);
    }

    #[test]
    fn suite_writes_reports_and_summary() {
        let text = r#"
tasks = ["random:n=3,depth=2"]
seeds = [0, 1]
workers = 1
[run]
epsilon = 0.05
budget = 18
strategies = ["none", "greedy"]
"#;
        let cfg = SuiteConfig::from_toml(text).unwrap();
        let dir = std::env::temp_dir().join(format!("presynth-suite-{}", std::process::id()));
        let out = run_suite(&cfg, &dir).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert_eq!(read_reports(&dir.join("reports.jsonl")).unwrap(), out.reports);
        let rows = read_summary_csv(&dir.join("summary.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].task, "random:n=3,depth=2");
        for r in &out.reports {
            let g = r.result(Strategy::Greedy).unwrap().t_count as f64;
            let want = 100.0 * (r.t_count_initial as f64 - g) / r.t_count_initial.max(1) as f64;
            assert!((r.reduction_pct(Strategy::Greedy).unwrap() - want).abs() < 1e-12);
        }
        assert!(plot_summary_svg(&rows).starts_with("<svg"));
        std::fs::remove_dir_all(&dir).ok();
        assert!(SuiteConfig::from_toml("tasks = [\"nope:n=2\"]").is_err());
    }

    #[test]
    fn report_reproducible_modulo_time() {
        let cfg = quick_cfg(vec![Strategy::None, Strategy::Greedy, Strategy::Search]);
        let task: TaskSpec = "random:n=3,depth=3,seed=4".parse().unwrap();
        let strip = |mut r: RunReport| {
            for x in &mut r.results {
                x.wall_time = 0.0;
            }
            r.synth_calls = 0;
            r
        };
        let a = strip(run_pipeline(&task, &cfg, &ctx(&cfg)));
        let b = strip(run_pipeline(&task, &cfg, &ctx(&cfg)));
        assert_eq!(a, b);
    }
}
