//! Sequential-decision view of plan search and the reference learners.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::merge::Plan;

use super::{replay, PlanObjective, SearchError, SearchOutcome};

/// `n x n x 3` observation, stored row-major with the channel innermost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn zeros(n: usize) -> Observation {
        Observation {
            n,
            data: vec![0.0; n * n * 3],
        }
    }

    pub fn get(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.data[(i * self.n + j) * 3 + ch]
    }

    fn set(&mut self, i: usize, j: usize, ch: usize, v: f64) {
        self.data[(i * self.n + j) * 3 + ch] = v;
    }

    pub fn channel(&self, ch: usize) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j, ch)).collect()).collect()
    }
}

/// Boolean product of the markers `M_ij = I + E_ij` over the plan's actions, taken in
/// sorted order so that reorderings of the same multiset of actions agree.
pub fn plan_history(n: usize, plan: &Plan) -> Vec<Vec<bool>> {
    let mut acts: Vec<(usize, usize)> = plan.pairs().to_vec();
    acts.sort_unstable();
    let mut m: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    for (i, j) in acts {
        // right-multiply by I + E_ij: column j gains column i
        for row in m.iter_mut() {
            row[j] = row[j] || row[i];
        }
    }
    m
}

/// Observation for `plan`: per-wire T-counts (channel 0, summed over the pair; the
/// diagonal holds the wire's own count), mergeable two-qubit gates (channel 1) and the
/// plan history (channel 2).
pub fn observe(obj: &dyn PlanObjective, plan: &Plan) -> Result<Observation, SearchError> {
    let n = obj.n_qubits();
    let e = obj.evaluate(plan)?;
    let mut o = Observation::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let t = if i == j { e.per_qubit_t[i] } else { e.per_qubit_t[i] + e.per_qubit_t[j] };
            o.set(i, j, 0, t as f64);
        }
    }
    for (i, j) in obj.candidate_pairs(plan)? {
        let m = obj.mergeable(plan, i, j)? as f64;
        o.set(i, j, 1, m);
        o.set(j, i, 1, m);
    }
    for (i, row) in plan_history(n, plan).iter().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            o.set(i, j, 2, if b { 1.0 } else { 0.0 });
        }
    }
    Ok(o)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: i64,
    pub done: bool,
    /// The action named a pair with no two-qubit gate; the plan was left unchanged.
    pub invalid: bool,
}

/// Episodic environment over merge plans. Actions are indices into all pairs `i < j`
/// followed by one no-op.
pub struct Env<'a> {
    obj: &'a dyn PlanObjective,
    pairs: Vec<(usize, usize)>,
    horizon: usize,
    plan: Plan,
    t_initial: usize,
    t_current: usize,
    steps: usize,
}

impl<'a> Env<'a> {
    /// `horizon` defaults to the number of interacting pairs.
    pub fn new(obj: &'a dyn PlanObjective, horizon: Option<usize>) -> Result<Env<'a>, SearchError> {
        let n = obj.n_qubits();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let horizon = match horizon {
            Some(h) => h,
            None => obj.candidate_pairs(&Plan::new())?.len().max(1),
        };
        let t = obj.evaluate(&Plan::new())?.t_count;
        Ok(Env {
            obj,
            pairs,
            horizon,
            plan: Plan::new(),
            t_initial: t,
            t_current: t,
            steps: 0,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.pairs.len() + 1
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn action_pair(&self, a: usize) -> Option<(usize, usize)> {
        self.pairs.get(a).copied()
    }

    pub fn action_index(&self, pair: (usize, usize)) -> Option<usize> {
        let p = (pair.0.min(pair.1), pair.0.max(pair.1));
        self.pairs.iter().position(|&x| x == p)
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn t_count(&self) -> usize {
        self.t_current
    }

    pub fn t_initial(&self) -> usize {
        self.t_initial
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Valid actions in the current state; the no-op is always valid.
    pub fn valid_mask(&self) -> Result<Vec<bool>, SearchError> {
        let cands = self.obj.candidate_pairs(&self.plan)?;
        let mut m: Vec<bool> = self.pairs.iter().map(|p| cands.contains(p)).collect();
        m.push(true);
        Ok(m)
    }

    pub fn reset(&mut self) -> Result<Observation, SearchError> {
        self.plan = Plan::new();
        self.t_current = self.t_initial;
        self.steps = 0;
        observe(self.obj, &self.plan)
    }

    /// Applies action `a`; reward is the T-count before minus after.
    pub fn step(&mut self, a: usize) -> Result<StepResult, SearchError> {
        self.steps += 1;
        let mut invalid = false;
        let mut reward = 0;
        if let Some(pair) = self.action_pair(a) {
            if self.obj.candidate_pairs(&self.plan)?.contains(&pair) {
                let next = self.plan.with(pair);
                let t = self.obj.evaluate(&next)?.t_count;
                reward = self.t_current as i64 - t as i64;
                self.t_current = t;
                self.plan = next;
            } else {
                invalid = true;
            }
        } else if a > self.pairs.len() {
            return Err(SearchError::Other(format!("action {a} out of range")));
        }
        Ok(StepResult {
            observation: observe(self.obj, &self.plan)?,
            reward,
            done: self.steps >= self.horizon,
            invalid,
        })
    }
}

/// One rollout as seen by a learner.
#[derive(Clone, Debug)]
pub struct Episode {
    pub observations: Vec<Observation>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// A policy over environment actions, improved from batches of episodes.
pub trait PolicyOptimizer {
    fn name(&self) -> &str;
    /// Action probabilities at `step`; entries where `mask` is false must be 0.
    fn propose(&mut self, obs: &Observation, step: usize, mask: &[bool]) -> Vec<f64>;
    fn update(&mut self, batch: &[Episode]);
}

fn masked_uniform(mask: &[bool]) -> Vec<f64> {
    let k = mask.iter().filter(|&&b| b).count().max(1) as f64;
    mask.iter().map(|&b| if b { 1.0 / k } else { 0.0 }).collect()
}

/// Uniform over valid actions; relies on best-plan tracking for progress.
#[derive(Default)]
pub struct UniformRandom;

impl PolicyOptimizer for UniformRandom {
    fn name(&self) -> &str {
        "random"
    }

    fn propose(&mut self, _obs: &Observation, _step: usize, mask: &[bool]) -> Vec<f64> {
        masked_uniform(mask)
    }

    fn update(&mut self, _batch: &[Episode]) {}
}

/// Cross-entropy method over per-step action distributions.
pub struct CrossEntropy {
    probs: Vec<Vec<f64>>,
    n_actions: usize,
    pub elite_fraction: f64,
    pub smoothing: f64,
}

impl CrossEntropy {
    pub fn new(n_actions: usize, horizon: usize) -> CrossEntropy {
        CrossEntropy {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; horizon],
            n_actions,
            elite_fraction: 0.2,
            smoothing: 0.7,
        }
    }
}

impl PolicyOptimizer for CrossEntropy {
    fn name(&self) -> &str {
        "cem"
    }

    fn propose(&mut self, _obs: &Observation, step: usize, mask: &[bool]) -> Vec<f64> {
        let Some(p) = self.probs.get(step) else { return masked_uniform(mask) };
        // floor keeps every valid action reachable
        let w: Vec<f64> = p.iter().zip(mask).map(|(&x, &m)| if m { x + 1e-3 } else { 0.0 }).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    fn update(&mut self, batch: &[Episode]) {
        if batch.is_empty() {
            return;
        }
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.sort_by(|&a, &b| batch[b].total_reward().total_cmp(&batch[a].total_reward()).then(a.cmp(&b)));
        let n_elite = ((batch.len() as f64 * self.elite_fraction).ceil() as usize).max(1);
        for (step, p) in self.probs.iter_mut().enumerate() {
            let mut counts = vec![0.0; self.n_actions];
            let mut seen = 0.0;
            for &e in &order[..n_elite] {
                if let Some(&a) = batch[e].actions.get(step) {
                    counts[a] += 1.0;
                    seen += 1.0;
                }
            }
            if seen == 0.0 {
                continue;
            }
            for (x, c) in p.iter_mut().zip(counts) {
                *x = (1.0 - self.smoothing) * *x + self.smoothing * c / seen;
            }
        }
    }
}

/// Linear softmax policy on the flattened observation, trained by REINFORCE with a
/// per-step mean baseline and an entropy bonus.
pub struct SoftmaxPolicyGradient {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    pub learning_rate: f64,
    pub entropy_coefficient: f64,
    horizon: usize,
}

impl SoftmaxPolicyGradient {
    pub fn new(n: usize, n_actions: usize, horizon: usize) -> SoftmaxPolicyGradient {
        let f = n * n * 3 + 1;
        SoftmaxPolicyGradient {
            weights: vec![vec![0.0; f]; n_actions],
            bias: vec![0.0; n_actions],
            learning_rate: 0.05,
            entropy_coefficient: 0.05,
            horizon,
        }
    }

    fn features(&self, obs: &Observation, step: usize) -> Vec<f64> {
        let mut scale = [1.0f64; 3];
        for (k, v) in obs.data.iter().enumerate() {
            scale[k % 3] = scale[k % 3].max(v.abs());
        }
        let mut x: Vec<f64> = obs.data.iter().enumerate().map(|(k, v)| v / scale[k % 3]).collect();
        x.push(step as f64 / self.horizon.max(1) as f64);
        x
    }

    fn probs(&self, x: &[f64], mask: &[bool]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let mx = logits.iter().zip(mask).filter(|(_, &m)| m).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().zip(mask).map(|(l, &m)| if m { (l - mx).exp() } else { 0.0 }).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }
}

impl PolicyOptimizer for SoftmaxPolicyGradient {
    fn name(&self) -> &str {
        "pg"
    }

    fn propose(&mut self, obs: &Observation, step: usize, mask: &[bool]) -> Vec<f64> {
        let x = self.features(obs, step);
        self.probs(&x, mask)
    }

    fn update(&mut self, batch: &[Episode]) {
        // returns-to-go and their per-step means
        let rtg: Vec<Vec<f64>> = batch
            .iter()
            .map(|ep| {
                let mut g = 0.0;
                let mut out: Vec<f64> = ep.rewards.iter().rev().map(|r| { g += r; g }).collect();
                out.reverse();
                out
            })
            .collect();
        let max_len = rtg.iter().map(Vec::len).max().unwrap_or(0);
        let baseline: Vec<f64> = (0..max_len)
            .map(|t| {
                let v: Vec<f64> = rtg.iter().filter_map(|r| r.get(t).copied()).collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        let scale = 1.0 / batch.len().max(1) as f64;
        for (ep, g) in batch.iter().zip(&rtg) {
            for t in 0..ep.actions.len() {
                let x = self.features(&ep.observations[t], t);
                let p = self.probs(&x, &ep.masks[t]);
                let adv = g[t] - baseline[t];
                let ent: f64 = -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
                for a in 0..p.len() {
                    if !ep.masks[t][a] {
                        continue;
                    }
                    let onehot = if a == ep.actions[t] { 1.0 } else { 0.0 };
                    let d_ent = if p[a] > 0.0 { -p[a] * (p[a].ln() + ent) } else { 0.0 };
                    let grad = adv * (onehot - p[a]) + self.entropy_coefficient * d_ent;
                    let step = self.learning_rate * scale * grad;
                    self.bias[a] += step;
                    for (w, xi) in self.weights[a].iter_mut().zip(&x) {
                        *w += step * xi;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Episode budget.
    pub episodes: usize,
    /// Episodes per learner update.
    pub batch: usize,
    /// Episodes between progress checks.
    pub eval_every: usize,
    /// Checks without improvement before stopping early.
    pub patience: usize,
    pub horizon: Option<usize>,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            episodes: 200,
            batch: 10,
            eval_every: 20,
            patience: 10,
            horizon: None,
            seed: 0,
        }
    }
}

/// Runs the learner against the environment and returns the best plan visited at any
/// step of any episode.
pub fn policy_search(
    obj: &dyn PlanObjective,
    learner: &mut dyn PolicyOptimizer,
    cfg: &PolicyConfig,
) -> Result<SearchOutcome, SearchError> {
    let evals0 = obj.evaluations();
    let mut env = Env::new(obj, cfg.horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = (env.t_initial(), Plan::new());
    let mut visited = 1u64;
    let mut batch: Vec<Episode> = Vec::new();
    let mut last_best = best.0;
    let mut stale = 0;
    for ep_idx in 0..cfg.episodes {
        let mut obs = env.reset()?;
        let mut ep = Episode {
            observations: Vec::new(),
            masks: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
        };
        loop {
            let mask = env.valid_mask()?;
            let p = learner.propose(&obs, env.steps(), &mask);
            let a = WeightedIndex::new(&p).map(|d| d.sample(&mut rng)).unwrap_or(env.n_actions() - 1);
            let r = env.step(a)?;
            visited += 1;
            ep.observations.push(std::mem::replace(&mut obs, r.observation));
            ep.masks.push(mask);
            ep.actions.push(a);
            ep.rewards.push(r.reward as f64);
            let cand = (env.t_count(), env.plan().clone());
            if (cand.0, cand.1.len()) < (best.0, best.1.len()) {
                best = cand;
            }
            if r.done {
                break;
            }
        }
        batch.push(ep);
        if batch.len() >= cfg.batch.max(1) {
            learner.update(&batch);
            batch.clear();
        }
        if cfg.eval_every > 0 && (ep_idx + 1) % cfg.eval_every == 0 {
            if best.0 < last_best {
                last_best = best.0;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    Ok(SearchOutcome {
        trajectory: replay(obj, &best.1)?,
        t_count_initial: env.t_initial(),
        t_count_final: best.0,
        plan: best.1,
        evaluations: obj.evaluations() - evals0,
        visited,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Circuit, Gate};
    use crate::merge::tests::pathological;
    use crate::search::{brute_force_search, BruteForceConfig, CliffordTObjective};
    use crate::synth::{BackendKind, LocalBackend, OneQubitMethod};
    use std::sync::Arc;

    fn objective(c: &Circuit) -> CliffordTObjective {
        let b = LocalBackend::with_method(BackendKind::KakEnum, OneQubitMethod::Enum { budget: 18 }, 0.05);
        CliffordTObjective::new(c, Arc::new(b), true)
    }

    #[test]
    fn history_is_order_invariant_and_binary() {
        let a = plan_history(4, &Plan::from(vec![(0, 1), (1, 2), (2, 3)]));
        let b = plan_history(4, &Plan::from(vec![(2, 3), (0, 1), (1, 2)]));
        assert_eq!(a, b);
        assert!(a[0][1] && a[1][2] && a[0][3] && !a[1][0]);
        let id = plan_history(3, &Plan::new());
        assert!(id[1][1] && !id[0][1]);
    }

    #[test]
    fn rewards_sum_to_total_reduction() {
        let c = pathological(0.41, 2);
        let obj = objective(&c);
        let mut env = Env::new(&obj, Some(4)).unwrap();
        env.reset().unwrap();
        let i01 = env.action_index((0, 1)).unwrap();
        let first = env.step(i01).unwrap();
        let t_block = env.t_initial() - env.t_count();
        assert_eq!(first.reward as usize, t_block);
        assert!(first.reward > 0);
        let again = env.step(i01).unwrap();
        // (0,1) no longer interacts after the merge
        assert_eq!(again.reward, 0);
        let noop = env.n_actions() - 1;
        let mut total = first.reward + again.reward;
        loop {
            let r = env.step(noop).unwrap();
            total += r.reward;
            if r.done {
                break;
            }
        }
        assert_eq!(total, env.t_initial() as i64 - env.t_count() as i64);
    }

    #[test]
    fn repeated_pair_gives_zero_reward() {
        let c = Circuit::new(2, vec![Gate::rz(0.3, 0), Gate::cx(0, 1), Gate::rz(0.2, 1), Gate::cx(0, 1)]).unwrap();
        let obj = objective(&c);
        let mut env = Env::new(&obj, None).unwrap();
        env.reset().unwrap();
        let a = env.action_index((0, 1)).unwrap();
        env.step(a).unwrap();
        let r = env.step(a).unwrap();
        assert_eq!(r.reward, 0);
    }

    #[test]
    fn observation_channels() {
        let c = pathological(0.41, 2);
        let obj = objective(&c);
        let o = observe(&obj, &Plan::new()).unwrap();
        assert_eq!(o.data.len(), 27);
        assert_eq!(o.get(0, 1, 1), 2.0);
        // Rz(-a) on q1 runs into CX(1,2)
        assert_eq!(o.get(1, 2, 1), 1.0);
        assert!(o.get(1, 1, 0) > 0.0);
        assert_eq!(o.get(0, 0, 2), 1.0);
    }

    #[test]
    fn random_policy_finds_optimum_and_is_deterministic() {
        let c = pathological(0.41, 2);
        let obj = objective(&c);
        let opt = brute_force_search(&obj, &BruteForceConfig::new(2)).unwrap();
        let cfg = PolicyConfig { episodes: 500, ..PolicyConfig::default() };
        let a = policy_search(&obj, &mut UniformRandom, &cfg).unwrap();
        assert_eq!(a.t_count_final, opt.t_count_final);
        let b = policy_search(&obj, &mut UniformRandom, &cfg).unwrap();
        assert_eq!(a.plan, b.plan);
        let zero = policy_search(&obj, &mut UniformRandom, &PolicyConfig { episodes: 0, ..cfg }).unwrap();
        assert!(zero.plan.is_empty());
        assert_eq!(zero.t_count_final, zero.t_count_initial);
    }

    #[test]
    fn learners_run_and_track_best() {
        let c = pathological(0.41, 2);
        let obj = objective(&c);
        let env = Env::new(&obj, None).unwrap();
        let (na, h) = (env.n_actions(), env.horizon());
        let cfg = PolicyConfig { episodes: 60, seed: 3, ..PolicyConfig::default() };
        let mut cem = CrossEntropy::new(na, h);
        let mut pg = SoftmaxPolicyGradient::new(3, na, h);
        for l in [&mut cem as &mut dyn PolicyOptimizer, &mut pg] {
            let o = policy_search(&obj, l, &cfg).unwrap();
            assert_eq!(o.t_count_final, obj.evaluate(&o.plan).unwrap().t_count);
            assert!(o.t_count_final <= o.t_count_initial);
        }
    }
}
