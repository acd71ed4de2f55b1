//! Minimal-T-count approximation of `Rz(theta)` by exhaustive normal-form enumeration.
//!
//! Every single-qubit Clifford+T operator is, up to phase, `T^s W R D` where
//! `W = HT (HT | SHT)^(k-1)` has T-count `k`, `R` is one of six representatives of the
//! Clifford group modulo diagonal Cliffords, and `D` is a diagonal Clifford. The normal
//! form is unique, so distinct enumeration paths give distinct operators and no
//! deduplication pass is needed. For a diagonal target only `|W R|_10` and the phase gap
//! of the diagonal of `W R` matter, so the table stores those, sorted by phase gap.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::circuit::{named_phase_gates, Circuit, Gate};
use crate::math::{self, Mat2};

use super::SynthError;

/// Default largest T-count enumerated.
pub const DEFAULT_BUDGET: u32 = 26;
/// Smallest tolerance accepted by [`synth_rz_enum`].
pub const MIN_EPSILON: f64 = 1e-4;
/// Depth of the sequential prefix walk before the parallel split.
const SPLIT_DEPTH: u32 = 8;

/// Largest `|W R|_10` stored at T-count `k`. Deep levels only matter for small
/// tolerances, which need near-diagonal words anyway.
pub fn keep_threshold(k: u32) -> f64 {
    match k {
        0..=10 => f64::INFINITY,
        11..=14 => 0.1,
        15..=18 => 0.04,
        19..=22 => 0.015,
        _ => 0.006,
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    /// `arg(m11) - arg(m00)` in `[0, 2 pi)`.
    beta: f64,
    /// `|m00|`.
    mag: f64,
    k: u8,
    rep: u8,
    /// Bit `t - 2` set when syllable `t` (t >= 2) is SHT rather than HT.
    path: u32,
}

/// A Clifford coset representative: matrix plus its gate word in time order.
#[derive(Clone, Debug)]
struct Rep {
    matrix: Mat2,
    word: Vec<fn(usize) -> Gate>,
}

pub struct RzTable {
    budget: u32,
    reps: Vec<Rep>,
    entries: Vec<Entry>,
}

fn syllable(sht: bool) -> Mat2 {
    let ht = math::hadamard() * math::phase_gate(1);
    if sht {
        math::phase_gate(2) * ht
    } else {
        ht
    }
}

/// Six representatives of the single-qubit Clifford group modulo right multiplication
/// by powers of S, each with a shortest word over {H, S}.
fn coset_reps() -> Vec<Rep> {
    let h = math::hadamard();
    let s = math::phase_gate(2);
    let same = |a: &Mat2, b: &Mat2| math::distance2(a, b) < 1e-9;
    let mut elems: Vec<(Mat2, Vec<fn(usize) -> Gate>)> = vec![(Mat2::identity(), vec![])];
    let mut head = 0;
    while head < elems.len() {
        let (m, w) = elems[head].clone();
        head += 1;
        for (g, f) in [(h, Gate::h as fn(usize) -> Gate), (s, Gate::s as fn(usize) -> Gate)] {
            let nm = g * m;
            if !elems.iter().any(|(e, _)| same(e, &nm)) {
                let mut nw = w.clone();
                nw.push(f);
                elems.push((nm, nw));
            }
        }
    }
    debug_assert_eq!(elems.len(), 24);
    let mut reps: Vec<Rep> = Vec::new();
    let mut covered: Vec<Mat2> = Vec::new();
    for (m, w) in elems {
        if covered.iter().any(|c| same(c, &m)) {
            continue;
        }
        let mut d = Mat2::identity();
        for _ in 0..4 {
            covered.push(m * d);
            d *= s;
        }
        reps.push(Rep { matrix: m, word: w });
    }
    debug_assert_eq!(reps.len(), 6);
    reps
}

fn make_entry(m: &Mat2, k: u32, rep: usize, path: u32) -> Option<Entry> {
    if m[(1, 0)].norm() > keep_threshold(k) {
        return None;
    }
    let beta = (m[(1, 1)].arg() - m[(0, 0)].arg()).rem_euclid(2.0 * PI);
    Some(Entry {
        beta,
        mag: m[(0, 0)].norm(),
        k: k as u8,
        rep: rep as u8,
        path,
    })
}

/// Depth-first walk below `w` (T-count `k`), appending kept entries.
fn walk(w: &Mat2, k: u32, path: u32, budget: u32, reps: &[Rep], syl: &[Mat2; 2], out: &mut Vec<Entry>) {
    for (ri, r) in reps.iter().enumerate() {
        if let Some(e) = make_entry(&(w * r.matrix), k, ri, path) {
            out.push(e);
        }
    }
    if k == budget {
        return;
    }
    for (bit, s) in syl.iter().enumerate() {
        let nw = w * s;
        walk(&nw, k + 1, path | ((bit as u32) << (k - 1)), budget, reps, syl, out);
    }
}

impl RzTable {
    pub fn build(budget: u32) -> RzTable {
        assert!(budget <= 30, "budget above 30 is not supported");
        let reps = coset_reps();
        let syl = [syllable(false), syllable(true)];
        let mut entries = Vec::new();
        for (ri, r) in reps.iter().enumerate() {
            if let Some(e) = make_entry(&r.matrix, 0, ri, 0) {
                entries.push(e);
            }
        }
        if budget >= 1 {
            // Sequential prefixes up to SPLIT_DEPTH, then parallel subtrees.
            let split = budget.min(SPLIT_DEPTH);
            let mut frontier = vec![(syllable(false), 0u32)];
            for k in 1..split {
                for (w, path) in &frontier {
                    for (ri, r) in reps.iter().enumerate() {
                        if let Some(e) = make_entry(&(w * r.matrix), k, ri, *path) {
                            entries.push(e);
                        }
                    }
                }
                frontier = frontier
                    .iter()
                    .flat_map(|(w, path)| {
                        (0..2u32).map(move |bit| (w * syl[bit as usize], path | (bit << (k - 1))))
                    })
                    .collect();
            }
            let deep: Vec<Vec<Entry>> = frontier
                .par_iter()
                .map(|(w, path)| {
                    let mut out = Vec::new();
                    walk(w, split, *path, budget, &reps, &syl, &mut out);
                    out
                })
                .collect();
            entries.extend(deep.into_iter().flatten());
        }
        entries.sort_by(|a, b| {
            a.beta
                .total_cmp(&b.beta)
                .then(a.k.cmp(&b.k))
                .then(a.rep.cmp(&b.rep))
                .then(a.path.cmp(&b.path))
        });
        RzTable { budget, reps, entries }
    }

    /// Process-wide table for `budget`, built on first use.
    pub fn shared(budget: u32) -> Arc<RzTable> {
        static TABLES: OnceLock<Mutex<HashMap<u32, Arc<RzTable>>>> = OnceLock::new();
        let tables = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = tables.lock().unwrap_or_else(|e| e.into_inner());
        guard.entry(budget).or_insert_with(|| Arc::new(RzTable::build(budget))).clone()
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices of entries with `beta` in `[lo, hi]`, wrapping around `2 pi`.
    fn window(&self, center: f64, half: f64) -> Vec<std::ops::Range<usize>> {
        let tau = 2.0 * PI;
        if half >= PI {
            return vec![0..self.entries.len()];
        }
        let c = center.rem_euclid(tau);
        let (lo, hi) = (c - half, c + half);
        let idx = |x: f64| self.entries.partition_point(|e| e.beta < x);
        let idx_hi = |x: f64| self.entries.partition_point(|e| e.beta <= x);
        let mut out = vec![idx(lo.max(0.0))..idx_hi(hi.min(tau))];
        if lo < 0.0 {
            out.push(idx(lo + tau)..self.entries.len());
        }
        if hi > tau {
            out.push(0..idx_hi(hi - tau));
        }
        out
    }

    /// Best `(cost, error, s, entry index)` for `Rz(theta)` within `eps`, scanning only
    /// the entries whose phase gap can meet the tolerance.
    fn best(&self, theta: f64, eps: f64) -> Option<(u32, f64, u8, usize)> {
        let cos_min = 1.0 - eps * eps / 2.0;
        let half = if cos_min <= -1.0 { PI } else { 2.0 * cos_min.clamp(-1.0, 1.0).acos() + 1e-12 };
        let mut best: Option<(u32, f64, u8, usize)> = None;
        for s in 0..8u8 {
            let target = theta - s as f64 * FRAC_PI_4;
            for range in self.window(target, half) {
                for i in range {
                    let e = &self.entries[i];
                    let err = entry_error(e, target);
                    if err > eps {
                        continue;
                    }
                    let cost = e.k as u32 + (s % 2) as u32;
                    let better = match best {
                        None => true,
                        Some((bc, be, bs, bi)) => (cost, err, s, i) < (bc, be, bs, bi),
                    };
                    if better {
                        best = Some((cost, err, s, i));
                    }
                }
            }
        }
        best
    }

    /// Gate word (time order, on qubit 0) for `T^s W R`.
    fn word(&self, entry: usize, s: u8) -> Vec<Gate> {
        let e = self.entries[entry];
        let mut gates: Vec<Gate> = self.reps[e.rep as usize].word.iter().map(|f| f(0)).collect();
        for t in (1..=e.k as u32).rev() {
            let sht = t >= 2 && (e.path >> (t - 2)) & 1 == 1;
            gates.push(Gate::t(0));
            gates.push(Gate::h(0));
            if sht {
                gates.push(Gate::s(0));
            }
        }
        gates.extend(named_phase_gates(s, 0));
        gates
    }

    /// Linear scan used by tests to certify minimality of [`RzTable::best`].
    #[cfg(test)]
    fn brute_min_cost(&self, theta: f64, eps: f64) -> Option<u32> {
        let mut best = None;
        for s in 0..8u8 {
            let target = theta - s as f64 * FRAC_PI_4;
            for e in &self.entries {
                if entry_error(e, target) <= eps {
                    let cost = e.k as u32 + (s % 2) as u32;
                    best = Some(best.map_or(cost, |b: u32| b.min(cost)));
                }
            }
        }
        best
    }
}

/// Distance from `diag(.., e^{i beta} ..)`-type entry to `Rz(target)`, up to phase.
fn entry_error(e: &Entry, target: f64) -> f64 {
    let dot = (e.mag * ((target - e.beta) / 2.0).cos().abs()).min(1.0);
    (2.0 - 2.0 * dot).max(0.0).sqrt()
}

/// Word over `{H, S, T}` plus diagonal Cliffords approximating `Rz(theta)`.
#[derive(Clone, Debug)]
pub struct RzWord {
    pub gates: Vec<Gate>,
    pub t_count: usize,
    pub error: f64,
}

/// Minimum-T-count word within `eps` of `Rz(theta)` among the words stored in the
/// table for `budget`. Ties go to the smaller error.
pub fn rz_word(theta: f64, eps: f64, budget: u32) -> Result<RzWord, SynthError> {
    if !(eps >= MIN_EPSILON) {
        return Err(SynthError::EpsilonTooSmall { eps, min: MIN_EPSILON });
    }
    let table = RzTable::shared(budget);
    let (_, _, s, idx) = table.best(theta, eps).ok_or(SynthError::BudgetExhausted { eps, budget })?;
    let gates = table.word(idx, s);
    let c = Circuit::from_parts(1, gates);
    let u = crate::circuit::compute_unitary(&c).expect("one qubit");
    let error = math::phase_min_opnorm(&u, &math::to_dmatrix2(&math::rz(theta)));
    debug_assert!(error <= eps + 1e-9, "predicted within {eps}, measured {error}");
    Ok(RzWord {
        t_count: c.t_count(),
        error,
        gates: c.into_gates(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TEST_BUDGET: u32 = 16;

    #[test]
    fn coset_reps_cover_clifford_group() {
        let reps = coset_reps();
        assert_eq!(reps.len(), 6);
    }

    #[test]
    fn exact_angles() {
        let w = rz_word(0.0, 0.01, TEST_BUDGET).unwrap();
        assert!(w.gates.is_empty());
        let w = rz_word(FRAC_PI_4, 0.01, TEST_BUDGET).unwrap();
        assert_eq!(w.t_count, 1);
        assert!(w.error < 1e-12);
        let w = rz_word(2.0 * FRAC_PI_4, 0.01, TEST_BUDGET).unwrap();
        assert_eq!(w.t_count, 0);
        assert_eq!(w.gates, vec![Gate::s(0)]);
    }

    #[test]
    fn random_angles_meet_tolerance_minimally() {
        let table = RzTable::shared(TEST_BUDGET);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let theta = rng.gen_range(-PI..PI);
            let w = rz_word(theta, 0.05, TEST_BUDGET).unwrap();
            assert!(w.error <= 0.05);
            assert_eq!(Some(w.t_count as u32), table.brute_min_cost(theta, 0.05));
        }
    }

    #[test]
    fn t_count_is_monotone_in_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let theta = rng.gen_range(-PI..PI);
            let a = rz_word(theta, 0.03, TEST_BUDGET).unwrap().t_count;
            let b = rz_word(theta, 0.1, TEST_BUDGET).unwrap().t_count;
            assert!(a >= b);
        }
    }

    #[test]
    fn tiny_epsilon_is_rejected() {
        assert!(matches!(rz_word(0.3, 1e-5, TEST_BUDGET), Err(SynthError::EpsilonTooSmall { .. })));
        assert!(matches!(rz_word(0.3, 1e-4, 4), Err(SynthError::BudgetExhausted { .. })));
    }
}
