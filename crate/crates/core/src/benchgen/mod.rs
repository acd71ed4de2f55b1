//! Seeded benchmark generators and the matchgate compilation path.

pub mod matchgate;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Gate, UnitaryMatrix};
use crate::math::{self, Mat2, C64, ZERO};
use crate::merge::u3_from_matrix;

pub use matchgate::{
    is_matchgate_circuit, phi_inverse, phi_map, synth_matchgate, MatchgateError, MatchgateObjective,
    MatchgateSynthOutput,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("unknown task family '{0}'")]
    Family(String),
    #[error("bad parameter '{0}'")]
    Param(String),
    #[error("missing parameter '{0}'")]
    Missing(&'static str),
    #[error("invalid value: {0}")]
    Value(String),
}

fn angle(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(0.0..2.0 * PI)
}

/// Layered random circuit: each layer shuffles the wires and fills them with gates
/// drawn uniformly from `{H, X, Y, Z, S, T, Rx, Ry, Rz, U3, CX, CRx, Rxx}`, restricted
/// to kinds that still fit.
pub fn gen_random_circuit(n: usize, depth: usize, seed: u64) -> Circuit {
    assert!(n >= 2, "random circuits need at least two qubits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gates = Vec::new();
    let mut wires: Vec<usize> = (0..n).collect();
    for _ in 0..depth {
        wires.shuffle(&mut rng);
        let mut k = 0;
        while k < n {
            let left = n - k;
            let choices = if left >= 2 { 13 } else { 10 };
            let q = wires[k];
            let g = match rng.gen_range(0..choices) {
                0 => Gate::h(q),
                1 => Gate::x(q),
                2 => Gate::y(q),
                3 => Gate::z(q),
                4 => Gate::s(q),
                5 => Gate::t(q),
                6 => Gate::rx(angle(&mut rng), q),
                7 => Gate::ry(angle(&mut rng), q),
                8 => Gate::rz(angle(&mut rng), q),
                9 => Gate::u3(angle(&mut rng), angle(&mut rng), angle(&mut rng), q),
                10 => Gate::cx(q, wires[k + 1]),
                11 => Gate::crx(angle(&mut rng), q, wires[k + 1]),
                _ => Gate::rxx(angle(&mut rng), q, wires[k + 1]),
            };
            k += g.arity();
            gates.push(g);
        }
    }
    Circuit::from_parts(n, gates)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    CrxLadder,
    RxxBrick,
}

impl fmt::Display for LinearKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinearKind::CrxLadder => "crx_ladder",
            LinearKind::RxxBrick => "rxx_brick",
        })
    }
}

impl FromStr for LinearKind {
    type Err = SpecError;
    fn from_str(s: &str) -> Result<Self, SpecError> {
        match s {
            "crx_ladder" => Ok(LinearKind::CrxLadder),
            "rxx_brick" => Ok(LinearKind::RxxBrick),
            _ => Err(SpecError::Value(format!("linear kind '{s}'"))),
        }
    }
}

/// Blocks of `Rx, Rz` on every wire followed by a nearest-neighbour entangler.
pub fn gen_linear_circuit(n: usize, blocks: usize, kind: LinearKind, seed: u64) -> Circuit {
    assert!(n >= 2, "linear circuits need at least two qubits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gates = Vec::new();
    for _ in 0..blocks {
        for q in 0..n {
            gates.push(Gate::rx(angle(&mut rng), q));
            gates.push(Gate::rz(angle(&mut rng), q));
        }
        match kind {
            LinearKind::CrxLadder => {
                for q in 0..n - 1 {
                    gates.push(Gate::crx(angle(&mut rng), q, q + 1));
                }
            }
            LinearKind::RxxBrick => {
                for start in [0, 1] {
                    for q in (start..n - 1).step_by(2) {
                        gates.push(Gate::rxx(angle(&mut rng), q, q + 1));
                    }
                }
            }
        }
    }
    Circuit::from_parts(n, gates)
}

/// `H = sum_i J Z_i Z_{i+1} + sum_i (hx_i X_i + hy_i Y_i + hz_i Z_i)` on an open chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingSpec {
    pub n: usize,
    pub j: f64,
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    pub hz: Vec<f64>,
    pub t: f64,
    pub steps: usize,
}

impl IsingSpec {
    /// Fields drawn i.i.d. from `[-2, 2]`.
    pub fn random(n: usize, j: f64, t: f64, steps: usize, seed: u64) -> IsingSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect::<Vec<f64>>();
        let (hx, hy, hz) = (draw(), draw(), draw());
        IsingSpec { n, j, hx, hy, hz, t, steps }
    }

    pub fn uniform(n: usize, j: f64, h: [f64; 3], t: f64, steps: usize) -> IsingSpec {
        IsingSpec {
            n,
            j,
            hx: vec![h[0]; n],
            hy: vec![h[1]; n],
            hz: vec![h[2]; n],
            t,
            steps,
        }
    }

    fn field_matrix(&self, q: usize, tau: f64) -> Mat2 {
        // exp(-i tau h.sigma) = cos(|h| tau) I - i sin(|h| tau) h.sigma / |h|
        let h = [self.hx[q], self.hy[q], self.hz[q]];
        let r = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return Mat2::identity();
        }
        let (s, c) = (r * tau).sin_cos();
        let sig = (math::pauli_x() * C64::from(h[0]) + math::pauli_y() * C64::from(h[1]) + math::pauli_z() * C64::from(h[2])) / C64::from(r);
        Mat2::identity() * C64::from(c) - sig * C64::new(0.0, s)
    }
}

/// Second-order (Strang) Trotter circuit for `exp(-i H t)`: per step, half-step field
/// rotations, a full `Rzz` layer lowered to `CX, Rz, CX`, then half-step fields again.
pub fn gen_trotter_ising(spec: &IsingSpec) -> Circuit {
    assert!(spec.steps >= 1, "at least one Trotter step");
    let n = spec.n;
    let dt = spec.t / spec.steps as f64;
    let mut gates = Vec::new();
    let fields = |gates: &mut Vec<Gate>| {
        for q in 0..n {
            gates.push(u3_from_matrix(&spec.field_matrix(q, dt / 2.0), q));
        }
    };
    for _ in 0..spec.steps {
        fields(&mut gates);
        for q in 0..n.saturating_sub(1) {
            if spec.j * dt == 0.0 {
                break;
            }
            // exp(-i J dt Z Z) = Rzz(2 J dt)
            gates.push(Gate::cx(q, q + 1));
            gates.push(Gate::rz(2.0 * spec.j * dt, q + 1));
            gates.push(Gate::cx(q, q + 1));
        }
        fields(&mut gates);
    }
    Circuit::from_parts(n, gates)
}

/// Dense `H` for an Ising spec (qubit 0 is the least-significant bit).
pub fn ising_hamiltonian(spec: &IsingSpec) -> DMatrix<C64> {
    let dim = 1usize << spec.n;
    let mut h = DMatrix::from_element(dim, dim, ZERO);
    let z = |b: usize, q: usize| if b >> q & 1 == 0 { 1.0 } else { -1.0 };
    for b in 0..dim {
        for q in 0..spec.n {
            h[(b, b)] += C64::from(spec.hz[q] * z(b, q));
            let f = b ^ (1 << q);
            // X|b> = |f>, Y|b> = i z(b) |f>
            h[(f, b)] += C64::from(spec.hx[q]) + C64::new(0.0, spec.hy[q] * z(b, q));
        }
        for q in 0..spec.n.saturating_sub(1) {
            h[(b, b)] += C64::from(spec.j * z(b, q) * z(b, q + 1));
        }
    }
    h
}

/// `exp(-i H t)` by Hermitian eigendecomposition.
pub fn exact_evolution(spec: &IsingSpec) -> UnitaryMatrix {
    let eig = ising_hamiltonian(spec).symmetric_eigen();
    let v = eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -l * spec.t)));
    &v * d * v.adjoint()
}

/// `n_gates` gates, each `Rz` on a random wire or `Rxx` on a random neighbouring pair.
pub fn gen_matchgate_circuit(n: usize, n_gates: usize, seed: u64) -> Circuit {
    assert!(n >= 2, "matchgate circuits need at least two qubits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates = (0..n_gates)
        .map(|_| {
            if rng.gen_bool(0.5) {
                let q = rng.gen_range(0..n);
                Gate::rz(angle(&mut rng), q)
            } else {
                let q = rng.gen_range(0..n - 1);
                Gate::rxx(angle(&mut rng), q, q + 1)
            }
        })
        .collect();
    Circuit::from_parts(n, gates)
}

/// Whether `u` preserves the parity of the computational basis (the block structure
/// every matchgate circuit has).
pub fn is_parity_preserving(u: &UnitaryMatrix, tol: f64) -> bool {
    (0..u.nrows()).all(|r| {
        (0..u.ncols()).all(|c| (r.count_ones() + c.count_ones()) % 2 == 0 || u[(r, c)].norm() <= tol)
    })
}

/// Generator families with CLI-facing spec strings such as `random:n=6,depth=6,seed=1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TaskSpec {
    Random { n: usize, depth: usize, seed: u64 },
    Linear { n: usize, blocks: usize, kind: LinearKind, seed: u64 },
    Ising { n: usize, j: f64, t: f64, steps: usize, seed: u64 },
    Matchgate { n: usize, gates: usize, seed: u64 },
}

impl TaskSpec {
    pub fn generate(&self) -> Circuit {
        match *self {
            TaskSpec::Random { n, depth, seed } => gen_random_circuit(n, depth, seed),
            TaskSpec::Linear { n, blocks, kind, seed } => gen_linear_circuit(n, blocks, kind, seed),
            TaskSpec::Ising { n, j, t, steps, seed } => gen_trotter_ising(&IsingSpec::random(n, j, t, steps, seed)),
            TaskSpec::Matchgate { n, gates, seed } => gen_matchgate_circuit(n, gates, seed),
        }
    }

    pub fn n_qubits(&self) -> usize {
        match *self {
            TaskSpec::Random { n, .. }
            | TaskSpec::Linear { n, .. }
            | TaskSpec::Ising { n, .. }
            | TaskSpec::Matchgate { n, .. } => n,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            TaskSpec::Random { .. } => "random",
            TaskSpec::Linear { .. } => "linear",
            TaskSpec::Ising { .. } => "ising",
            TaskSpec::Matchgate { .. } => "matchgate",
        }
    }

    pub fn is_matchgate(&self) -> bool {
        matches!(self, TaskSpec::Matchgate { .. })
    }

    pub fn seed(&self) -> u64 {
        match *self {
            TaskSpec::Random { seed, .. }
            | TaskSpec::Linear { seed, .. }
            | TaskSpec::Ising { seed, .. }
            | TaskSpec::Matchgate { seed, .. } => seed,
        }
    }

    /// Same task with another seed.
    pub fn with_seed(&self, s: u64) -> TaskSpec {
        let mut out = self.clone();
        match &mut out {
            TaskSpec::Random { seed, .. }
            | TaskSpec::Linear { seed, .. }
            | TaskSpec::Ising { seed, .. }
            | TaskSpec::Matchgate { seed, .. } => *seed = s,
        }
        out
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSpec::Random { n, depth, seed } => write!(f, "random:n={n},depth={depth},seed={seed}"),
            TaskSpec::Linear { n, blocks, kind, seed } => write!(f, "linear:n={n},blocks={blocks},kind={kind},seed={seed}"),
            TaskSpec::Ising { n, j, t, steps, seed } => write!(f, "ising:n={n},J={j},t={t},steps={steps},seed={seed}"),
            TaskSpec::Matchgate { n, gates, seed } => write!(f, "matchgate:n={n},gates={gates},seed={seed}"),
        }
    }
}

impl FromStr for TaskSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| SpecError::Param(part.to_string()))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn take<T: FromStr>(kv: &mut std::collections::BTreeMap<String, String>, key: &'static str, default: Option<T>) -> Result<T, SpecError> {
            match kv.remove(key) {
                Some(v) => v.parse().map_err(|_| SpecError::Value(format!("{key}={v}"))),
                None => default.ok_or(SpecError::Missing(key)),
            }
        }
        let spec = match family.trim() {
            "random" => {
                let n = take(&mut kv, "n", None)?;
                TaskSpec::Random {
                    n,
                    depth: take(&mut kv, "depth", Some(n))?,
                    seed: take(&mut kv, "seed", Some(0))?,
                }
            }
            "linear" => TaskSpec::Linear {
                n: take(&mut kv, "n", None)?,
                blocks: take(&mut kv, "blocks", Some(3))?,
                kind: take(&mut kv, "kind", Some(LinearKind::CrxLadder))?,
                seed: take(&mut kv, "seed", Some(0))?,
            },
            "ising" => TaskSpec::Ising {
                n: take(&mut kv, "n", None)?,
                j: take(&mut kv, "J", Some(1.0))?,
                t: take(&mut kv, "t", Some(1.0))?,
                steps: take(&mut kv, "steps", Some(10))?,
                seed: take(&mut kv, "seed", Some(0))?,
            },
            "matchgate" => {
                let n = take(&mut kv, "n", None)?;
                TaskSpec::Matchgate {
                    n,
                    gates: take(&mut kv, "gates", Some(5 * n))?,
                    seed: take(&mut kv, "seed", Some(0))?,
                }
            }
            other => return Err(SpecError::Family(other.to_string())),
        };
        if let Some(k) = kv.keys().next() {
            return Err(SpecError::Param(k.clone()));
        }
        if spec.n_qubits() < 2 {
            return Err(SpecError::Value("n must be at least 2".into()));
        }
        if let TaskSpec::Ising { steps: 0, .. } = spec {
            return Err(SpecError::Value("steps must be at least 1".into()));
        }
        Ok(spec)
    }
}

/// Cuts `c` at entangling-layer boundaries: a slice closes when a single-qubit gate
/// follows a two-qubit gate, and `layers` such segments are grouped per slice.
/// Concatenating the slices gives `c` back.
pub fn slice_layers(c: &Circuit, layers: usize) -> Vec<Circuit> {
    let layers = layers.max(1);
    let mut out = Vec::new();
    let mut cur: Vec<crate::circuit::Gate> = Vec::new();
    let mut seen = 0;
    let mut prev_two = false;
    for g in c.gates() {
        if g.arity() == 1 && prev_two {
            seen += 1;
            if seen == layers {
                out.push(Circuit::from_parts(c.n_qubits(), std::mem::take(&mut cur)));
                seen = 0;
            }
        }
        prev_two = g.arity() == 2;
        cur.push(g.clone());
    }
    if !cur.is_empty() || out.is_empty() {
        out.push(Circuit::from_parts(c.n_qubits(), cur));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{compute_unitary, distance, GateKind};

    #[test]
    fn generators_are_deterministic() {
        for spec in ["random:n=4,depth=4,seed=7", "linear:n=4,blocks=2,kind=rxx_brick,seed=2", "ising:n=3,steps=2,seed=5", "matchgate:n=4,seed=1"] {
            let t: TaskSpec = spec.parse().unwrap();
            assert_eq!(crate::circuit::json::to_json(&t.generate()), crate::circuit::json::to_json(&t.generate()));
            assert_eq!(t.to_string().parse::<TaskSpec>().unwrap(), t);
        }
        assert_ne!(gen_random_circuit(4, 4, 1), gen_random_circuit(4, 4, 2));
    }

    #[test]
    fn random_circuit_shape() {
        assert!(gen_random_circuit(4, 0, 1).is_empty());
        let c = gen_random_circuit(4, 4, 3);
        let u = compute_unitary(&c).unwrap();
        assert!(math::unitarity_deviation(&u) < 1e-10);
        // each layer covers every wire exactly once
        let wires: usize = c.gates().iter().map(|g| g.arity()).sum();
        assert_eq!(wires, 16);
    }

    #[test]
    fn linear_layouts() {
        let c = gen_linear_circuit(3, 1, LinearKind::CrxLadder, 0);
        let kinds: Vec<&str> = c.gates().iter().map(|g| g.kind.name()).collect();
        assert_eq!(kinds, ["rx", "rz", "rx", "rz", "rx", "rz", "crx", "crx"]);
        assert_eq!(c.gates()[6].qubits.as_slice(), &[0, 1]);
        assert_eq!(c.gates()[7].qubits.as_slice(), &[1, 2]);
        let b = gen_linear_circuit(4, 1, LinearKind::RxxBrick, 0);
        let pairs: Vec<Vec<usize>> = b.gates().iter().filter(|g| g.arity() == 2).map(|g| g.qubits.to_vec()).collect();
        assert_eq!(pairs, vec![vec![0, 1], vec![2, 3], vec![1, 2]]);
        let big = gen_linear_circuit(10, 3, LinearKind::CrxLadder, 1);
        assert_eq!(big.interacting_pairs(), (0..9).map(|q| (q, q + 1)).collect::<Vec<_>>());
    }

    #[test]
    fn ising_zero_time_is_identity() {
        let spec = IsingSpec::random(3, 1.0, 0.0, 4, 9);
        assert!(gen_trotter_ising(&spec).remove_identities().is_empty());
    }

    #[test]
    fn ising_two_qubits_single_step_is_rzz() {
        let spec = IsingSpec::uniform(2, 1.0, [0.0; 3], 0.7, 1);
        let u = compute_unitary(&gen_trotter_ising(&spec)).unwrap();
        // exp(-i J t ZZ) is diagonal with phases -+ J t on even/odd parity
        let want = DMatrix::from_fn(4, 4, |i, j| {
            if i != j {
                ZERO
            } else if (i as u32).count_ones() % 2 == 0 {
                C64::from_polar(1.0, -0.7)
            } else {
                C64::from_polar(1.0, 0.7)
            }
        });
        assert!(distance(&u, &want).unwrap() < 1e-12);
        assert!(distance(&exact_evolution(&spec), &want).unwrap() < 1e-12);
    }

    #[test]
    fn single_field_matches_rotation() {
        // one wire, pure X field: exp(-i h t X) = Rx(2 h t)
        let spec = IsingSpec::uniform(2, 0.0, [0.8, 0.0, 0.0], 0.5, 1);
        let want = math::to_dmatrix4(&math::kron2(&math::rx(0.8), &math::rx(0.8)));
        assert!(distance(&exact_evolution(&spec), &want).unwrap() < 1e-12);
        assert!(distance(&compute_unitary(&gen_trotter_ising(&spec)).unwrap(), &want).unwrap() < 1e-12);
    }

    #[test]
    fn trotter_error_is_second_order() {
        let base = IsingSpec::random(4, 1.0, 1.0, 8, 3);
        let exact = exact_evolution(&base);
        let err = |steps| {
            let s = IsingSpec { steps, ..base.clone() };
            distance(&compute_unitary(&gen_trotter_ising(&s)).unwrap(), &exact).unwrap()
        };
        let ratio = err(8) / err(16);
        assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn matchgate_generator() {
        let c = gen_matchgate_circuit(5, 25, 3);
        assert_eq!(c.len(), 25);
        assert!(is_matchgate_circuit(&c));
        for g in c.gates() {
            match g.kind {
                GateKind::Rxx(_) => assert_eq!(g.qubits[1], g.qubits[0] + 1),
                GateKind::Rz(_) => {}
                _ => panic!("unexpected gate"),
            }
        }
        let u = compute_unitary(&gen_matchgate_circuit(4, 20, 1)).unwrap();
        assert!(is_parity_preserving(&u, 1e-12));
        let r = compute_unitary(&gen_random_circuit(3, 3, 0)).unwrap();
        assert!(!is_parity_preserving(&r, 1e-6));
    }

    #[test]
    fn spec_errors() {
        assert_eq!("qft:n=3".parse::<TaskSpec>(), Err(SpecError::Family("qft".into())));
        assert_eq!("random:depth=3".parse::<TaskSpec>(), Err(SpecError::Missing("n")));
        assert!("random:n=3,colour=red".parse::<TaskSpec>().is_err());
        assert!("linear:n=3,kind=ring".parse::<TaskSpec>().is_err());
        assert!("random:n=1".parse::<TaskSpec>().is_err());
        assert_eq!("matchgate:n=5".parse::<TaskSpec>().unwrap(), TaskSpec::Matchgate { n: 5, gates: 25, seed: 0 });
    }

    #[test]
    fn slicing_roundtrips() {
        let c = gen_linear_circuit(4, 3, LinearKind::RxxBrick, 5);
        let s = slice_layers(&c, 1);
        assert_eq!(s.len(), 3);
        let joined = s.iter().fold(Circuit::empty(4), |a, b| a.concat(b));
        assert_eq!(joined, c);
        assert_eq!(slice_layers(&c, 2).len(), 2);
        assert_eq!(slice_layers(&Circuit::empty(2), 1).len(), 1);
    }
}
