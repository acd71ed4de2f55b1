//! Two-qubit KAK decomposition through the magic basis, with Weyl-chamber
//! canonicalization and minimal-CNOT templates.
//!
//! Locals are tracked through canonicalization so that `u = phase * l * N(a, b, c) * r`
//! with `N(a, b, c) = exp(i (a XX + b YY + c ZZ))` holds at every step.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use nalgebra::Matrix4;

use crate::circuit::{Gate, GateKind, GateMatrix};
use crate::math::{self, c, Mat2, Mat4, C64, ZERO};
use crate::merge::u3_from_matrix;

use super::SynthError;

/// Coordinates closer than this to a class boundary are treated as on it.
pub const COORD_TOL: f64 = 1e-9;
const RECON_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct KakDecomposition {
    /// Canonical Weyl coordinates with `pi/4 >= a >= b >= |c|`.
    pub coords: [f64; 3],
    pub cnot_count: usize,
    /// Gates over local qubits 0 and 1, using only CX and U3.
    pub gates: Vec<Gate>,
    /// Reconstruction distance (operator norm, up to phase).
    pub error: f64,
}

fn magic() -> Mat4 {
    let s = FRAC_1_SQRT_2;
    let (o, z, i) = (c(s, 0.0), ZERO, c(0.0, s));
    Mat4::new(o, z, z, i, z, i, o, z, z, i, -o, z, o, z, z, -i)
}

// Diagonals of XX, YY, ZZ in the magic basis.
const XS: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
const YS: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
const ZS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

/// Raw decomposition `u = phase * l * N(a, b, c) * r` before canonicalization.
struct RawKak {
    l: Mat4,
    r: Mat4,
    coords: [f64; 3],
}

fn raw_kak(u: &Mat4) -> Option<RawKak> {
    let b = magic();
    let det = u.determinant();
    let u4 = u / det.powf(0.25);
    let ub = b.adjoint() * u4 * b;
    let m = ub.transpose() * ub;
    let re = m.map(|z| z.re);
    let im = m.map(|z| z.im);
    let mut found: Option<Matrix4<f64>> = None;
    for r in [1.0, 0.618_033_988_7, 2.718_281_828, -1.414_213_56] {
        let eig = (re + im * r).symmetric_eigen();
        let p = eig.eigenvectors;
        let pc = p.map(|x| c(x, 0.0));
        let d = pc.transpose() * m * pc;
        let off = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| d[(i, j)].norm())
            .fold(0.0, f64::max);
        if off < 1e-9 {
            found = Some(p);
            break;
        }
    }
    let mut p = found?;
    if p.determinant() < 0.0 {
        for i in 0..4 {
            p[(i, 0)] = -p[(i, 0)];
        }
    }
    let pc = p.map(|x| c(x, 0.0));
    let dm = pc.transpose() * m * pc;
    let mut d: Vec<C64> = (0..4).map(|i| dm[(i, i)].sqrt()).collect();
    let prod: C64 = d.iter().product();
    if prod.re < 0.0 {
        d[0] = -d[0];
    }
    let dinv = Mat4::from_diagonal(&nalgebra::Vector4::new(d[0].inv(), d[1].inv(), d[2].inv(), d[3].inv()));
    let k1 = ub * pc * dinv;
    if k1.iter().any(|z| z.im.abs() > 1e-6) {
        return None;
    }
    let k1 = k1.map(|z| c(z.re, 0.0));
    let lam: Vec<f64> = d.iter().map(|z| z.arg()).collect();
    let dot = |s: &[f64; 4]| lam.iter().zip(s.iter()).map(|(l, s)| l * s).sum::<f64>() / 4.0;
    Some(RawKak {
        l: b * k1 * b.adjoint(),
        r: b * pc.transpose() * b.adjoint(),
        coords: [dot(&XS), dot(&YS), dot(&ZS)],
    })
}

fn pauli_pair(p: &Mat2) -> Mat4 {
    math::kron2(p, p)
}

/// Moves the coordinates into the Weyl chamber `pi/4 >= a >= b >= |c|`, updating the
/// locals so the product is unchanged up to phase.
fn canonicalize(k: &mut RawKak) {
    let paulis = [math::pauli_x(), math::pauli_y(), math::pauli_z()];
    let id = Mat2::identity();
    // Shift each coordinate into (-pi/4, pi/4] by multiples of pi/2.
    for axis in 0..3 {
        let pp = pauli_pair(&paulis[axis]);
        while k.coords[axis] > FRAC_PI_4 + 1e-15 {
            k.coords[axis] -= FRAC_PI_2;
            k.r = pp * k.r;
        }
        while k.coords[axis] <= -FRAC_PI_4 + 1e-15 {
            k.coords[axis] += FRAC_PI_2;
            k.r = pp * k.r;
        }
    }
    let s = math::phase_gate(2);
    let h = math::hadamard();
    let rx = math::rx(FRAC_PI_2);
    // swap(a, b) conjugates by S(x)S, swap(b, c) by Rx(pi/2)(x)Rx(pi/2).
    let swap = |k: &mut RawKak, x: usize, y: usize| {
        let v = match (x, y) {
            (0, 1) => s,
            (1, 2) => rx,
            _ => h,
        };
        let q = math::kron2(&v, &v);
        // N(.., x, .., y, ..) = Q^dagger N(.., y, .., x, ..) Q, check both orientations
        let mut swapped = k.coords;
        swapped.swap(x, y);
        let lhs = n_gate(&k.coords);
        let cand = q.adjoint() * n_gate(&swapped) * q;
        if (lhs - cand).norm() < 1e-9 {
            k.l *= q.adjoint();
            k.r = q * k.r;
        } else {
            k.l *= q;
            k.r = q.adjoint() * k.r;
        }
        k.coords = swapped;
    };
    for (x, y) in [(0, 1), (1, 2), (0, 1)] {
        if k.coords[x].abs() < k.coords[y].abs() {
            swap(k, x, y);
        }
    }
    // Pair negations: Z(x)I flips (a, b), X(x)I flips (b, c), Y(x)I flips (a, c).
    let negate = |k: &mut RawKak, x: usize, y: usize| {
        let p = match (x, y) {
            (0, 1) => paulis[2],
            (1, 2) => paulis[0],
            _ => paulis[1],
        };
        let q = math::kron2(&id, &p);
        k.l *= q;
        k.r = q * k.r;
        k.coords[x] = -k.coords[x];
        k.coords[y] = -k.coords[y];
    };
    if k.coords[0] < 0.0 {
        if k.coords[1] < 0.0 {
            negate(k, 0, 1);
        } else {
            negate(k, 0, 2);
        }
    }
    if k.coords[1] < 0.0 {
        negate(k, 1, 2);
    }
    if (k.coords[0] - FRAC_PI_4).abs() < 1e-12 && k.coords[2] < 0.0 {
        k.coords[0] -= FRAC_PI_2;
        k.r = pauli_pair(&paulis[0]) * k.r;
        negate(k, 0, 2);
    }
}

/// `exp(i (a XX + b YY + c ZZ))`, built from its magic-basis diagonal.
pub fn n_gate(coords: &[f64; 3]) -> Mat4 {
    let b = magic();
    let diag = nalgebra::Vector4::from_fn(|i, _| {
        math::cis(coords[0] * XS[i] + coords[1] * YS[i] + coords[2] * ZS[i])
    });
    b * Mat4::from_diagonal(&diag) * b.adjoint()
}

fn canonical_kak(u: &Mat4) -> Option<RawKak> {
    let mut k = raw_kak(u)?;
    canonicalize(&mut k);
    Some(k)
}

/// Canonical Weyl coordinates of `u`.
pub fn weyl_coordinates(u: &Mat4) -> Result<[f64; 3], SynthError> {
    canonical_kak(u)
        .or_else(|| canonical_kak(&(u * n_gate(&PERTURB))))
        .map(|k| k.coords)
        .ok_or(SynthError::NumericalInstability)
}

const PERTURB: [f64; 3] = [1e-12, 2e-12, 3e-12];

pub fn cnot_count_for(coords: &[f64; 3]) -> usize {
    let [a, b, c] = *coords;
    if a.abs() < COORD_TOL && b.abs() < COORD_TOL && c.abs() < COORD_TOL {
        0
    } else if (a - FRAC_PI_4).abs() < COORD_TOL && b.abs() < COORD_TOL && c.abs() < COORD_TOL {
        1
    } else if c.abs() < COORD_TOL {
        2
    } else {
        3
    }
}

fn mat(g: &Gate) -> Mat4 {
    crate::merge::pair_local_matrix(g, 0, 1)
}

fn product(gates: &[Gate]) -> Mat4 {
    gates.iter().fold(Mat4::identity(), |acc, g| mat(g) * acc)
}

/// Template circuit realizing canonical coordinates with the given CNOT count.
fn template(coords: &[f64; 3], n_cx: usize) -> Vec<Gate> {
    let [a, b, c] = *coords;
    match n_cx {
        0 => vec![],
        1 => vec![Gate::cx(0, 1)],
        2 => vec![Gate::cx(0, 1), Gate::rx(-2.0 * a, 0), Gate::rz(-2.0 * b, 1), Gate::cx(0, 1)],
        _ => vec![
            Gate::cx(1, 0),
            Gate::rz(FRAC_PI_2 - 2.0 * a, 0),
            Gate::ry(FRAC_PI_2 - 2.0 * b, 1),
            Gate::cx(0, 1),
            Gate::ry(2.0 * c - FRAC_PI_2, 1),
            Gate::cx(1, 0),
        ],
    }
}

/// Splits a local 4x4 unitary into U3 gates on local qubits 0 and 1 (identities dropped).
fn local_gates(k: &Mat4) -> Vec<Gate> {
    let (high, low) = math::kron_factor(k);
    let mut out = Vec::new();
    for (m, q) in [(low, 0usize), (high, 1usize)] {
        if !math::is_identity_up_to_phase(&math::to_dmatrix2(&m), 1e-12) {
            out.push(u3_from_matrix(&m, q));
        }
    }
    out
}

/// Merges consecutive single-qubit gates per wire into one U3 each.
fn fuse_locals(gates: Vec<Gate>) -> Vec<Gate> {
    let mut out: Vec<Gate> = Vec::new();
    let mut pending: [Option<Mat2>; 2] = [None, None];
    let flush = |pending: &mut [Option<Mat2>; 2], out: &mut Vec<Gate>, q: usize| {
        if let Some(m) = pending[q].take() {
            if !math::is_identity_up_to_phase(&math::to_dmatrix2(&m), 1e-12) {
                out.push(u3_from_matrix(&m, q));
            }
        }
    };
    for g in gates {
        if g.is_single() {
            let q = g.qubits[0];
            let m = match g.matrix() {
                GateMatrix::One(m) => m,
                GateMatrix::Two(_) => unreachable!(),
            };
            pending[q] = Some(m * pending[q].unwrap_or_else(Mat2::identity));
        } else {
            flush(&mut pending, &mut out, 0);
            flush(&mut pending, &mut out, 1);
            out.push(g);
        }
    }
    flush(&mut pending, &mut out, 0);
    flush(&mut pending, &mut out, 1);
    out
}

fn attempt(u: &Mat4, target: &Mat4) -> Option<KakDecomposition> {
    let k = canonical_kak(u)?;
    let n_cx = cnot_count_for(&k.coords);
    let t_gates = template(&k.coords, n_cx);
    let t = product(&t_gates);
    let kt = canonical_kak(&t)?;
    // u ~ l N r and t ~ lt N rt, so u ~ (l lt^dag) t (rt^dag r)
    let before = kt.r.adjoint() * k.r;
    let after = k.l * kt.l.adjoint();
    let mut gates = local_gates(&before);
    gates.extend(t_gates);
    gates.extend(local_gates(&after));
    let gates = fuse_locals(gates);
    let error = math::phase_min_opnorm(&math::to_dmatrix4(&product(&gates)), &math::to_dmatrix4(target));
    if error > RECON_TOL {
        return None;
    }
    Some(KakDecomposition {
        coords: k.coords,
        cnot_count: n_cx,
        gates,
        error,
    })
}

/// Decomposes `u` (local basis `bit(q0) + 2 bit(q1)`) into at most 3 CX and at most
/// 15 U3 gates, with the CNOT count fixed by the Weyl coordinates.
pub fn kak_decompose(u: &Mat4) -> Result<KakDecomposition, SynthError> {
    if math::unitarity_deviation(&math::to_dmatrix4(u)) > 1e-8 {
        return Err(SynthError::NotUnitary);
    }
    attempt(u, u)
        .or_else(|| attempt(&(u * n_gate(&PERTURB)), u))
        .ok_or(SynthError::NumericalInstability)
}

/// Matrix of a CX with control on local bit 0.
pub fn cx_matrix() -> Mat4 {
    match GateKind::Cx.matrix() {
        GateMatrix::Two(m) => m,
        GateMatrix::One(_) => unreachable!(),
    }
}
