//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn hadamard() -> Mat2 {
    let h = c(FRAC_1_SQRT_2, 0.0);
    Mat2::new(h, h, h, -h)
}

pub fn pauli_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// `diag(1, e^{i k pi/4})`, so `k = 1` is T and `k = 2` is S.
pub fn phase_gate(k: i32) -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, cis(k as f64 * FRAC_PI_4))
}

pub fn rz(theta: f64) -> Mat2 {
    Mat2::new(cis(-theta / 2.0), ZERO, ZERO, cis(theta / 2.0))
}

pub fn rx(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    Mat2::new(c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0))
}

pub fn ry(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    Mat2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}

/// `U3(theta, phi, lambda) = e^{i(phi+lambda)/2} Rz(phi) Ry(theta) Rz(lambda)`.
pub fn u3(theta: f64, phi: f64, lambda: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    Mat2::new(
        c(co, 0.0),
        -cis(lambda) * s,
        cis(phi) * s,
        cis(phi + lambda) * co,
    )
}

/// Kronecker product with `high` acting on local bit 1 and `low` on local bit 0.
pub fn kron2(high: &Mat2, low: &Mat2) -> Mat4 {
    let mut out = Mat4::zeros();
    for r1 in 0..2 {
        for c1 in 0..2 {
            for r0 in 0..2 {
                for c0 in 0..2 {
                    out[(r0 + 2 * r1, c0 + 2 * c1)] = high[(r1, c1)] * low[(r0, c0)];
                }
            }
        }
    }
    out
}

/// Split `k = high (x) low` back into its factors. `low` is normalized to unit determinant.
pub fn kron_factor(k: &Mat4) -> (Mat2, Mat2) {
    let (mut bi, mut bj, mut best) = (0, 0, -1.0);
    for i in 0..4 {
        for j in 0..4 {
            let m = k[(i, j)].norm();
            if m > best {
                best = m;
                bi = i;
                bj = j;
            }
        }
    }
    let (i0, i1) = (bi % 2, bi / 2);
    let (j0, j1) = (bj % 2, bj / 2);
    let mut low = Mat2::zeros();
    for r0 in 0..2 {
        for c0 in 0..2 {
            low[(r0, c0)] = k[(r0 + 2 * i1, c0 + 2 * j1)];
        }
    }
    let det = low.determinant();
    low /= det.sqrt();
    let mut high = Mat2::zeros();
    for r1 in 0..2 {
        for c1 in 0..2 {
            high[(r1, c1)] = k[(i0 + 2 * r1, j0 + 2 * c1)] / low[(i0, j0)];
        }
    }
    (high, low)
}

/// Unit quaternion `(w, x, y, z)` of a 2x2 unitary after removing its determinant phase.
/// The sign is fixed so the first nonzero component is positive.
pub fn quaternion(u: &Mat2) -> [f64; 4] {
    let det = u.determinant();
    let scale = det.sqrt().inv();
    let a = u[(0, 0)] * scale;
    let b = u[(1, 0)] * scale;
    // u = [[w - i z, -y - i x], [y - i x, w + i z]]
    let mut q = [a.re, -b.im, b.re, -a.im];
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in q.iter_mut() {
        *v /= norm;
    }
    if let Some(first) = q.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            for v in q.iter_mut() {
                *v = -*v;
            }
        }
    }
    q
}

/// Operator-norm distance between two 2x2 unitaries, minimized over global phase.
pub fn distance2(u: &Mat2, v: &Mat2) -> f64 {
    let p = quaternion(u);
    let q = quaternion(v);
    // |p -+ q|^2 = 2 -+ 2 p.q, without the cancellation of the closed form
    let diff = |s: f64| p.iter().zip(q.iter()).map(|(a, b)| (a - s * b).powi(2)).sum::<f64>();
    diff(1.0).min(diff(-1.0)).sqrt()
}

/// Operator-norm distance between two unitaries of equal dimension, minimized over
/// global phase. Uses the eigenphases of `v^dagger u`: the optimal phase sits at the
/// midpoint of the shortest arc covering them.
pub fn phase_min_opnorm(u: &DMatrix<C64>, v: &DMatrix<C64>) -> f64 {
    let w = v.adjoint() * u;
    let eig = eigenvalues_unitary(&w);
    let mut angles: Vec<f64> = eig.iter().map(|z| z.arg()).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = angles.len();
    if n == 0 {
        return 0.0;
    }
    // Largest gap between consecutive eigenphases (cyclic); the covering arc is the rest.
    let mut max_gap = angles[0] + 2.0 * PI - angles[n - 1];
    for k in 1..n {
        max_gap = max_gap.max(angles[k] - angles[k - 1]);
    }
    let arc = (2.0 * PI - max_gap).max(0.0);
    2.0 * (arc / 4.0).sin()
}

/// Eigenvalues of a (numerically) unitary matrix.
///
/// Complex Schur can stall on near-degenerate unitaries, so its iteration count is
/// capped; on failure the eigenvectors come from the Hermitian pencil
/// `(W + W^dagger)/2 + a (W - W^dagger)/2i`, which shares them with `W` when `W` is normal.
pub fn eigenvalues_unitary(w: &DMatrix<C64>) -> Vec<C64> {
    if w.nrows() == 1 {
        return vec![w[(0, 0)]];
    }
    if let Some(schur) = nalgebra::linalg::Schur::try_new(w.clone(), 1e-15, 500) {
        let (_, t) = schur.unpack();
        return (0..t.nrows()).map(|i| t[(i, i)]).collect();
    }
    eigenvalues_by_pencil(w)
}

fn eigenvalues_by_pencil(w: &DMatrix<C64>) -> Vec<C64> {
    let wa = w.adjoint();
    let a = 0.754_877_666_2;
    let h = (w + &wa).map(|z| z * 0.5) + (w - &wa).map(|z| z * C64::new(0.0, -0.5 * a));
    let h = (&h + h.adjoint()).map(|z| z * 0.5);
    let v = h.symmetric_eigen().eigenvectors;
    (0..v.ncols())
        .map(|k| {
            let col = v.column(k);
            (col.adjoint() * w * col)[(0, 0)]
        })
        .collect()
}

/// Max-norm deviation of `u^dagger u` from the identity.
pub fn unitarity_deviation(u: &DMatrix<C64>) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// True when `u` equals `e^{i phi} I` to `tol` in max norm.
pub fn is_identity_up_to_phase(u: &DMatrix<C64>, tol: f64) -> bool {
    let d = u.nrows();
    let tr: C64 = (0..d).map(|i| u[(i, i)]).sum();
    if tr.norm() < 0.5 * d as f64 {
        return false;
    }
    let ph = tr / tr.norm();
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { ph } else { ZERO };
            if (u[(i, j)] - target).norm() > tol {
                return false;
            }
        }
    }
    true
}

pub fn to_dmatrix2(m: &Mat2) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

pub fn to_dmatrix4(m: &Mat4) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Returns `k` when `theta` is within `tol` of `k pi/4` (mod 2 pi), `k` in `0..8`.
pub fn pi4_multiple(theta: f64, tol: f64) -> Option<u8> {
    let x = theta / FRAC_PI_4;
    let k = x.round();
    if (x - k).abs() * FRAC_PI_4 <= tol {
        Some(k.rem_euclid(8.0) as u8)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_factor_roundtrip() {
        let a = u3(0.3, 1.1, -0.4);
        let b = u3(2.0, -0.7, 0.9);
        let (h, l) = kron_factor(&kron2(&a, &b));
        let back = kron2(&h, &l);
        assert!((back - kron2(&a, &b)).norm() < 1e-12);
    }

    #[test]
    fn distance2_matches_general_routine() {
        let u = u3(0.3, 1.1, -0.4);
        let v = u3(0.5, 0.2, 0.1) * cis(0.9);
        let d1 = distance2(&u, &v);
        let d2 = phase_min_opnorm(&to_dmatrix2(&u), &to_dmatrix2(&v));
        assert!((d1 - d2).abs() < 1e-10, "{d1} vs {d2}");
    }

    #[test]
    fn u3_is_phased_euler_product() {
        let (t, p, l) = (0.7, -1.2, 2.5);
        let euler = rz(p) * ry(t) * rz(l) * cis((p + l) / 2.0);
        assert!((u3(t, p, l) - euler).norm() < 1e-12);
    }

    #[test]
    fn pencil_eigenvalues_agree_with_schur() {
        let u = to_dmatrix4(&(kron2(&u3(0.3, 1.1, -0.4), &u3(1.3, 0.2, 0.8)) * Mat4::from_diagonal(&nalgebra::Vector4::new(ONE, cis(0.4), cis(-1.0), cis(2.2)))));
        let mut a: Vec<f64> = eigenvalues_unitary(&u).iter().map(|z| z.arg()).collect();
        let mut b: Vec<f64> = eigenvalues_by_pencil(&u).iter().map(|z| z.arg()).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }
}
