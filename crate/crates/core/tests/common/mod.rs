#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use presynth::circuit::{Circuit, Gate};
use rand::Rng;

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Haar-random unitary via QR of a complex Ginibre matrix with the phase fix on R's diagonal.
pub fn haar<R: Rng>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(n, n, |_, _| Complex64::new(gaussian(rng), gaussian(rng)));
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let ph = d / d.norm();
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

pub fn haar2<R: Rng>(rng: &mut R) -> Matrix2<Complex64> {
    let m = haar(2, rng);
    Matrix2::from_fn(|i, j| m[(i, j)])
}

pub fn haar4<R: Rng>(rng: &mut R) -> Matrix4<Complex64> {
    let m = haar(4, rng);
    Matrix4::from_fn(|i, j| m[(i, j)])
}

/// Rz(a) on q1, then U and its inverse on (0,1), then Rz(-a) and CX(1,2).
pub fn pathological<R: Rng>(alpha: f64, rng: &mut R) -> Circuit {
    let u = haar4(rng);
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

pub fn swap() -> Matrix4<Complex64> {
    let mut m = Matrix4::zeros();
    for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        m[(i, j)] = Complex64::new(1.0, 0.0);
    }
    m
}
