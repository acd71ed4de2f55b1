use crate::math::{self, Mat2};

/// ZYZ angles: `u = e^{i phase} Rz(phi) Ry(theta) Rz(lambda)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerZyz {
    pub theta: f64,
    pub phi: f64,
    pub lambda: f64,
    pub phase: f64,
}

const GIMBAL_TOL: f64 = 1e-13;

/// Angles are wrapped into `(-pi, pi]`; when `theta` is 0 or pi, `lambda` is 0.
pub fn euler_zyz(u: &Mat2) -> EulerZyz {
    let det = u.determinant();
    let v = u / det.sqrt();
    let (a, b) = (v[(1, 1)], v[(1, 0)]);
    let theta = 2.0 * b.norm().atan2(a.norm());
    let (phi, lambda) = if b.norm() < GIMBAL_TOL {
        (2.0 * a.arg(), 0.0)
    } else if a.norm() < GIMBAL_TOL {
        (2.0 * b.arg(), 0.0)
    } else {
        (a.arg() + b.arg(), a.arg() - b.arg())
    };
    let (phi, lambda) = (math::wrap_angle(phi), math::wrap_angle(lambda));
    let r = math::rz(phi) * math::ry(theta) * math::rz(lambda);
    // phase from the better-conditioned entry of the reconstruction
    let (i, j) = if r[(0, 0)].norm() >= r[(1, 0)].norm() { (0, 0) } else { (1, 0) };
    let phase = (u[(i, j)] / r[(i, j)]).arg();
    EulerZyz {
        theta,
        phi,
        lambda,
        phase,
    }
}

impl EulerZyz {
    pub fn matrix(&self) -> Mat2 {
        math::rz(self.phi) * math::ry(self.theta) * math::rz(self.lambda) * math::cis(self.phase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_has_zero_angles() {
        let e = euler_zyz(&Mat2::identity());
        assert_eq!((e.theta, e.phi, e.lambda), (0.0, 0.0, 0.0));
        assert!(e.phase.abs() < 1e-15);
    }

    #[test]
    fn rz_uses_lambda_zero() {
        let e = euler_zyz(&math::rz(0.4));
        assert!(e.theta.abs() < 1e-15);
        assert_eq!(e.lambda, 0.0);
        assert!((e.phi + e.lambda - 0.4).abs() < 1e-12);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let u = math::u3(rng.gen_range(0.0..3.2), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0))
                * math::cis(rng.gen_range(-3.0..3.0));
            let e = euler_zyz(&u);
            assert!((e.matrix() - u).norm() < 1e-12);
        }
        for u in [math::pauli_x(), math::pauli_y(), math::hadamard(), math::phase_gate(3)] {
            assert!((euler_zyz(&u).matrix() - u).norm() < 1e-12);
        }
    }
}
