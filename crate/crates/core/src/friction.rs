//! Anisotropic Coulomb ground friction with a `tanh`-smoothed sign.
//!
//! Forces act at each plate's center of mass; the contact exerts no torque
//! about a plate's own center.

use nalgebra::{Matrix2, Vector2};

use crate::geometry::BodyStates;
use crate::model::RobotParams;

/// Global-frame friction force on one plate (N).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrictionForce {
    pub fx: f64,
    pub fy: f64,
}

/// Rotation taking plate-frame vectors to the global frame.
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Smooth stand-in for `sgn(v)`.
pub fn smoothed_sign(v: f64, eps: f64) -> f64 {
    (v / eps).tanh()
}

/// Friction in the plate frame for a plate-frame velocity
/// (x along the heading, y lateral).
pub fn local_friction(v_local: Vector2<f64>, params: &RobotParams) -> Vector2<f64> {
    let f = &params.friction;
    let weight = params.m * params.g;
    let xi_t = if v_local.x > 0.0 {
        f.xi_forward
    } else {
        f.xi_backward
    };
    Vector2::new(
        -weight * xi_t * smoothed_sign(v_local.x, f.smoothing_eps),
        -weight * f.xi_normal * smoothed_sign(v_local.y, f.smoothing_eps),
    )
}

pub fn global_friction(v_global: Vector2<f64>, theta: f64, params: &RobotParams) -> FrictionForce {
    let rot = rotation(theta);
    let f = rot * local_friction(rot.transpose() * v_global, params);
    FrictionForce { fx: f.x, fy: f.y }
}

/// Per-plate friction, returned as `(f_x, f_y)` sequences.
pub fn assemble_friction(bodies: &BodyStates, params: &RobotParams) -> (Vec<f64>, Vec<f64>) {
    let mut fx = Vec::with_capacity(bodies.len());
    let mut fy = Vec::with_capacity(bodies.len());
    for i in 0..bodies.len() {
        let f = global_friction(
            Vector2::new(bodies.vx[i], bodies.vy[i]),
            bodies.theta[i],
            params,
        );
        fx.push(f.fx);
        fy.push(f.fy);
    }
    (fx, fy)
}

/// Total power `sum f . v` dissipated by friction over all plates.
pub fn friction_power(bodies: &BodyStates, params: &RobotParams) -> f64 {
    let (fx, fy) = assemble_friction(bodies, params);
    (0..bodies.len())
        .map(|i| fx[i] * bodies.vx[i] + fy[i] * bodies.vy[i])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FrictionParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation(0.0), Matrix2::identity());
        let q = rotation(FRAC_PI_2);
        assert!((q - Matrix2::new(0.0, -1.0, 1.0, 0.0)).abs().max() < 1e-16);
        let r = rotation(0.3);
        assert!((r[(0, 0)] - 0.955_336).abs() < 1e-6);
        assert!((r[(0, 1)] + 0.295_520).abs() < 1e-6);
        assert!((r[(1, 0)] - 0.295_520).abs() < 1e-6);
    }

    #[test]
    fn local_examples() {
        let p = params();
        assert_eq!(local_friction(Vector2::zeros(), &p), Vector2::zeros());

        let f = local_friction(Vector2::new(0.1, 0.0), &p);
        assert!((f.x + 0.1 * 9.81 * 0.2).abs() < 1e-15);
        assert!((f.x + 0.196_200).abs() < 1e-6);
        assert_eq!(f.y, 0.0);

        let f = local_friction(Vector2::new(-0.1, 0.0), &p);
        assert!((f.x - 0.784_800).abs() < 1e-6);
    }

    #[test]
    fn global_examples() {
        let p = params();
        let f = global_friction(Vector2::new(0.1, 0.0), 0.0, &p);
        assert!((f.fx + 0.196_20).abs() < 1e-5 && f.fy == 0.0);

        let f = global_friction(Vector2::new(0.0, 0.1), FRAC_PI_2, &p);
        assert!(f.fx.abs() < 1e-12);
        assert!((f.fy + 0.196_20).abs() < 1e-5);

        let f = global_friction(Vector2::new(0.0, 0.1), 0.0, &p);
        assert_eq!(f.fx, 0.0);
        assert!((f.fy + 0.588_60).abs() < 1e-5);
    }

    #[test]
    fn assembly_is_per_body() {
        let p = params();
        let rest = BodyStates {
            x: vec![0.0; 3],
            y: vec![0.0; 3],
            theta: vec![0.0; 3],
            vx: vec![0.0; 3],
            vy: vec![0.0; 3],
            omega: vec![0.0; 3],
        };
        assert_eq!(assemble_friction(&rest, &p), (vec![0.0; 3], vec![0.0; 3]));

        let mut one = rest.clone();
        one.vx[1] = 0.05;
        let (fx, fy) = assemble_friction(&one, &p);
        assert!(fx[0] == 0.0 && fx[2] == 0.0 && fx[1] < 0.0);
        assert!(fy.iter().all(|&f| f == 0.0));

        let mut both = rest;
        both.vx = vec![0.1, 0.1, 0.0];
        let (fx, _) = assemble_friction(&both, &p);
        let single = global_friction(Vector2::new(0.1, 0.0), 0.0, &p);
        assert_eq!(fx[0], single.fx);
        assert_eq!(fx[1], single.fx);
    }

    #[test]
    fn dissipative_and_bounded() {
        let p = params();
        let bound = p.m * p.g * (0.8f64.powi(2) + 0.6f64.powi(2)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let v = Vector2::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
            let theta = rng.gen_range(-7.0..7.0);
            let f = global_friction(v, theta, &p);
            assert!(f.fx * v.x + f.fy * v.y <= 0.0);
            assert!(f.fx.hypot(f.fy) <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn frame_equivariance() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let v = Vector2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            let theta = rng.gen_range(-3.0..3.0);
            let alpha = rng.gen_range(-3.0..3.0);
            let rotated = global_friction(rotation(alpha) * v, theta + alpha, &p);
            let base = global_friction(v, theta, &p);
            let expected = rotation(alpha) * Vector2::new(base.fx, base.fy);
            assert!((rotated.fx - expected.x).abs() < 1e-12);
            assert!((rotated.fy - expected.y).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_anisotropy_ratio() {
        let p = params();
        let fwd = local_friction(Vector2::new(0.5, 0.0), &p).x.abs();
        let back = local_friction(Vector2::new(-0.5, 0.0), &p).x.abs();
        assert!((back / fwd - 0.8 / 0.2).abs() < 1e-12);
    }

    #[test]
    fn continuous_through_rest() {
        let p = params();
        let k = p.m * p.g * 0.8 / p.friction.smoothing_eps;
        for dv in [1e-9, 1e-7, 1e-5] {
            let a = local_friction(Vector2::new(dv, -dv), &p);
            let b = local_friction(Vector2::new(-dv, dv), &p);
            assert!((a - b).norm() <= k * 2.0 * dv * 2f64.sqrt());
        }
    }

    #[test]
    fn frictionless_is_zero() {
        let p = RobotParams {
            friction: FrictionParams::frictionless(),
            ..params()
        };
        let f = global_friction(Vector2::new(0.3, -0.2), 1.0, &p);
        assert_eq!((f.fx.abs(), f.fy.abs()), (0.0, 0.0));
    }
}
