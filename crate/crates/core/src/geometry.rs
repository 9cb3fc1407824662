//! Segment shape and chain kinematics.
//!
//! Each deformed segment is an isosceles trapezoid: the two plates are the
//! legs, the left and right actuators the parallel sides. For plate width `r`
//! this gives a relative angle `phi = 2 asin((l_r - l_l) / (2 r))` and a
//! midline of length `(l_l + l_r) / 2` joining the plate centers. The midline
//! of segment `i` points along `beta_i = theta_i - phi_i / 2`, the bisector of
//! the two plate headings, and `theta_{i+1} = theta_i - phi_i`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("actuator lengths must be positive (left {left}, right {right})")]
    NonPositiveLength { left: f64, right: f64 },
    #[error("|l_r - l_l| = {diff} must be below 2r = {limit}: trapezoid cannot close")]
    OpenTrapezoid { diff: f64, limit: f64 },
    #[error("non-finite actuator sample")]
    NonFinite,
    #[error("expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// One actuator length with its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SideSample {
    pub l: f64,
    pub dl: f64,
    pub ddl: f64,
}

impl SideSample {
    pub fn new(l: f64, dl: f64, ddl: f64) -> Self {
        Self { l, dl, ddl }
    }

    /// A length held constant.
    pub fn fixed(l: f64) -> Self {
        Self { l, dl: 0.0, ddl: 0.0 }
    }
}

/// Prescribed left and right actuator state of one segment at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentActuation {
    pub left: SideSample,
    pub right: SideSample,
}

impl SegmentActuation {
    pub fn symmetric(side: SideSample) -> Self {
        Self {
            left: side,
            right: side,
        }
    }

    pub fn midline(&self) -> f64 {
        0.5 * (self.left.l + self.right.l)
    }
}

/// Relative angle and midline length of a segment with their derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentShape {
    pub phi: f64,
    pub dphi: f64,
    pub ddphi: f64,
    pub lbar: f64,
    pub dlbar: f64,
    pub ddlbar: f64,
}

pub fn segment_shape(act: &SegmentActuation, r: f64) -> Result<SegmentShape, GeometryError> {
    let (left, right) = (act.left, act.right);
    let all = [left.l, left.dl, left.ddl, right.l, right.dl, right.ddl];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if left.l <= 0.0 || right.l <= 0.0 {
        return Err(GeometryError::NonPositiveLength {
            left: left.l,
            right: right.l,
        });
    }
    let diff = right.l - left.l;
    if diff.abs() >= 2.0 * r {
        return Err(GeometryError::OpenTrapezoid {
            diff: diff.abs(),
            limit: 2.0 * r,
        });
    }

    let u = diff / (2.0 * r);
    let du = (right.dl - left.dl) / (2.0 * r);
    let ddu = (right.ddl - left.ddl) / (2.0 * r);
    // cos(phi / 2)
    let c = (1.0 - u * u).sqrt();

    Ok(SegmentShape {
        phi: 2.0 * u.asin(),
        dphi: 2.0 * du / c,
        ddphi: 2.0 * ddu / c + 2.0 * u * du * du / (c * c * c),
        lbar: 0.5 * (left.l + right.l),
        dlbar: 0.5 * (left.dl + right.dl),
        ddlbar: 0.5 * (left.ddl + right.ddl),
    })
}

/// Shapes of every segment of an actuation sample.
pub fn segment_shapes(
    acts: &[SegmentActuation],
    r: f64,
) -> Result<Vec<SegmentShape>, GeometryError> {
    acts.iter().map(|a| segment_shape(a, r)).collect()
}

/// `theta_i = theta_1 - sum_{j<i} phi_j`, returning all `n + 1` headings.
pub fn body_headings(theta1: f64, phis: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phis.len() + 1);
    let mut theta = theta1;
    out.push(theta);
    for phi in phis {
        theta -= phi;
        out.push(theta);
    }
    out
}

/// Link vectors between consecutive plate centers and their derivatives.
///
/// The second derivative depends on the (unknown) head angular acceleration
/// `alpha1`, and is stored split as `known + coeff * alpha1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkVectors {
    pub lx: Vec<f64>,
    pub ly: Vec<f64>,
    pub dlx: Vec<f64>,
    pub dly: Vec<f64>,
    pub ddlx_known: Vec<f64>,
    pub ddly_known: Vec<f64>,
    pub ddlx_coeff: Vec<f64>,
    pub ddly_coeff: Vec<f64>,
}

impl LinkVectors {
    pub fn len(&self) -> usize {
        self.lx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lx.is_empty()
    }

    /// Evaluated second derivatives for a given head angular acceleration.
    pub fn second_derivative(&self, alpha1: f64) -> (Vec<f64>, Vec<f64>) {
        let ddx = self
            .ddlx_known
            .iter()
            .zip(&self.ddlx_coeff)
            .map(|(a, b)| a + b * alpha1)
            .collect();
        let ddy = self
            .ddly_known
            .iter()
            .zip(&self.ddly_coeff)
            .map(|(a, b)| a + b * alpha1)
            .collect();
        (ddx, ddy)
    }
}

/// Link vectors for headings `theta` and heading rates `omega` (both `n + 1`
/// long, as produced by [`body_headings`]) and the `n` segment shapes.
pub fn link_vectors(
    theta: &[f64],
    omega: &[f64],
    shapes: &[SegmentShape],
) -> Result<LinkVectors, GeometryError> {
    let n = shapes.len();
    for (what, got) in [("headings", theta.len()), ("heading rates", omega.len())] {
        if got != n + 1 {
            return Err(GeometryError::Dimension {
                what,
                expected: n + 1,
                got,
            });
        }
    }

    let mut links = LinkVectors {
        lx: Vec::with_capacity(n),
        ly: Vec::with_capacity(n),
        dlx: Vec::with_capacity(n),
        dly: Vec::with_capacity(n),
        ddlx_known: Vec::with_capacity(n),
        ddly_known: Vec::with_capacity(n),
        ddlx_coeff: Vec::with_capacity(n),
        ddly_coeff: Vec::with_capacity(n),
    };
    // sum_{j<i} ddphi_j: the shape part of theta_i's acceleration (negated)
    let mut ddphi_before = 0.0;
    for (i, s) in shapes.iter().enumerate() {
        let beta = theta[i] - 0.5 * s.phi;
        let dbeta = omega[i] - 0.5 * s.dphi;
        let ddbeta_known = -ddphi_before - 0.5 * s.ddphi;
        let (sn, cs) = beta.sin_cos();

        links.lx.push(s.lbar * cs);
        links.ly.push(s.lbar * sn);
        links.dlx.push(s.dlbar * cs - s.lbar * sn * dbeta);
        links.dly.push(s.dlbar * sn + s.lbar * cs * dbeta);
        links.ddlx_known.push(
            s.ddlbar * cs
                - 2.0 * s.dlbar * sn * dbeta
                - s.lbar * cs * dbeta * dbeta
                - s.lbar * sn * ddbeta_known,
        );
        links.ddly_known.push(
            s.ddlbar * sn + 2.0 * s.dlbar * cs * dbeta - s.lbar * sn * dbeta * dbeta
                + s.lbar * cs * ddbeta_known,
        );
        links.ddlx_coeff.push(-s.lbar * sn);
        links.ddly_coeff.push(s.lbar * cs);

        ddphi_before += s.ddphi;
    }
    Ok(links)
}

/// Poses and velocities of all `n + 1` plates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyStates {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub omega: Vec<f64>,
}

impl BodyStates {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `x_i = x_1 - sum_{j<i} Lx_j`, likewise for y.
pub fn body_positions(head: (f64, f64), links: &LinkVectors) -> (Vec<f64>, Vec<f64>) {
    (
        chain_from_head(head.0, &links.lx),
        chain_from_head(head.1, &links.ly),
    )
}

/// Body velocities from the head rates `(vx1, vy1, omega1)`.
pub fn body_velocities(
    head_rates: (f64, f64, f64),
    links: &LinkVectors,
    shapes: &[SegmentShape],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dphis: Vec<f64> = shapes.iter().map(|s| s.dphi).collect();
    (
        chain_from_head(head_rates.0, &links.dlx),
        chain_from_head(head_rates.1, &links.dly),
        body_headings(head_rates.2, &dphis),
    )
}

fn chain_from_head(head: f64, steps: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    let mut v = head;
    out.push(v);
    for s in steps {
        v -= s;
        out.push(v);
    }
    out
}

/// Headings, rates and link vectors of the chain for a given head attitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub shapes: Vec<SegmentShape>,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub links: LinkVectors,
}

impl Chain {
    pub fn new(theta1: f64, omega1: f64, shapes: Vec<SegmentShape>) -> Self {
        let phis: Vec<f64> = shapes.iter().map(|s| s.phi).collect();
        let dphis: Vec<f64> = shapes.iter().map(|s| s.dphi).collect();
        let theta = body_headings(theta1, &phis);
        let omega = body_headings(omega1, &dphis);
        let links = link_vectors(&theta, &omega, &shapes).expect("lengths agree by construction");
        Self {
            shapes,
            theta,
            omega,
            links,
        }
    }

    pub fn from_actuation(
        theta1: f64,
        omega1: f64,
        acts: &[SegmentActuation],
        r: f64,
    ) -> Result<Self, GeometryError> {
        Ok(Self::new(theta1, omega1, segment_shapes(acts, r)?))
    }

    /// Full body states for a head at `(x1, y1)` moving with `(vx1, vy1)`.
    pub fn bodies(&self, x1: f64, y1: f64, vx1: f64, vy1: f64) -> BodyStates {
        let (x, y) = body_positions((x1, y1), &self.links);
        let (vx, vy, _) = body_velocities((vx1, vy1, self.omega[0]), &self.links, &self.shapes);
        BodyStates {
            x,
            y,
            theta: self.theta.clone(),
            vx,
            vy,
            omega: self.omega.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_operators;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn fixed(l_l: f64, l_r: f64) -> SegmentActuation {
        SegmentActuation {
            left: SideSample::fixed(l_l),
            right: SideSample::fixed(l_r),
        }
    }

    #[test]
    fn symmetric_segment_is_straight() {
        let s = segment_shape(&fixed(0.1, 0.1), 0.1).unwrap();
        assert_eq!(s.phi, 0.0);
        assert_eq!(s.lbar, 0.1);
    }

    #[test]
    fn bent_segment_angle() {
        let s = segment_shape(&fixed(0.09, 0.11), 0.1).unwrap();
        assert!((s.phi - 2.0 * 0.1f64.asin()).abs() < 1e-15);
        assert!((s.phi - 0.200_334_8).abs() < 1e-7);
        assert!((s.lbar - 0.1).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_closure_limits() {
        assert!(matches!(
            segment_shape(&fixed(0.05, 0.30), 0.1),
            Err(GeometryError::OpenTrapezoid { .. })
        ));
        assert!(matches!(
            segment_shape(&fixed(0.0, 0.1), 0.1),
            Err(GeometryError::NonPositiveLength { .. })
        ));
        assert!(matches!(
            segment_shape(&fixed(f64::NAN, 0.1), 0.1),
            Err(GeometryError::NonFinite)
        ));
    }

    #[test]
    fn angle_rate_matches_closed_form() {
        let act = SegmentActuation {
            left: SideSample::new(0.09, -0.01, 0.0),
            right: SideSample::new(0.11, 0.02, 0.0),
        };
        let s = segment_shape(&act, 0.1).unwrap();
        let expected = (0.02 - -0.01) / (0.1 * (s.phi / 2.0).cos());
        assert!((s.dphi - expected).abs() < 1e-14);
    }

    #[test]
    fn heading_examples() {
        let th = body_headings(0.3, &[0.1, -0.2]);
        assert!((th[0] - 0.3).abs() < 1e-15);
        assert!((th[1] - 0.2).abs() < 1e-15);
        assert!((th[2] - 0.4).abs() < 1e-15);
        assert_eq!(body_headings(0.0, &[0.0, 0.0, 0.0]), vec![0.0; 4]);
        assert_eq!(body_headings(1.0, &[0.5]), vec![1.0, 0.5]);
    }

    fn straight(theta1: f64, phi: f64) -> LinkVectors {
        let shape = SegmentShape {
            phi,
            lbar: 0.1,
            ..Default::default()
        };
        let theta = body_headings(theta1, &[phi]);
        link_vectors(&theta, &[0.0, 0.0], &[shape]).unwrap()
    }

    #[test]
    fn link_vector_examples() {
        let l = straight(0.0, 0.0);
        assert_eq!((l.lx[0], l.ly[0]), (0.1, 0.0));

        let l = straight(FRAC_PI_2, 0.0);
        assert!(l.lx[0].abs() < 1e-16);
        assert!((l.ly[0] - 0.1).abs() < 1e-16);

        let l = straight(0.0, 0.2);
        assert!((l.lx[0] - 0.099_500_416_527_802_6).abs() < 1e-15);
        assert!((l.ly[0] + 0.009_983_341_664_682_815).abs() < 1e-15);
    }

    #[test]
    fn link_vectors_reject_bad_arity() {
        let shape = SegmentShape::default();
        assert!(matches!(
            link_vectors(&[0.0], &[0.0, 0.0], &[shape]),
            Err(GeometryError::Dimension { .. })
        ));
    }

    #[test]
    fn position_examples() {
        let links = LinkVectors {
            lx: vec![0.1],
            ly: vec![0.0],
            ..Default::default()
        };
        assert_eq!(
            body_positions((0.0, 0.0), &links),
            (vec![0.0, -0.1], vec![0.0, 0.0])
        );

        let links = LinkVectors {
            lx: vec![0.1, 0.1],
            ly: vec![0.0, 0.1],
            ..Default::default()
        };
        let (x, y) = body_positions((0.0, 0.0), &links);
        assert_eq!(x, vec![0.0, -0.1, -0.2]);
        assert_eq!(y, vec![0.0, 0.0, -0.1]);
    }

    #[test]
    fn velocity_examples() {
        let acts = vec![fixed(0.1, 0.1); 3];
        let chain = Chain::from_actuation(0.4, 0.0, &acts, 0.1).unwrap();
        let b = chain.bodies(0.0, 0.0, 0.0, 0.0);
        assert!(b.vx.iter().chain(&b.vy).chain(&b.omega).all(|&v| v == 0.0));

        let b = chain.bodies(0.0, 0.0, 0.2, 0.0);
        assert!(b.vx.iter().all(|&v| v == 0.2));

        // n = 1 spinning about the head: the tail swings sideways
        let chain = Chain::from_actuation(0.0, 1.0, &[fixed(0.1, 0.1)], 0.1).unwrap();
        let b = chain.bodies(0.0, 0.0, 0.0, 0.05);
        assert!(b.vx[1].abs() < 1e-16);
        assert!((b.vy[1] - (0.05 - 0.1)).abs() < 1e-15);
        assert_eq!(b.omega, vec![1.0, 1.0]);
    }

    #[test]
    fn midline_bisects_headings() {
        let acts = vec![fixed(0.09, 0.11), fixed(0.12, 0.08), fixed(0.1, 0.105)];
        let chain = Chain::from_actuation(0.7, 0.0, &acts, 0.1).unwrap();
        for i in 0..3 {
            let angle = chain.links.ly[i].atan2(chain.links.lx[i]);
            let mid = 0.5 * (chain.theta[i] + chain.theta[i + 1]);
            assert!((angle - mid).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn phi_increases_with_differential(a in -0.19f64..0.19, b in -0.19f64..0.19) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let s_lo = segment_shape(&fixed(0.2, 0.2 + lo), 0.1).unwrap();
            let s_hi = segment_shape(&fixed(0.2, 0.2 + hi), 0.1).unwrap();
            prop_assert!(s_hi.phi > s_lo.phi);
        }

        #[test]
        fn chain_consistency(
            theta1 in -3.0f64..3.0,
            head in (-1.0f64..1.0, -1.0f64..1.0),
            lens in proptest::collection::vec((0.05f64..0.15, 0.05f64..0.15), 1..10),
        ) {
            let acts: Vec<_> = lens.iter().map(|&(l, r)| fixed(l, r)).collect();
            let chain = Chain::from_actuation(theta1, 0.0, &acts, 0.1).unwrap();
            let b = chain.bodies(head.0, head.1, 0.0, 0.0);
            let ops = build_operators(acts.len()).unwrap();
            let dx = ops.d1.mul_vec(&b.x);
            let dy = ops.d1.mul_vec(&b.y);
            for i in 0..acts.len() {
                prop_assert!((dx[i] - chain.links.lx[i]).abs() <= 1e-12);
                prop_assert!((dy[i] - chain.links.ly[i]).abs() <= 1e-12);
                let norm2 = chain.links.lx[i].powi(2) + chain.links.ly[i].powi(2);
                let lbar2 = chain.shapes[i].lbar.powi(2);
                prop_assert!((norm2 - lbar2).abs() <= 1e-12 * lbar2);
            }
        }
    }
}
