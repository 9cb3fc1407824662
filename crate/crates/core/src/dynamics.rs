//! Reduced equations of motion for the head coordinates `(x1, y1, theta1)`.
//!
//! Two closures are provided:
//!
//! * [`DynamicsMode::Paper`] sums the Newton equations of all plates so the
//!   internal actuator forces cancel, giving the head translation exactly.
//!   The internal forces are recovered with the minimum-norm solution of the
//!   underdetermined system `(D1 D2) H = m L'' - D1 f`. That solution splits
//!   every segment's force equally between its left and right actuator, which
//!   `D3` annihilates, so the summed torque balance carries no actuator torque
//!   and the head rotation reduces to `theta1'' = sum_i sum_{j<i} phi_j'' / (n+1)`.
//!   The torque bracket is still evaluated on every call and must vanish.
//! * [`DynamicsMode::Projection`] projects the full planar Newton-Euler
//!   equations of all plates onto `(x1, y1, theta1)` through the analytic
//!   Jacobian of the plate coordinates, which couples friction into the
//!   heading.
//!
//! Translation is identical in both modes; they differ only in `theta1''`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::friction::assemble_friction;
use crate::geometry::{BodyStates, Chain, GeometryError, SegmentActuation};
use crate::model::{build_operators, validate_params, Operators, ParamError, RobotParams};

/// Largest admissible net internal torque in the paper closure (N m).
pub const TORQUE_BRACKET_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("internal force residual {residual:e} exceeds {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("net internal torque {bracket:e} N m does not vanish")]
    TorqueClosure { bracket: f64 },
    #[error("projected mass matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsMode {
    Paper,
    Projection,
}

impl DynamicsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DynamicsMode::Paper => "paper",
            DynamicsMode::Projection => "projection",
        }
    }
}

/// Reduced state: head pose and velocity at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadState {
    pub t: f64,
    pub x1: f64,
    pub y1: f64,
    pub theta1: f64,
    pub vx1: f64,
    pub vy1: f64,
    pub omega1: f64,
}

impl HeadState {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.x1,
            self.y1,
            self.theta1,
            self.vx1,
            self.vy1,
            self.omega1,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accel {
    pub ax1: f64,
    pub ay1: f64,
    pub alpha1: f64,
}

impl Accel {
    fn is_finite(&self) -> bool {
        self.ax1.is_finite() && self.ay1.is_finite() && self.alpha1.is_finite()
    }
}

/// Actuator forces, left/right interleaved per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalForces {
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    /// `|| (D1 D2) H - rhs ||` over both components (N).
    pub residual: f64,
}

/// Paper-closure acceleration with its torque diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct PaperAccel {
    pub accel: Accel,
    /// `(r/2) e^T (C D3 Hx + S D3 Hy)`, the net internal torque (N m).
    pub torque_bracket: f64,
    pub forces: InternalForces,
}

/// `sum_{i=1}^{n+1} sum_{j<i} v_j` for a sequence of `n` link quantities.
fn nested_sum(v: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut total = 0.0;
    for x in v {
        cum += x;
        total += cum;
    }
    total
}

/// Assembled model for one parameter set. Immutable and cheap to share.
#[derive(Debug, Clone)]
pub struct Dynamics {
    params: RobotParams,
    ops: Operators,
    d1d2: DMatrix<f64>,
    d1d2_pinv: DMatrix<f64>,
}

impl Dynamics {
    pub fn new(params: RobotParams) -> Result<Self, DynamicsError> {
        let (params, _) = validate_params(params)?;
        let ops = build_operators(params.n)?;
        let d1d2 = ops.d1.matmul(&ops.d2).to_dmatrix();
        let d1d2_pinv = d1d2
            .clone()
            .pseudo_inverse(1e-12)
            .expect("non-negative epsilon");
        Ok(Self {
            params,
            ops,
            d1d2,
            d1d2_pinv,
        })
    }

    pub fn params(&self) -> &RobotParams {
        &self.params
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    fn check_arity(&self, what: &'static str, expected: usize, got: usize) -> Result<(), DynamicsError> {
        if expected != got {
            return Err(DynamicsError::Dimension {
                what,
                expected,
                got,
            });
        }
        Ok(())
    }

    /// Minimum-norm actuator forces for evaluated link accelerations
    /// `(ddlx, ddly)` and plate friction `(fx, fy)`.
    pub fn internal_forces(
        &self,
        ddlx: &[f64],
        ddly: &[f64],
        fx: &[f64],
        fy: &[f64],
    ) -> Result<InternalForces, DynamicsError> {
        let n = self.params.n;
        self.check_arity("link accelerations (x)", n, ddlx.len())?;
        self.check_arity("link accelerations (y)", n, ddly.len())?;
        self.check_arity("friction forces (x)", n + 1, fx.len())?;
        self.check_arity("friction forces (y)", n + 1, fy.len())?;

        let m = self.params.m;
        let rhs = |ddl: &[f64], f: &[f64]| {
            let d1f = self.ops.d1.mul_vec(f);
            DVector::from_iterator(n, ddl.iter().zip(d1f).map(|(a, b)| m * a - b))
        };
        let rx = rhs(ddlx, fx);
        let ry = rhs(ddly, fy);
        let hx = &self.d1d2_pinv * &rx;
        let hy = &self.d1d2_pinv * &ry;
        let residual = ((&self.d1d2 * &hx - &rx).norm_squared()
            + (&self.d1d2 * &hy - &ry).norm_squared())
        .sqrt();
        let rhs_norm = (rx.norm_squared() + ry.norm_squared()).sqrt();
        let tolerance = 1e-10 * (1.0 + rhs_norm);
        if !(residual <= tolerance) {
            return Err(DynamicsError::Residual {
                residual,
                tolerance,
            });
        }
        Ok(InternalForces {
            hx: hx.iter().copied().collect(),
            hy: hy.iter().copied().collect(),
            residual,
        })
    }

    /// Net internal torque `(r/2) e^T (C D3 Hx + S D3 Hy)` for headings `theta`.
    pub fn torque_bracket(&self, theta: &[f64], forces: &InternalForces) -> f64 {
        let d3hx = self.ops.d3.mul_vec(&forces.hx);
        let d3hy = self.ops.d3.mul_vec(&forces.hy);
        let sum: f64 = theta
            .iter()
            .zip(d3hx.iter().zip(&d3hy))
            .map(|(th, (tx, ty))| th.cos() * tx + th.sin() * ty)
            .sum();
        0.5 * self.params.r * sum
    }

    fn chain(&self, state: &HeadState, acts: &[SegmentActuation]) -> Result<Chain, DynamicsError> {
        self.check_arity("segment actuations", self.params.n, acts.len())?;
        Ok(Chain::from_actuation(
            state.theta1,
            state.omega1,
            acts,
            self.params.r,
        )?)
    }

    /// Poses and velocities of every plate.
    pub fn reconstruct_bodies(
        &self,
        state: &HeadState,
        acts: &[SegmentActuation],
    ) -> Result<BodyStates, DynamicsError> {
        let chain = self.chain(state, acts)?;
        Ok(chain.bodies(state.x1, state.y1, state.vx1, state.vy1))
    }

    pub fn head_acceleration_paper(
        &self,
        state: &HeadState,
        acts: &[SegmentActuation],
    ) -> Result<PaperAccel, DynamicsError> {
        let p = &self.params;
        let bodies_count = (p.n + 1) as f64;
        let chain = self.chain(state, acts)?;
        let bodies = chain.bodies(state.x1, state.y1, state.vx1, state.vy1);
        let (fx, fy) = assemble_friction(&bodies, p);

        let ddphi: Vec<f64> = chain.shapes.iter().map(|s| s.ddphi).collect();
        let alpha1 = nested_sum(&ddphi) / bodies_count;

        let (ddlx, ddly) = chain.links.second_derivative(alpha1);
        let ax1 = (fx.iter().sum::<f64>() / p.m + nested_sum(&ddlx)) / bodies_count;
        let ay1 = (fy.iter().sum::<f64>() / p.m + nested_sum(&ddly)) / bodies_count;
        let accel = Accel { ax1, ay1, alpha1 };
        if !accel.is_finite() {
            return Err(DynamicsError::NonFinite {
                what: "head acceleration",
                t: state.t,
            });
        }

        let forces = self.internal_forces(&ddlx, &ddly, &fx, &fy)?;
        let torque_bracket = self.torque_bracket(&chain.theta, &forces);
        if !(torque_bracket.abs() <= TORQUE_BRACKET_TOL) {
            return Err(DynamicsError::TorqueClosure {
                bracket: torque_bracket,
            });
        }
        Ok(PaperAccel {
            accel,
            torque_bracket,
            forces,
        })
    }

    pub fn head_acceleration_projection(
        &self,
        state: &HeadState,
        acts: &[SegmentActuation],
    ) -> Result<Accel, DynamicsError> {
        let p = &self.params;
        let chain = self.chain(state, acts)?;
        let bodies = chain.bodies(state.x1, state.y1, state.vx1, state.vy1);
        let (fx, fy) = assemble_friction(&bodies, p);
        let links = &chain.links;

        // Running sums over links ahead of body i give, per body, the
        // d/dtheta1 column of the Jacobian and the shape-driven acceleration.
        let (mut tx, mut ty) = (0.0, 0.0);
        let (mut ax0, mut ay0, mut ath0) = (0.0, 0.0, 0.0);
        let mut mass = Matrix3::zeros();
        let mut rhs = Vector3::zeros();
        for i in 0..=p.n {
            if i > 0 {
                let j = i - 1;
                tx -= links.ddlx_coeff[j];
                ty -= links.ddly_coeff[j];
                ax0 -= links.ddlx_known[j];
                ay0 -= links.ddly_known[j];
                ath0 -= chain.shapes[j].ddphi;
            }
            let gx = fx[i] - p.m * ax0;
            let gy = fy[i] - p.m * ay0;
            let gth = -p.j * ath0;

            mass[(0, 0)] += p.m;
            mass[(1, 1)] += p.m;
            mass[(0, 2)] += p.m * tx;
            mass[(1, 2)] += p.m * ty;
            mass[(2, 2)] += p.m * (tx * tx + ty * ty) + p.j;
            rhs[0] += gx;
            rhs[1] += gy;
            rhs[2] += tx * gx + ty * gy + gth;
        }
        mass[(2, 0)] = mass[(0, 2)];
        mass[(2, 1)] = mass[(1, 2)];

        let qdd = mass
            .cholesky()
            .ok_or(DynamicsError::NotPositiveDefinite)?
            .solve(&rhs);
        let accel = Accel {
            ax1: qdd[0],
            ay1: qdd[1],
            alpha1: qdd[2],
        };
        if !accel.is_finite() {
            return Err(DynamicsError::NonFinite {
                what: "head acceleration",
                t: state.t,
            });
        }
        Ok(accel)
    }

    pub fn head_acceleration(
        &self,
        mode: DynamicsMode,
        state: &HeadState,
        acts: &[SegmentActuation],
    ) -> Result<Accel, DynamicsError> {
        match mode {
            DynamicsMode::Paper => Ok(self.head_acceleration_paper(state, acts)?.accel),
            DynamicsMode::Projection => self.head_acceleration_projection(state, acts),
        }
    }
}

/// Total linear momentum `(sum m vx_i, sum m vy_i)` of the plates.
pub fn linear_momentum(bodies: &BodyStates, m: f64) -> (f64, f64) {
    (
        m * bodies.vx.iter().sum::<f64>(),
        m * bodies.vy.iter().sum::<f64>(),
    )
}
