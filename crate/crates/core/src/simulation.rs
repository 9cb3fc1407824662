//! Fixed-step RK4 integration of the reduced dynamics and the anchor-based
//! kinematic baseline.

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{Accel, Dynamics, DynamicsError, DynamicsMode, HeadState};
use crate::gait::{build_gait, ActuationTrajectory, GaitConfig, GaitError, GaitKind};
use crate::geometry::{BodyStates, Chain};
use crate::model::{ParamError, RobotParams};

/// Smallest number of steps per gait period.
pub const MIN_STEPS_PER_PERIOD: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Paper,
    Projection,
    Kinematic,
}

impl SimMode {
    pub const ALL: [SimMode; 3] = [SimMode::Paper, SimMode::Projection, SimMode::Kinematic];

    pub fn as_str(self) -> &'static str {
        match self {
            SimMode::Paper => "paper",
            SimMode::Projection => "projection",
            SimMode::Kinematic => "kinematic",
        }
    }

    fn dynamics_mode(self) -> Option<DynamicsMode> {
        match self {
            SimMode::Paper => Some(DynamicsMode::Paper),
            SimMode::Projection => Some(DynamicsMode::Projection),
            SimMode::Kinematic => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error("dynamics failed at t = {t}: {source}")]
    Dynamics { t: f64, source: DynamicsError },
    #[error("non-finite state at t = {t}: {state:?}")]
    NonFinite { t: f64, state: HeadState },
}

impl SimError {
    fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        SimError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub mode: SimMode,
    pub gait: GaitKind,
    pub period: f64,
    /// SHA-256 of the robot and gait parameters as JSON.
    pub params_hash: String,
}

/// Uniformly sampled head states, optionally with every plate's state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Spacing of `samples` (s).
    pub dt: f64,
    pub samples: Vec<HeadState>,
    pub bodies: Option<Vec<BodyStates>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Index of the sample closest to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let t0 = self.samples.first().map_or(0.0, |s| s.t);
        let k = ((t - t0) / self.dt).round().max(0.0) as usize;
        k.min(self.samples.len().saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub duration: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Keep every `record_every`-th step.
    pub record_every: usize,
    pub full_bodies: bool,
    pub initial: HeadState,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            duration: 30.0,
            dt: 2.5e-4,
            record_every: 1,
            full_bodies: false,
            initial: HeadState::default(),
        }
    }
}

/// One classical RK4 step of `y' = f(t, y)`.
pub fn rk4<const N: usize, E>(
    t: f64,
    y: &[f64; N],
    dt: f64,
    mut f: impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
) -> Result<[f64; N], E> {
    let offset = |k: &[f64; N], h: f64| -> [f64; N] { std::array::from_fn(|i| y[i] + h * k[i]) };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &offset(&k1, 0.5 * dt))?;
    let k3 = f(t + 0.5 * dt, &offset(&k2, 0.5 * dt))?;
    let k4 = f(t + dt, &offset(&k3, dt))?;
    Ok(std::array::from_fn(|i| {
        y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

fn pack(s: &HeadState) -> [f64; 6] {
    [s.x1, s.y1, s.theta1, s.vx1, s.vy1, s.omega1]
}

fn unpack(t: f64, y: &[f64; 6]) -> HeadState {
    HeadState {
        t,
        x1: y[0],
        y1: y[1],
        theta1: y[2],
        vx1: y[3],
        vy1: y[4],
        omega1: y[5],
    }
}

/// Advances the head state by `dt`. `derivative` maps a state to the head
/// accelerations.
pub fn rk4_step<F>(state: &HeadState, dt: f64, mut derivative: F) -> Result<HeadState, SimError>
where
    F: FnMut(&HeadState) -> Result<Accel, DynamicsError>,
{
    let next = rk4(state.t, &pack(state), dt, |t, y| {
        let s = unpack(t, y);
        let a = derivative(&s).map_err(|source| SimError::Dynamics { t, source })?;
        Ok::<_, SimError>([s.vx1, s.vy1, s.omega1, a.ax1, a.ay1, a.alpha1])
    })?;
    let out = unpack(state.t + dt, &next);
    if !out.is_finite() {
        return Err(SimError::NonFinite {
            t: out.t,
            state: out,
        });
    }
    Ok(out)
}

/// Hex SHA-256 of the parameters, for trajectory provenance.
pub fn params_hash(params: &RobotParams, gait: &GaitConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(params).expect("params serialize"));
    h.update(b"\n");
    h.update(serde_json::to_vec(gait).expect("gait serializes"));
    format!("{:x}", h.finalize())
}

fn step_count(opts: &SimOptions, period: f64) -> Result<usize, SimError> {
    if !(opts.duration.is_finite() && opts.duration > 0.0) {
        return Err(SimError::invalid("sim.duration", "must be positive"));
    }
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(SimError::invalid("sim.dt", "must be positive"));
    }
    let limit = period / MIN_STEPS_PER_PERIOD;
    if opts.dt > limit * (1.0 + 1e-12) {
        return Err(SimError::invalid(
            "sim.dt",
            format!("{} exceeds period / {MIN_STEPS_PER_PERIOD} = {limit}", opts.dt),
        ));
    }
    if opts.record_every == 0 {
        return Err(SimError::invalid("sim.record_every", "must be at least 1"));
    }
    let steps = (opts.duration / opts.dt).round();
    if ((steps * opts.dt - opts.duration) / opts.duration).abs() > 1e-9 {
        warn!(
            "duration {} is not a multiple of dt {}; integrating {} steps",
            opts.duration, opts.dt, steps
        );
    }
    Ok(steps.max(1.0) as usize)
}

/// Integrates the robot from `opts.initial` under `gait`. Deterministic:
/// identical inputs give bit-identical trajectories.
pub fn simulate(
    params: &RobotParams,
    gait: &GaitConfig,
    mode: SimMode,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    let dynamics = Dynamics::new(*params).map_err(|e| match e {
        DynamicsError::Params(p) => SimError::Params(p),
        other => SimError::Dynamics { t: 0.0, source: other },
    })?;
    let traj = build_gait(gait, dynamics.params())?;
    let meta = TrajectoryMeta {
        mode,
        gait: gait.kind,
        period: gait.period,
        params_hash: params_hash(params, gait),
    };
    match mode.dynamics_mode() {
        Some(dm) => integrate(&dynamics, &traj, dm, opts, meta),
        None => kinematic(&dynamics, &traj, opts, meta),
    }
}

fn integrate(
    dynamics: &Dynamics,
    gait: &ActuationTrajectory,
    mode: DynamicsMode,
    opts: &SimOptions,
    meta: TrajectoryMeta,
) -> Result<Trajectory, SimError> {
    let steps = step_count(opts, gait.period())?;
    debug!("{} run: {steps} steps of {} s", mode.as_str(), opts.dt);
    let mut rec = Recorder::new(opts, steps);
    let mut state = HeadState {
        t: opts.initial.t,
        ..opts.initial
    };
    let record_bodies = |s: &HeadState| -> Result<BodyStates, SimError> {
        dynamics
            .reconstruct_bodies(s, &gait.sample(s.t))
            .map_err(|source| SimError::Dynamics { t: s.t, source })
    };
    rec.push(0, &state, opts.full_bodies.then(|| record_bodies(&state)).transpose()?);
    for k in 1..=steps {
        let mut next = rk4_step(&state, opts.dt, |s| {
            dynamics.head_acceleration(mode, s, &gait.sample(s.t))
        })?;
        // keep step times on the grid instead of accumulating dt
        next.t = opts.initial.t + k as f64 * opts.dt;
        state = next;
        if rec.wants(k) {
            let bodies = opts.full_bodies.then(|| record_bodies(&state)).transpose()?;
            rec.push(k, &state, bodies);
        }
    }
    Ok(rec.finish(meta))
}

struct Recorder {
    every: usize,
    dt: f64,
    samples: Vec<HeadState>,
    bodies: Option<Vec<BodyStates>>,
}

impl Recorder {
    fn new(opts: &SimOptions, steps: usize) -> Self {
        let cap = steps / opts.record_every + 1;
        Self {
            every: opts.record_every,
            dt: opts.dt * opts.record_every as f64,
            samples: Vec::with_capacity(cap),
            bodies: opts.full_bodies.then(|| Vec::with_capacity(cap)),
        }
    }

    fn wants(&self, k: usize) -> bool {
        k.is_multiple_of(self.every)
    }

    fn push(&mut self, k: usize, state: &HeadState, bodies: Option<BodyStates>) {
        debug_assert!(self.wants(k));
        self.samples.push(*state);
        if let (Some(all), Some(b)) = (self.bodies.as_mut(), bodies) {
            all.push(b);
        }
    }

    fn finish(self, meta: TrajectoryMeta) -> Trajectory {
        Trajectory {
            dt: self.dt,
            samples: self.samples,
            bodies: self.bodies,
            meta,
        }
    }
}

/// Poses of all plates with the anchored body `anchor` (1-based) held at
/// `pose`, and head velocities from the shape rates with the anchor at rest.
fn place_from_anchor(
    dynamics: &Dynamics,
    gait: &ActuationTrajectory,
    t: f64,
    anchor: usize,
    pose: (f64, f64, f64),
) -> Result<(HeadState, BodyStates), SimError> {
    let acts = gait.sample(t);
    let a = anchor - 1;
    // shapes alone fix every heading relative to the head
    let rel = Chain::from_actuation(0.0, 0.0, &acts, dynamics.params().r).map_err(|e| {
        SimError::Dynamics {
            t,
            source: e.into(),
        }
    })?;
    let theta1 = pose.2 - rel.theta[a];
    let omega1 = -rel.omega[a];
    let chain = Chain::new(theta1, omega1, rel.shapes);
    let ahead = 0..a;
    let x1 = pose.0 + ahead.clone().map(|j| chain.links.lx[j]).sum::<f64>();
    let y1 = pose.1 + ahead.clone().map(|j| chain.links.ly[j]).sum::<f64>();
    let vx1 = ahead.clone().map(|j| chain.links.dlx[j]).sum::<f64>();
    let vy1 = ahead.map(|j| chain.links.dly[j]).sum::<f64>();
    let head = HeadState {
        t,
        x1,
        y1,
        theta1,
        vx1,
        vy1,
        omega1,
    };
    let mut bodies = chain.bodies(x1, y1, vx1, vy1);
    // exact copy of the frozen pose, free of summation round-off
    bodies.x[a] = pose.0;
    bodies.y[a] = pose.1;
    bodies.theta[a] = pose.2;
    Ok((head, bodies))
}

fn kinematic(
    dynamics: &Dynamics,
    gait: &ActuationTrajectory,
    opts: &SimOptions,
    meta: TrajectoryMeta,
) -> Result<Trajectory, SimError> {
    let steps = step_count(opts, gait.period())?;
    let t0 = opts.initial.t;
    let mut rec = Recorder::new(opts, steps);

    // initial placement from the head pose
    let acts = gait.sample(t0);
    let chain = Chain::from_actuation(opts.initial.theta1, 0.0, &acts, dynamics.params().r)
        .map_err(|e| SimError::Dynamics {
            t: t0,
            source: e.into(),
        })?;
    let mut bodies = chain.bodies(opts.initial.x1, opts.initial.y1, 0.0, 0.0);
    let first_anchor = gait.anchor_at(t0 + 0.5 * opts.dt);
    let (head, b) = place_from_anchor(
        dynamics,
        gait,
        t0,
        first_anchor,
        (
            bodies.x[first_anchor - 1],
            bodies.y[first_anchor - 1],
            bodies.theta[first_anchor - 1],
        ),
    )?;
    // keep the given head pose exactly; only the rates come from the anchor
    let head = HeadState {
        x1: opts.initial.x1,
        y1: opts.initial.y1,
        theta1: opts.initial.theta1,
        ..head
    };
    bodies.vx = b.vx;
    bodies.vy = b.vy;
    bodies.omega = b.omega;
    rec.push(0, &head, opts.full_bodies.then(|| bodies.clone()));

    for k in 1..=steps {
        let t_prev = t0 + (k - 1) as f64 * opts.dt;
        let t = t0 + k as f64 * opts.dt;
        let anchor = gait.anchor_at(t_prev + 0.5 * opts.dt);
        let i = anchor - 1;
        let pose = (bodies.x[i], bodies.y[i], bodies.theta[i]);
        let (head, next) = place_from_anchor(dynamics, gait, t, anchor, pose)?;
        if !head.is_finite() {
            return Err(SimError::NonFinite { t, state: head });
        }
        bodies = next;
        if rec.wants(k) {
            rec.push(k, &head, opts.full_bodies.then(|| bodies.clone()));
        }
    }
    Ok(rec.finish(meta))
}

/// Kinematic (no-slip) baseline trajectory over `duration`.
pub fn kinematic_predict(
    params: &RobotParams,
    gait: &GaitConfig,
    duration: f64,
    dt: f64,
) -> Result<Trajectory, SimError> {
    simulate(
        params,
        gait,
        SimMode::Kinematic,
        &SimOptions {
            duration,
            dt,
            ..SimOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::linear_momentum;
    use crate::friction::friction_power;
    use crate::gait::{AnchorInterval, GaitConfig};
    use crate::model::FrictionParams;

    fn quick(duration: f64, dt: f64) -> SimOptions {
        SimOptions {
            duration,
            dt,
            ..SimOptions::default()
        }
    }

    #[test]
    fn rk4_exponential_decay() {
        let y = rk4(0.0, &[1.0], 0.1, |_, y| Ok::<_, ()>([-y[0]])).unwrap();
        // one RK4 step reproduces the degree-4 Taylor polynomial of exp(-h)
        let h: f64 = 0.1;
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((y[0] - taylor).abs() < 1e-15);
        assert!((y[0] - 0.904_837_42).abs() < 1e-7);
        assert!((y[0] - (-h).exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_zero_derivative() {
        let s = HeadState {
            t: 1.0,
            x1: 0.3,
            y1: -0.2,
            theta1: 0.1,
            ..HeadState::default()
        };
        let next = rk4_step(&s, 0.01, |_| Ok(Accel::default())).unwrap();
        assert_eq!((next.x1, next.y1, next.theta1), (s.x1, s.y1, s.theta1));
        assert_eq!(next.t, 1.01);
    }

    #[test]
    fn rk4_reports_nonfinite() {
        let s = HeadState::default();
        let err = rk4_step(&s, 0.1, |_| {
            Ok(Accel {
                ax1: f64::NAN,
                ..Accel::default()
            })
        })
        .unwrap_err();
        assert!(matches!(err, SimError::NonFinite { .. }));
    }

    #[test]
    fn dt_guard() {
        let err = simulate(
            &RobotParams::default(),
            &GaitConfig::default(),
            SimMode::Paper,
            &quick(6.0, 0.05),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Invalid { field: "sim.dt", .. }));
    }

    #[test]
    fn constant_gait_stays_put() {
        let gait = GaitConfig {
            l_min: 0.1,
            l_max: 0.1,
            ..GaitConfig::default()
        };
        for mode in SimMode::ALL {
            let tr = simulate(&RobotParams::default(), &gait, mode, &quick(3.0, 1e-3)).unwrap();
            assert_eq!(tr.samples.len(), 3001);
            for s in &tr.samples {
                assert_eq!((s.x1, s.y1, s.theta1), (0.0, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn uniform_time_grid() {
        let tr = simulate(
            &RobotParams::default(),
            &GaitConfig::default(),
            SimMode::Projection,
            &SimOptions {
                record_every: 4,
                ..quick(1.0, 2.5e-4)
            },
        )
        .unwrap();
        assert_eq!(tr.samples.len(), 1001);
        assert_eq!(tr.dt, 1e-3);
        for (k, s) in tr.samples.iter().enumerate() {
            assert!((s.t - k as f64 * 1e-3).abs() < 1e-12);
        }
    }

    #[test]
    fn friction_never_does_positive_work() {
        let p = RobotParams::default();
        let gait = GaitConfig {
            kind: crate::gait::GaitKind::Sidewinding,
            ..GaitConfig::default()
        };
        let tr = simulate(
            &p,
            &gait,
            SimMode::Projection,
            &SimOptions {
                full_bodies: true,
                record_every: 8,
                ..quick(6.0, 2.5e-4)
            },
        )
        .unwrap();
        for b in tr.bodies.as_ref().unwrap() {
            assert!(friction_power(b, &p) <= 0.0);
        }
    }

    #[test]
    fn frictionless_momentum_stays_zero() {
        let p = RobotParams {
            friction: FrictionParams::frictionless(),
            ..RobotParams::default()
        };
        let tr = simulate(
            &p,
            &GaitConfig::default(),
            SimMode::Paper,
            &SimOptions {
                full_bodies: true,
                ..quick(6.0, 1e-3)
            },
        )
        .unwrap();
        for b in tr.bodies.unwrap() {
            let (px, py) = linear_momentum(&b, p.m);
            assert!(px.abs() < 1e-12 && py.abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            simulate(
                &RobotParams::default(),
                &GaitConfig::default(),
                SimMode::Projection,
                &quick(2.0, 2.5e-4),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.x1.to_bits(), y.x1.to_bits());
        }
    }

    #[test]
    fn kinematic_inchworm_advances_stroke() {
        let p = RobotParams {
            n: 1,
            ..RobotParams::default()
        };
        // contract [0, 1/6), hold, extend [1/2, 2/3), rest
        let gait = GaitConfig {
            anchor_schedule: Some(vec![
                AnchorInterval {
                    from: 0.0,
                    to: 1.0 / 3.0,
                    body: 1,
                },
                AnchorInterval {
                    from: 1.0 / 3.0,
                    to: 5.0 / 6.0,
                    body: 2,
                },
                AnchorInterval {
                    from: 5.0 / 6.0,
                    to: 1.0,
                    body: 1,
                },
            ]),
            ..GaitConfig::default()
        };
        let tr = kinematic_predict(&p, &gait, 18.0, 1e-3).unwrap();
        for k in 1..=3 {
            let s = tr.samples[tr.index_at(6.0 * k as f64)];
            assert!((s.x1 - 0.04 * k as f64).abs() < 1e-12, "cycle {k}: {}", s.x1);
            assert_eq!(s.y1, 0.0);
        }
    }

    #[test]
    fn kinematic_straight_gait_keeps_heading() {
        let tr = kinematic_predict(&RobotParams::default(), &GaitConfig::default(), 12.0, 1e-3)
            .unwrap();
        assert!(tr.samples.iter().all(|s| s.theta1 == 0.0 && s.y1 == 0.0));
        assert!(tr.samples.last().unwrap().x1 > 0.0);
    }

    #[test]
    fn kinematic_velocity_matches_differences() {
        let gait = GaitConfig {
            kind: crate::gait::GaitKind::Sidewinding,
            ..GaitConfig::default()
        };
        let tr = kinematic_predict(&RobotParams::default(), &gait, 6.0, 1e-3).unwrap();
        // differences only disagree across steps where the anchor switches
        let checked: Vec<bool> = (500..5500)
            .step_by(97)
            .map(|k| {
                let (a, b, c) = (tr.samples[k - 1], tr.samples[k], tr.samples[k + 1]);
                ((c.x1 - a.x1) / 2e-3 - b.vx1).abs() <= 1e-4
                    && ((c.theta1 - a.theta1) / 2e-3 - b.omega1).abs() <= 1e-4
            })
            .collect();
        let agree = checked.iter().filter(|&&ok| ok).count();
        assert!(agree * 10 >= checked.len() * 9, "{agree} of {}", checked.len());
    }
}
