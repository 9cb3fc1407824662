//! Prescribed actuator-length trajectories.
//!
//! Built-in gaits drive every segment with the same periodic waveform shifted
//! by a per-segment phase offset. Over one period a segment contracts from
//! the extended length, holds contracted for the duty fraction, extends again
//! and rests extended. Every transition is a quintic smoothstep over a fraction
//! `(1 - duty) / 4` of the period, so lengths are C^2 in time and the second
//! derivative vanishes at every knot.
//!
//! * rectilinear: left and right sides move together.
//! * circular: a constant left/right split `delta` bends every segment.
//! * sidewinding: the split flips sign twice per period; both flips happen
//!   while the segment's midline length is held constant.
//! * custom: per-segment, per-side periodic waypoints joined by smoothsteps.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{SegmentActuation, SideSample};
use crate::model::RobotParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitKind {
    Rectilinear,
    Sidewinding,
    Circular,
    Custom,
}

impl GaitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GaitKind::Rectilinear => "rectilinear",
            GaitKind::Sidewinding => "sidewinding",
            GaitKind::Circular => "circular",
            GaitKind::Custom => "custom",
        }
    }
}

/// Anchors body `body` (1-based, head = 1) for period fractions `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorInterval {
    pub from: f64,
    pub to: f64,
    pub body: usize,
}

/// Waypoints `[period fraction, length]` for both sides of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentWaypoints {
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitConfig {
    pub kind: GaitKind,
    /// Gait period (s).
    pub period: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Right-minus-left length split of turning gaits (m).
    pub delta: f64,
    /// Per-segment phase offsets in `[0, 1)`; defaults to `k / n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_offsets: Option<Vec<f64>>,
    /// Fraction of the period a segment holds fully contracted.
    pub duty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<SegmentWaypoints>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_schedule: Option<Vec<AnchorInterval>>,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            kind: GaitKind::Rectilinear,
            period: 6.0,
            l_min: 0.08,
            l_max: 0.12,
            delta: 0.01,
            phase_offsets: None,
            duty: 1.0 / 3.0,
            waypoints: None,
            anchor_schedule: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    BelowMin { l: f64, l_min: f64 },
    AboveMax { l: f64, l_max: f64 },
    OpenTrapezoid { diff: f64, limit: f64 },
    Discontinuous {
        derivative: u8,
        analytic: f64,
        finite_difference: f64,
    },
}

/// A bound or smoothness failure of a sampled gait. `segment` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitViolation {
    pub segment: usize,
    pub side: Side,
    pub t: f64,
    pub kind: ViolationKind,
}

impl fmt::Display for GaitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "segment {}, {} side, t = {:.6} s: ", self.segment, self.side, self.t)?;
        match &self.kind {
            ViolationKind::BelowMin { l, l_min } => write!(f, "length {l} below l_min {l_min}"),
            ViolationKind::AboveMax { l, l_max } => write!(f, "length {l} above l_max {l_max}"),
            ViolationKind::OpenTrapezoid { diff, limit } => {
                write!(f, "|l_r - l_l| = {diff} reaches 2r = {limit}")
            }
            ViolationKind::Discontinuous {
                derivative,
                analytic,
                finite_difference,
            } => write!(
                f,
                "derivative {derivative} is {analytic} but differences give {finite_difference}"
            ),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitError {
    #[error("gait.{field}: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("gait violates bounds: {0}")]
    Bounds(GaitViolation),
}

fn config_err(field: &'static str, reason: impl Into<String>) -> GaitError {
    GaitError::Config {
        field,
        reason: reason.into(),
    }
}

/// Quintic smoothstep `6s^5 - 15s^4 + 10s^3` and its first two derivatives.
pub fn smoothstep5(s: f64) -> (f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        s3 * (10.0 + s * (-15.0 + 6.0 * s)),
        30.0 * s2 * (1.0 - s) * (1.0 - s),
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
    )
}

/// Periodic 0 -> 1 -> 0 pulse over one unit of phase.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pulse {
    start: f64,
    rise: f64,
    hold: f64,
    fall: f64,
}

impl Pulse {
    /// Value and first two phase derivatives.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let u = (s - self.start).rem_euclid(1.0);
        if u < self.rise {
            let (w, w1, w2) = smoothstep5(u / self.rise);
            (w, w1 / self.rise, w2 / (self.rise * self.rise))
        } else if u < self.rise + self.hold {
            (1.0, 0.0, 0.0)
        } else if u < self.rise + self.hold + self.fall {
            let (w, w1, w2) = smoothstep5((u - self.rise - self.hold) / self.fall);
            (1.0 - w, -w1 / self.fall, -w2 / (self.fall * self.fall))
        } else {
            (0.0, 0.0, 0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Differential {
    None,
    Constant(f64),
    Alternating { amplitude: f64, sign: Pulse },
}

#[derive(Debug, Clone, PartialEq)]
struct Wave {
    offset: f64,
    extended: f64,
    contracted: f64,
    pulse: Pulse,
    differential: Differential,
    /// -1/2 for the left side, +1/2 for the right.
    side: f64,
}

impl Wave {
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let local = s - self.offset;
        let amp = self.extended - self.contracted;
        let (p, dp, ddp) = self.pulse.eval(local);
        let (d, dd, ddd) = match &self.differential {
            Differential::None => (0.0, 0.0, 0.0),
            Differential::Constant(delta) => (*delta, 0.0, 0.0),
            Differential::Alternating { amplitude, sign } => {
                let (q, dq, ddq) = sign.eval(local);
                (
                    amplitude * (1.0 - 2.0 * q),
                    -2.0 * amplitude * dq,
                    -2.0 * amplitude * ddq,
                )
            }
        };
        (
            self.extended - amp * p + self.side * d,
            -amp * dp + self.side * dd,
            -amp * ddp + self.side * ddd,
        )
    }
}

/// Smoothstep interpolation through periodic `(phase, length)` knots.
#[derive(Debug, Clone, PartialEq)]
struct Knots {
    knots: Vec<(f64, f64)>,
}

impl Knots {
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let k = &self.knots;
        if k.len() == 1 {
            return (k[0].1, 0.0, 0.0);
        }
        let s = s.rem_euclid(1.0);
        // last knot at or before s; wraps to the final knot before the first
        let (i, u) = match k.iter().rposition(|&(sk, _)| sk <= s) {
            Some(i) => (i, s),
            None => (k.len() - 1, s + 1.0),
        };
        let (s0, l0) = k[i];
        let (s1, l1) = if i + 1 < k.len() {
            k[i + 1]
        } else {
            (k[0].0 + 1.0, k[0].1)
        };
        let width = s1 - s0;
        let (w, w1, w2) = smoothstep5(((u - s0) / width).clamp(0.0, 1.0));
        let span = l1 - l0;
        (l0 + span * w, span * w1 / width, span * w2 / (width * width))
    }

    fn phases(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.iter().map(|&(s, _)| s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SideSignal {
    Wave(Wave),
    Knots(Knots),
}

impl SideSignal {
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        match self {
            SideSignal::Wave(w) => w.eval(s),
            SideSignal::Knots(k) => k.eval(s),
        }
    }
}

/// Periodic left/right actuator lengths for every segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationTrajectory {
    kind: GaitKind,
    period: f64,
    segments: Vec<[SideSignal; 2]>,
    anchor_schedule: Vec<AnchorInterval>,
}

impl ActuationTrajectory {
    pub fn kind(&self) -> GaitKind {
        self.kind
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Number of segments.
    pub fn n(&self) -> usize {
        self.segments.len()
    }

    pub fn anchor_schedule(&self) -> &[AnchorInterval] {
        &self.anchor_schedule
    }

    fn phase(&self, t: f64) -> f64 {
        t.rem_euclid(self.period) / self.period
    }

    fn side_sample(&self, signal: &SideSignal, s: f64) -> SideSample {
        let (l, dl, ddl) = signal.eval(s);
        let inv = 1.0 / self.period;
        SideSample::new(l, dl * inv, ddl * inv * inv)
    }

    /// Left/right lengths and their time derivatives of every segment at `t`.
    pub fn sample(&self, t: f64) -> Vec<SegmentActuation> {
        let s = self.phase(t);
        self.segments
            .iter()
            .map(|[left, right]| SegmentActuation {
                left: self.side_sample(left, s),
                right: self.side_sample(right, s),
            })
            .collect()
    }

    /// The anchored body (1-based) at time `t`: the scheduled one if the
    /// schedule covers `t`, else the rear plate of the shortest segment
    /// (lowest index on ties).
    pub fn anchor_at(&self, t: f64) -> usize {
        let s = self.phase(t);
        if let Some(a) = self
            .anchor_schedule
            .iter()
            .find(|a| a.from <= s && s < a.to)
        {
            return a.body;
        }
        let acts = self.sample(t);
        let mut best = 0;
        for (i, a) in acts.iter().enumerate() {
            if a.midline() < acts[best].midline() {
                best = i;
            }
        }
        best + 2
    }

    /// Knot times within one period, for custom gaits.
    fn knot_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for sides in &self.segments {
            for side in sides {
                if let SideSignal::Knots(k) = side {
                    out.extend(k.phases().map(|s| s * self.period));
                }
            }
        }
        out
    }
}

fn validate_knots(list: &[[f64; 2]], field: &'static str) -> Result<Knots, GaitError> {
    if list.is_empty() {
        return Err(config_err(field, "each side needs at least one waypoint"));
    }
    let mut prev = f64::NEG_INFINITY;
    for &[s, l] in list {
        if !(s.is_finite() && l.is_finite()) {
            return Err(config_err(field, "waypoints must be finite"));
        }
        if !(0.0..1.0).contains(&s) {
            return Err(config_err(field, format!("waypoint time {s} outside [0, 1)")));
        }
        if s <= prev {
            return Err(config_err(
                field,
                format!("waypoint times must increase strictly ({s} after {prev})"),
            ));
        }
        prev = s;
    }
    Ok(Knots {
        knots: list.iter().map(|&[s, l]| (s, l)).collect(),
    })
}

/// Builds the trajectory after structural checks only; lengths may violate
/// the geometry bounds. See [`check_bounds`].
pub fn build_gait_unchecked(
    cfg: &GaitConfig,
    robot: &RobotParams,
) -> Result<ActuationTrajectory, GaitError> {
    let n = robot.n;
    if !(cfg.period.is_finite() && cfg.period > 0.0) {
        return Err(config_err("period", "must be positive"));
    }
    if !(cfg.l_min.is_finite() && cfg.l_max.is_finite() && cfg.l_min > 0.0) {
        return Err(config_err("l_min", "lengths must be finite and positive"));
    }
    if cfg.l_min > cfg.l_max {
        return Err(config_err("l_max", "must not be below l_min"));
    }
    if !cfg.delta.is_finite() {
        return Err(config_err("delta", "must be finite"));
    }
    if !(cfg.duty > 0.0 && cfg.duty < 1.0) {
        return Err(config_err("duty", "must lie in (0, 1)"));
    }

    let mut anchor_schedule = cfg.anchor_schedule.clone().unwrap_or_default();
    for a in &anchor_schedule {
        if !(0.0 <= a.from && a.from < a.to && a.to <= 1.0) {
            return Err(config_err(
                "anchor_schedule",
                format!("interval [{}, {}) must satisfy 0 <= from < to <= 1", a.from, a.to),
            ));
        }
        if a.body < 1 || a.body > n + 1 {
            return Err(config_err(
                "anchor_schedule",
                format!("body {} outside 1..={}", a.body, n + 1),
            ));
        }
    }
    anchor_schedule.sort_by(|a, b| a.from.total_cmp(&b.from));

    let segments = if cfg.kind == GaitKind::Custom {
        let wps = cfg
            .waypoints
            .as_ref()
            .ok_or_else(|| config_err("waypoints", "required for custom gaits"))?;
        if wps.len() != n {
            return Err(config_err(
                "waypoints",
                format!("expected {n} segments, got {}", wps.len()),
            ));
        }
        wps.iter()
            .map(|w| {
                Ok([
                    SideSignal::Knots(validate_knots(&w.left, "waypoints")?),
                    SideSignal::Knots(validate_knots(&w.right, "waypoints")?),
                ])
            })
            .collect::<Result<Vec<_>, GaitError>>()?
    } else {
        let offsets = match &cfg.phase_offsets {
            Some(o) => {
                if o.len() != n {
                    return Err(config_err(
                        "phase_offsets",
                        format!("expected {n} values, got {}", o.len()),
                    ));
                }
                if o.iter().any(|v| !(0.0..1.0).contains(v)) {
                    return Err(config_err("phase_offsets", "values must lie in [0, 1)"));
                }
                o.clone()
            }
            None => (0..n).map(|k| k as f64 / n as f64).collect(),
        };

        let ramp = 0.25 * (1.0 - cfg.duty);
        let pulse = Pulse {
            start: 0.0,
            rise: ramp,
            hold: cfg.duty,
            fall: ramp,
        };
        let half = 0.5 * cfg.delta.abs();
        let (extended, contracted, differential) = match cfg.kind {
            GaitKind::Rectilinear => (cfg.l_max, cfg.l_min, Differential::None),
            GaitKind::Circular => (
                cfg.l_max - half,
                cfg.l_min + half,
                Differential::Constant(cfg.delta),
            ),
            GaitKind::Sidewinding => (
                cfg.l_max - half,
                cfg.l_min + half,
                Differential::Alternating {
                    amplitude: cfg.delta,
                    sign: Pulse {
                        start: ramp,
                        rise: ramp,
                        hold: 0.5 - ramp,
                        fall: ramp,
                    },
                },
            ),
            GaitKind::Custom => unreachable!(),
        };
        offsets
            .iter()
            .map(|&offset| {
                let wave = |side| {
                    SideSignal::Wave(Wave {
                        offset,
                        extended,
                        contracted,
                        pulse,
                        differential: differential.clone(),
                        side,
                    })
                };
                [wave(-0.5), wave(0.5)]
            })
            .collect()
    };

    Ok(ActuationTrajectory {
        kind: cfg.kind,
        period: cfg.period,
        segments,
        anchor_schedule,
    })
}

/// Samples one period densely (plus every custom knot) and reports the first
/// length outside `[l_min, l_max]` or left/right split reaching `2r`.
pub fn check_bounds(
    traj: &ActuationTrajectory,
    cfg: &GaitConfig,
    robot: &RobotParams,
    samples: usize,
) -> Result<(), GaitViolation> {
    const TOL: f64 = 1e-12;
    let mut times: Vec<f64> = (0..samples)
        .map(|k| k as f64 * traj.period / samples as f64)
        .collect();
    times.extend(traj.knot_times());
    for t in times {
        for (i, act) in traj.sample(t).iter().enumerate() {
            for (side, s) in [(Side::Left, act.left), (Side::Right, act.right)] {
                let violation = |kind| GaitViolation {
                    segment: i + 1,
                    side,
                    t,
                    kind,
                };
                if s.l < cfg.l_min - TOL {
                    return Err(violation(ViolationKind::BelowMin {
                        l: s.l,
                        l_min: cfg.l_min,
                    }));
                }
                if s.l > cfg.l_max + TOL {
                    return Err(violation(ViolationKind::AboveMax {
                        l: s.l,
                        l_max: cfg.l_max,
                    }));
                }
            }
            let diff = (act.right.l - act.left.l).abs();
            if diff >= 2.0 * robot.r {
                let side = if act.right.l > act.left.l {
                    Side::Right
                } else {
                    Side::Left
                };
                return Err(GaitViolation {
                    segment: i + 1,
                    side,
                    t,
                    kind: ViolationKind::OpenTrapezoid {
                        diff,
                        limit: 2.0 * robot.r,
                    },
                });
            }
        }
    }
    Ok(())
}

/// Compares analytic first and second derivatives against central
/// differences on a dense grid. Tolerance is relative to the largest
/// derivative magnitude seen on the grid.
pub fn check_smoothness(traj: &ActuationTrajectory, samples: usize) -> Result<(), GaitViolation> {
    const REL: f64 = 1e-5;
    const FLOOR: f64 = 1e-12;
    let h = 1e-7 * traj.period;
    let times: Vec<f64> = (0..samples)
        .map(|k| k as f64 * traj.period / samples as f64)
        .collect();
    let grid: Vec<Vec<SegmentActuation>> = times.iter().map(|&t| traj.sample(t)).collect();
    let side_of = |a: &SegmentActuation, side| match side {
        Side::Left => a.left,
        Side::Right => a.right,
    };
    let mut scale1: f64 = 0.0;
    let mut scale2: f64 = 0.0;
    for acts in &grid {
        for a in acts {
            scale1 = scale1.max(a.left.dl.abs()).max(a.right.dl.abs());
            scale2 = scale2.max(a.left.ddl.abs()).max(a.right.ddl.abs());
        }
    }
    for (t, acts) in times.iter().zip(&grid) {
        let ahead = traj.sample(t + h);
        let behind = traj.sample(t - h);
        for i in 0..acts.len() {
            for side in [Side::Left, Side::Right] {
                let (now, p, q) = (
                    side_of(&acts[i], side),
                    side_of(&ahead[i], side),
                    side_of(&behind[i], side),
                );
                let fd1 = (p.l - q.l) / (2.0 * h);
                let fd2 = (p.dl - q.dl) / (2.0 * h);
                let checks = [
                    (1u8, now.dl, fd1, REL * scale1 + FLOOR),
                    (2u8, now.ddl, fd2, REL * scale2 + FLOOR),
                ];
                for (derivative, analytic, fd, tol) in checks {
                    if !((analytic - fd).abs() <= tol) {
                        return Err(GaitViolation {
                            segment: i + 1,
                            side,
                            t: *t,
                            kind: ViolationKind::Discontinuous {
                                derivative,
                                analytic,
                                finite_difference: fd,
                            },
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Builds the trajectory and rejects any length outside the configured
/// bounds or any segment whose trapezoid cannot close.
pub fn build_gait(cfg: &GaitConfig, robot: &RobotParams) -> Result<ActuationTrajectory, GaitError> {
    let traj = build_gait_unchecked(cfg, robot)?;
    check_bounds(&traj, cfg, robot, 2000).map_err(GaitError::Bounds)?;
    Ok(traj)
}
