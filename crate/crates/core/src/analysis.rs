//! Locomotion metrics computed from head trajectories.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::GaitKind;
use crate::simulation::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("window [{t0}, {t1}] is shorter than one period ({period} s)")]
    WindowTooShort { t0: f64, t1: f64, period: f64 },
    #[error("window [{t0}, {t1}] lies outside the trajectory [{start}, {end}]")]
    WindowOutside {
        t0: f64,
        t1: f64,
        start: f64,
        end: f64,
    },
    #[error("degenerate point set: {0}")]
    Degenerate(&'static str),
    #[error("points are collinear; no circle fits")]
    Collinear,
    #[error("trajectory spans {duration} s but at least {needed} s are required")]
    TooShort { duration: f64, needed: f64 },
}

/// Principal direction of a point cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// `dy/dx` of the fitted line; infinite for a vertical path.
    pub slope: f64,
    /// Direction angle in `(-pi/2, pi/2]`.
    pub angle: f64,
    /// RMS perpendicular distance of the points from the line (m).
    pub rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: (f64, f64),
    pub radius: f64,
    /// RMS of the radial residuals (m).
    pub rms: f64,
}

const TIME_TOL: f64 = 1e-9;

fn check_window(traj: &Trajectory, window: (f64, f64)) -> Result<(), AnalysisError> {
    let (t0, t1) = window;
    let (start, end) = match (traj.samples.first(), traj.samples.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => {
            return Err(AnalysisError::WindowOutside {
                t0,
                t1,
                start: f64::NAN,
                end: f64::NAN,
            })
        }
    };
    let slack = 0.5 * traj.dt;
    if !(t0 >= start - slack && t1 <= end + slack && t0 <= t1) {
        return Err(AnalysisError::WindowOutside { t0, t1, start, end });
    }
    Ok(())
}

fn window_points(traj: &Trajectory, window: (f64, f64)) -> Vec<(f64, f64)> {
    let (a, b) = (traj.index_at(window.0), traj.index_at(window.1));
    traj.samples[a..=b].iter().map(|s| (s.x1, s.y1)).collect()
}

/// Secant velocity `(head(t1) - head(t0)) / (t1 - t0)` using the samples
/// nearest the window ends.
pub fn average_velocity(traj: &Trajectory, window: (f64, f64)) -> Result<(f64, f64), AnalysisError> {
    let (t0, t1) = window;
    let period = traj.meta.period;
    if !(t1 - t0 >= period * (1.0 - TIME_TOL)) {
        return Err(AnalysisError::WindowTooShort { t0, t1, period });
    }
    check_window(traj, window)?;
    let a = traj.samples[traj.index_at(t0)];
    let b = traj.samples[traj.index_at(t1)];
    let span = b.t - a.t;
    Ok(((b.x1 - a.x1) / span, (b.y1 - a.y1) / span))
}

/// Total-least-squares line through `points`.
pub fn fit_slope_points(points: &[(f64, f64)]) -> Result<SlopeFit, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::Degenerate("need at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        sxx += u * u;
        syy += v * v;
        sxy += u * v;
    }
    let spread = sxx + syy;
    if !(spread > 0.0) {
        return Err(AnalysisError::Degenerate("points have zero spread"));
    }
    let mut angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if angle <= -std::f64::consts::FRAC_PI_2 + 1e-15 {
        angle += std::f64::consts::PI;
    }
    let (s, c) = angle.sin_cos();
    let slope = if c.abs() < 1e-12 * spread.sqrt().max(1.0) {
        f64::INFINITY
    } else {
        s / c
    };
    // perpendicular residual variance: smallest eigenvalue of the scatter
    let perp = (s * s * sxx - 2.0 * s * c * sxy + c * c * syy).max(0.0);
    Ok(SlopeFit {
        slope,
        angle,
        rms: (perp / n).sqrt(),
    })
}

pub fn fit_slope(traj: &Trajectory, window: (f64, f64)) -> Result<SlopeFit, AnalysisError> {
    check_window(traj, window)?;
    fit_slope_points(&window_points(traj, window))
}

/// Algebraic (Kasa) least-squares circle through `points`.
pub fn fit_circle_points(points: &[(f64, f64)]) -> Result<CircleFit, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::Degenerate("need at least three points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
    let (mut suuu, mut svvv, mut suvv, mut svuu) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        suu += u * u;
        svv += v * v;
        suv += u * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }
    let det = suu * svv - suv * suv;
    let scale = suu + svv;
    if !(scale > 0.0) || det.abs() <= 1e-12 * scale * scale {
        return Err(AnalysisError::Collinear);
    }
    let rhs_u = 0.5 * (suuu + suvv);
    let rhs_v = 0.5 * (svvv + svuu);
    let a = (rhs_u * svv - rhs_v * suv) / det;
    let b = (suu * rhs_v - suv * rhs_u) / det;
    let radius = (a * a + b * b + scale / n).sqrt();
    let center = (a + mx, b + my);
    let ss: f64 = points
        .iter()
        .map(|&(x, y)| {
            let d = (x - center.0).hypot(y - center.1) - radius;
            d * d
        })
        .sum();
    Ok(CircleFit {
        center,
        radius,
        rms: (ss / n).sqrt(),
    })
}

pub fn fit_circle(traj: &Trajectory, window: (f64, f64)) -> Result<CircleFit, AnalysisError> {
    check_window(traj, window)?;
    fit_circle_points(&window_points(traj, window))
}

/// `|head(kT) - head((k-1)T)|` for every complete cycle of the trajectory.
pub fn cycle_displacement(traj: &Trajectory, period: f64) -> Result<Vec<f64>, AnalysisError> {
    let duration = traj.duration();
    if !(duration >= 2.0 * period * (1.0 - TIME_TOL)) {
        return Err(AnalysisError::TooShort {
            duration,
            needed: 2.0 * period,
        });
    }
    let t0 = traj.samples[0].t;
    let cycles = (duration / period + TIME_TOL).floor() as usize;
    let head = |k: usize| {
        let s = traj.samples[traj.index_at(t0 + k as f64 * period)];
        (s.x1, s.y1)
    };
    Ok((1..=cycles)
        .map(|k| {
            let (a, b) = (head(k - 1), head(k));
            (b.0 - a.0).hypot(b.1 - a.1)
        })
        .collect())
}

/// Flat metrics record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub avg_vx: f64,
    pub avg_vy: f64,
    pub speed: f64,
    /// `null` for a vertical or stationary path.
    pub slope: Option<f64>,
    pub heading_angle: Option<f64>,
    /// Fitted turning radius; circular gaits only.
    pub radius: Option<f64>,
    /// Residual RMS of the circle fit for circular gaits, else of the line fit.
    pub rms: Option<f64>,
    pub per_cycle: Vec<f64>,
}

/// Metrics over the window that starts after `transient_cycles` periods and
/// ends at the last sample.
pub fn compute_metrics(traj: &Trajectory, transient_cycles: usize) -> Result<Metrics, AnalysisError> {
    let period = traj.meta.period;
    let t_start = traj.samples.first().map_or(0.0, |s| s.t);
    let window = (
        t_start + transient_cycles as f64 * period,
        t_start + traj.duration(),
    );
    let (avg_vx, avg_vy) = average_velocity(traj, window)?;
    let line = fit_slope(traj, window)
        .map_err(|e| warn!("no line fit: {e}"))
        .ok();
    let circle = if traj.meta.gait == GaitKind::Circular {
        fit_circle(traj, window)
            .map_err(|e| warn!("no circle fit: {e}"))
            .ok()
    } else {
        None
    };
    let rms = match (&circle, &line) {
        (Some(c), _) => Some(c.rms),
        (None, Some(l)) if traj.meta.gait != GaitKind::Circular => Some(l.rms),
        _ => None,
    };
    Ok(Metrics {
        avg_vx,
        avg_vy,
        speed: avg_vx.hypot(avg_vy),
        slope: line.map(|l| l.slope).filter(|s| s.is_finite()),
        heading_angle: line.map(|l| l.angle),
        radius: circle.map(|c| c.radius),
        rms,
        per_cycle: cycle_displacement(traj, period).unwrap_or_default(),
    })
}

/// RMS head-position distance between two trajectories on the same grid.
pub fn trajectory_rms(a: &Trajectory, b: &Trajectory) -> f64 {
    let n = a.samples.len().min(b.samples.len());
    if n == 0 {
        return 0.0;
    }
    let ss: f64 = a.samples[..n]
        .iter()
        .zip(&b.samples[..n])
        .map(|(p, q)| (p.x1 - q.x1).powi(2) + (p.y1 - q.y1).powi(2))
        .sum();
    (ss / n as f64).sqrt()
}
