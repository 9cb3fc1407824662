//! Robot parameterization and the incidence operators shared by the dynamics.
//!
//! Bodies are numbered from the head (body 1) to the tail (body n+1); segment
//! `i` joins bodies `i` and `i+1`. Force vectors are `2n` long with the left
//! and right actuator of each segment interleaved.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("{field} must be non-negative (got {value})")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} must be finite (got {value})")]
    NonFinite { field: &'static str, value: f64 },
    #[error("n: segment count must be at least 1 (got {0})")]
    SegmentCount(usize),
}

impl ParamError {
    /// Key of the offending field relative to the `robot` config object.
    pub fn field(&self) -> &'static str {
        match self {
            ParamError::NonPositive { field, .. }
            | ParamError::Negative { field, .. }
            | ParamError::NonFinite { field, .. } => field,
            ParamError::SegmentCount(_) => "n",
        }
    }
}

/// Non-fatal findings from [`validate_params`].
#[derive(Debug, Clone, PartialEq)]
pub enum ParamWarning {
    /// Forward sliding is harder than backward sliding, so the bristles push
    /// the robot tail-first.
    ForwardExceedsBackward { forward: f64, backward: f64 },
}

impl fmt::Display for ParamWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamWarning::ForwardExceedsBackward { forward, backward } => write!(
                f,
                "friction.xi_forward ({forward}) exceeds friction.xi_backward ({backward})"
            ),
        }
    }
}

/// Anisotropic Coulomb coefficients of the bristle contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionParams {
    /// Tangential coefficient when sliding along the heading.
    pub xi_forward: f64,
    /// Tangential coefficient when sliding against the heading.
    pub xi_backward: f64,
    /// Lateral coefficient.
    pub xi_normal: f64,
    /// Velocity scale (m/s) of the `tanh` used in place of the sign function.
    pub smoothing_eps: f64,
}

impl Default for FrictionParams {
    fn default() -> Self {
        Self {
            xi_forward: 0.2,
            xi_backward: 0.8,
            xi_normal: 0.6,
            smoothing_eps: 1e-3,
        }
    }
}

impl FrictionParams {
    /// All coefficients zero: a frictionless plane.
    pub fn frictionless() -> Self {
        Self {
            xi_forward: 0.0,
            xi_backward: 0.0,
            xi_normal: 0.0,
            ..Self::default()
        }
    }
}

/// Geometry and inertia of the robot. Every plate is identical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// Number of segments; there are `n + 1` plates.
    pub n: usize,
    /// Plate width (m).
    pub r: f64,
    /// Plate mass (kg).
    pub m: f64,
    /// Plate moment of inertia about its center of mass (kg m^2).
    #[serde(rename = "J")]
    pub j: f64,
    /// Gravitational acceleration (m/s^2).
    pub g: f64,
    pub friction: FrictionParams,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            n: 6,
            r: 0.1,
            m: 0.1,
            j: 8.33e-5,
            g: 9.81,
            friction: FrictionParams::default(),
        }
    }
}

impl RobotParams {
    pub fn bodies(&self) -> usize {
        self.n + 1
    }
}

fn check_positive(field: &'static str, value: f64) -> Result<(), ParamError> {
    if !value.is_finite() {
        return Err(ParamError::NonFinite { field, value });
    }
    if value <= 0.0 {
        return Err(ParamError::NonPositive { field, value });
    }
    Ok(())
}

fn check_non_negative(field: &'static str, value: f64) -> Result<(), ParamError> {
    if !value.is_finite() {
        return Err(ParamError::NonFinite { field, value });
    }
    if value < 0.0 {
        return Err(ParamError::Negative { field, value });
    }
    Ok(())
}

/// Checks every parameter invariant and returns the parameters unchanged,
/// together with any warnings (which are also logged).
pub fn validate_params(raw: RobotParams) -> Result<(RobotParams, Vec<ParamWarning>), ParamError> {
    if raw.n < 1 {
        return Err(ParamError::SegmentCount(raw.n));
    }
    check_positive("r", raw.r)?;
    check_positive("m", raw.m)?;
    check_positive("J", raw.j)?;
    check_positive("g", raw.g)?;
    let f = &raw.friction;
    check_non_negative("friction.xi_forward", f.xi_forward)?;
    check_non_negative("friction.xi_backward", f.xi_backward)?;
    check_non_negative("friction.xi_normal", f.xi_normal)?;
    check_positive("friction.smoothing_eps", f.smoothing_eps)?;

    let mut warnings = Vec::new();
    if f.xi_forward > f.xi_backward {
        warnings.push(ParamWarning::ForwardExceedsBackward {
            forward: f.xi_forward,
            backward: f.xi_backward,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((raw, warnings))
}

/// Dense integer matrix, row-major. Operator entries are small integers and
/// are kept exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.data[row * self.cols + col]
    }

    fn set(&mut self, row: usize, col: usize, value: i64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[i64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<i64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn row_sums(&self) -> Vec<i64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<i64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c)).sum())
            .collect()
    }

    /// Exact integer product `self * rhs`.
    pub fn matmul(&self, rhs: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = IntMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    let v = out.get(i, j) + a * rhs.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// `self * v` in floating point.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "dimension mismatch");
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .map(|(&a, &x)| a as f64 * x)
                    .sum()
            })
            .collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c) as f64)
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| format!("{v:>2}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// The constant operators of an `n`-segment chain.
///
/// * `d1` (n x (n+1)): `d1 * X = Lx`, i.e. row `i` is `x_i - x_{i+1}`.
/// * `d2` ((n+1) x 2n): distributes actuator forces onto bodies.
/// * `d3` ((n+1) x 2n): signs of the actuator torque arms on each body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operators {
    pub n: usize,
    pub d1: IntMatrix,
    pub d2: IntMatrix,
    pub d3: IntMatrix,
}

impl Operators {
    /// The all-ones vector of length `n + 1`.
    pub fn e(&self) -> Vec<i64> {
        vec![1; self.n + 1]
    }
}

pub fn build_operators(n: usize) -> Result<Operators, ParamError> {
    if n < 1 {
        return Err(ParamError::SegmentCount(n));
    }
    let mut d1 = IntMatrix::zeros(n, n + 1);
    for i in 0..n {
        d1.set(i, i, 1);
        d1.set(i, i + 1, -1);
    }

    let mut d2 = IntMatrix::zeros(n + 1, 2 * n);
    let mut d3 = IntMatrix::zeros(n + 1, 2 * n);
    for body in 0..=n {
        // segment ahead of this body (body - 1), pushing it backwards
        if body > 0 {
            let seg = body - 1;
            d2.set(body, 2 * seg, 1);
            d2.set(body, 2 * seg + 1, 1);
            d3.set(body, 2 * seg, -1);
            d3.set(body, 2 * seg + 1, 1);
        }
        // segment behind this body
        if body < n {
            let seg = body;
            d2.set(body, 2 * seg, -1);
            d2.set(body, 2 * seg + 1, -1);
            d3.set(body, 2 * seg, 1);
            d3.set(body, 2 * seg + 1, -1);
        }
    }
    Ok(Operators { n, d1, d2, d3 })
}

/// Diagonal matrices `diag(cos theta_i)` and `diag(sin theta_i)`.
pub fn angle_diagonals(theta: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        theta.len(),
        theta.iter().map(|t| t.cos()),
    ));
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        theta.len(),
        theta.iter().map(|t| t.sin()),
    ));
    (c, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_segment_operators() {
        let ops = build_operators(1).unwrap();
        assert_eq!(ops.d1, IntMatrix::from_rows(&[vec![1, -1]]));
        assert_eq!(ops.d2, IntMatrix::from_rows(&[vec![-1, -1], vec![1, 1]]));
        assert_eq!(ops.d3, IntMatrix::from_rows(&[vec![1, -1], vec![-1, 1]]));
    }

    #[test]
    fn d1_maps_positions_to_link_components() {
        let ops = build_operators(1).unwrap();
        assert_eq!(ops.d1.mul_vec(&[3.0, 1.0]), vec![2.0]);
    }

    #[test]
    fn zero_segments_rejected() {
        assert_eq!(build_operators(0), Err(ParamError::SegmentCount(0)));
    }

    #[test]
    fn identities_hold_for_small_chains() {
        for n in 1..=20 {
            let ops = build_operators(n).unwrap();
            assert!(ops.d2.column_sums().iter().all(|&s| s == 0));
            assert!(ops.d3.column_sums().iter().all(|&s| s == 0));
            assert!(ops.d1.row_sums().iter().all(|&s| s == 0));
            let p = ops.d1.matmul(&ops.d2);
            for seg in 0..n {
                assert_eq!(p.column(2 * seg), p.column(2 * seg + 1));
                assert_eq!(ops.d2.column(2 * seg), ops.d2.column(2 * seg + 1));
            }
        }
    }

    #[test]
    fn six_segment_shapes() {
        let ops = build_operators(6).unwrap();
        assert_eq!((ops.d1.nrows(), ops.d1.ncols()), (6, 7));
        assert_eq!((ops.d2.nrows(), ops.d2.ncols()), (7, 12));
        assert_eq!((ops.d3.nrows(), ops.d3.ncols()), (7, 12));
        assert_eq!(ops.e().len(), 7);
    }

    #[test]
    fn angle_diagonal_examples() {
        let (c, s) = angle_diagonals(&[0.0, std::f64::consts::FRAC_PI_2]);
        assert_eq!(c[(0, 0)], 1.0);
        assert!(c[(1, 1)].abs() < 1e-16);
        assert_eq!(s[(0, 0)], 0.0);
        assert_eq!(s[(1, 1)], 1.0);
        assert_eq!(c[(0, 1)], 0.0);

        let (c, s) = angle_diagonals(&[0.0; 4]);
        assert_eq!(c, DMatrix::identity(4, 4));
        assert_eq!(s, DMatrix::zeros(4, 4));

        let (c, s) = angle_diagonals(&[0.3]);
        assert!((c[(0, 0)] - 0.955_336_489_125_606).abs() < 1e-15);
        assert!((s[(0, 0)] - 0.295_520_206_661_339_6).abs() < 1e-15);
    }

    #[test]
    fn default_params_accepted() {
        let (p, w) = validate_params(RobotParams::default()).unwrap();
        assert_eq!(p, RobotParams::default());
        assert!(w.is_empty());
    }

    #[test]
    fn zero_mass_rejected() {
        let raw = RobotParams {
            m: 0.0,
            ..RobotParams::default()
        };
        let err = validate_params(raw).unwrap_err();
        assert_eq!(err.field(), "m");
    }

    #[test]
    fn invalid_values_name_their_field() {
        let base = RobotParams::default();
        let cases: Vec<(RobotParams, &str)> = vec![
            (RobotParams { n: 0, ..base }, "n"),
            (RobotParams { r: -0.1, ..base }, "r"),
            (RobotParams { j: 0.0, ..base }, "J"),
            (RobotParams { g: f64::NAN, ..base }, "g"),
            (
                RobotParams {
                    friction: FrictionParams {
                        xi_normal: -0.1,
                        ..base.friction
                    },
                    ..base
                },
                "friction.xi_normal",
            ),
            (
                RobotParams {
                    friction: FrictionParams {
                        smoothing_eps: 0.0,
                        ..base.friction
                    },
                    ..base
                },
                "friction.smoothing_eps",
            ),
            (
                RobotParams {
                    m: f64::INFINITY,
                    ..base
                },
                "m",
            ),
        ];
        for (p, field) in cases {
            assert_eq!(validate_params(p).unwrap_err().field(), field);
        }
    }

    #[test]
    fn reversed_anisotropy_warns() {
        let raw = RobotParams {
            friction: FrictionParams {
                xi_forward: 0.9,
                xi_backward: 0.2,
                ..FrictionParams::default()
            },
            ..RobotParams::default()
        };
        let (p, w) = validate_params(raw).unwrap();
        assert_eq!(p, raw);
        assert_eq!(
            w,
            vec![ParamWarning::ForwardExceedsBackward {
                forward: 0.9,
                backward: 0.2
            }]
        );
    }

    proptest! {
        #[test]
        fn diagonals_are_unit(theta in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let (c, s) = angle_diagonals(&theta);
            for i in 0..theta.len() {
                let v = c[(i, i)] * c[(i, i)] + s[(i, i)] * s[(i, i)];
                prop_assert!((v - 1.0).abs() <= 1e-15);
            }
        }
    }
}
