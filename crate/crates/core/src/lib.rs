//! Planar dynamics of a metameric earthworm robot.
//!
//! The robot is a chain of `n + 1` rigid plates joined by `n` deformable
//! trapezoidal segments. Each segment has a left and a right actuator whose
//! prescribed lengths set its bend angle and midline length. Ground friction
//! is anisotropic Coulomb friction with a smoothed sign, and the head plate's
//! planar motion is integrated with classic RK4.

// `!(a <= b)` is used deliberately so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod friction;
pub mod gait;
pub mod geometry;
pub mod model;
pub mod simulation;
