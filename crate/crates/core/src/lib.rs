//! Balance and collaboration control stack for a position-controlled humanoid.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`] – linear inverted pendulum and divergent component of motion (DCM) kinematics.
//! * [`planner`] – nominal footstep plan and the piecewise DCM reference it induces.
//! * [`balance`] – DCM-error driven ZMP modification, foot-bound clamping and CoM regulation.
//! * [`step_qp`] – step position / step timing / DCM offset quadratic program.
//! * [`tactile`] – barometric fingertip emulation, CUSUM change detection and grasp cues.
//! * [`collaboration`] – hand → CoM → step escalation state machine.
//! * [`compliance`] – simplified touchdown compliance (leg length, clearance, ankle tilt).
//! * [`wrist`] – 2RSS-1U wrist Jacobian, condition number objective and design optimiser.
//! * [`scenario`] and [`sim`] – scripted experiments and the fixed-rate closed loop.
//!
//! Every computation is deterministic given its inputs (and an explicit seed where noise
//! is involved).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod collaboration;
pub mod compliance;
pub mod dynamics;
mod error;
pub mod params;
pub mod planner;
pub mod qp;
pub mod scenario;
pub mod sim;
pub mod step_qp;
pub mod tactile;
pub mod wrist;

pub use error::{Error, Result};
pub use params::{KinematicBounds, RobotParams};

/// Planar vector used for every horizontal quantity (CoM, DCM, ZMP, footsteps).
pub type Vec2 = nalgebra::Vector2<f64>;
