//! Dense contact-field labels for tool-use data: tactile signal
//! conditioning, simulation and real-world label generation, a friction-cone
//! force solver, evaluation metrics and a synthetic episode generator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod composite;
pub mod error;
pub mod eval;
pub mod force_opt;
pub mod geometry;
pub mod io;
pub mod model;
pub mod real_label;
pub mod sim_label;
pub mod synth;
pub mod tactile;

pub use error::{Error, Result};
pub use model::{ContactField, Frame, Pose, TactileState, Vec3};
pub use tactile::{CalibrationScale, FrameId, Wrench};
