//! Core estimation library for metric-scale recovery of dynamic objects
//! tracked by a moving monocular camera.
//!
//! A monocular tracker can estimate the 6-DoF pose of a rigid object only up
//! to an unknown scale factor. When the camera itself carries metric pose
//! information (e.g. from a visual-inertial odometry system), the missing
//! scale becomes recoverable from the temporal statistics of the two motions:
//! an incorrectly scaled object trajectory stays correlated with the camera
//! trajectory, and the scale that minimizes that correlation is available in
//! closed form. The estimate is only trustworthy under certain motion
//! conditions, so it is guarded by an observability gate.
//!
//! The crate combines:
//!
//! - [`geometry`]: frame-checked rigid transforms, timed trajectories and the
//!   world-frame object pose recovery;
//! - [`ba`]: a sliding-window, region-based bundle adjustment estimating the
//!   camera relative to the tracked object from normalized feature tracks;
//! - [`motion`]: motion-derivative extraction over synchronized trajectories;
//! - [`scale`]: sample covariances, the closed-form scale estimator and the
//!   three-part observability gate;
//! - [`sim`]: a trajectory/feature-track simulator with a library of
//!   degenerate motion scenarios used to validate the gate.
//!
//! The crate is `no_std`-compatible (`alloc` required): disable default
//! features and enable `libm`.
#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("scalesense-core requires either the `std` or the `libm` feature");

pub mod ba;
pub mod geometry;
pub mod motion;
pub mod scale;
pub mod sim;

mod float;

pub use geometry::{
    compose, recover_world_pose, rotate_relative_position, FrameId, FrameLabel, GeometryError,
    Pose, ScaledPose, TimedTrajectory,
};
pub use motion::{build_samples, finite_difference, MotionError, MotionSample, SampleWindow};
pub use scale::{
    closed_form_scale, error_ratio_diagnostic, evaluate_gate, objective, sample_covariance,
    GateThresholds, ScaleError, ScaleEstimate, Verdict,
};
