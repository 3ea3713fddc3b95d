//! Object-coordinate initialization.
//!
//! A window bootstrapped from image tracks alone has its object frame sitting
//! at the first camera's optical center with an arbitrary depth unit. This
//! step relocates the origin onto the object — along the 2D region-center
//! bearing, at the cloud's mean depth — and rescales the solution so the
//! mean feature depth in the first frame is exactly 1, fixing the window's
//! intrinsic scale gauge. Reprojection residuals are unchanged: the whole
//! move is a similarity transform of the solution.

use nalgebra::{UnitQuaternion, Vector3};

use super::{BaError, SlidingWindow, MAX_INVERSE_DEPTH, MIN_INVERSE_DEPTH};
use crate::geometry::Pose;

/// What the initialization did to the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitReport {
    /// Mean first-frame cloud depth that became the new unit length.
    pub mean_depth: f64,
    /// New object-frame origin, expressed in the first camera frame at its
    /// pre-normalization scale.
    pub origin_in_first_camera: Vector3<f64>,
    /// Set when the bearing cannot reach the cloud's (positive) depth range;
    /// the origin is then placed at the mean depth *distance* along the
    /// bearing instead.
    pub bearing_outside_depth_range: bool,
}

/// Relocates the object-frame origin along `region_center_bearing` at the
/// cloud's mean first-frame depth and normalizes that mean depth to exactly
/// one.
///
/// Expects a window holding a triangulated cloud (feature inverse depths
/// consistent with the current poses). Idempotent: running it twice with the
/// same bearing leaves the window unchanged up to rounding.
pub fn initialize_object_frame(
    window: &mut SlidingWindow,
    region_center_bearing: &Vector3<f64>,
) -> Result<InitReport, BaError> {
    if window.is_empty() {
        return Err(BaError::TooFewStates { have: 0, need: 1 });
    }
    if window.features().is_empty() {
        return Err(BaError::EmptyCloud);
    }
    let bearing_norm = region_center_bearing.norm();
    if !(bearing_norm > 1e-12 && bearing_norm.is_finite()) {
        return Err(BaError::InvalidBearing);
    }
    let bearing = region_center_bearing / bearing_norm;

    // Cloud depths in the first camera frame under the current estimate.
    let first_pose = window.states()[0].pose;
    let first_inverse = first_pose.inverse();
    let mut total_depth = 0.0;
    for feature in window.features() {
        let point_object = window.feature_point_in_object(feature);
        total_depth += first_inverse.transform_point(&point_object).z;
    }
    let mean_depth = total_depth / window.features().len() as f64;
    if !(mean_depth > 0.0 && mean_depth.is_finite()) {
        return Err(BaError::NonPositiveCloudDepth(mean_depth));
    }

    // Positive depths are reachable along the bearing only when it points
    // forward; otherwise fall back to placing the origin at distance
    // `mean_depth` and record the anomaly.
    let (origin, bearing_outside_depth_range) = if bearing.z > 1e-9 {
        (bearing * (mean_depth / bearing.z), false)
    } else {
        (bearing * mean_depth, true)
    };

    // Re-express every state in the new frame: axes of the first camera,
    // origin at `origin`, unit length `mean_depth`.
    let first_rotation_inv = first_pose.rotation().inverse();
    let first_translation = first_pose.translation();
    for index in 0..window.len() {
        let pose = window.state_pose_mut(index);
        let rotation = UnitQuaternion::new_normalize(
            first_rotation_inv.as_ref() * pose.rotation().as_ref(),
        );
        let translation =
            (first_rotation_inv * (pose.translation() - first_translation) - origin) / mean_depth;
        *pose = Pose::new(rotation, translation, pose.from_frame(), pose.to_frame());
    }
    for index in 0..window.features().len() {
        let feature = window.feature_mut(index);
        feature.inverse_depth = (feature.inverse_depth * mean_depth)
            .clamp(MIN_INVERSE_DEPTH, MAX_INVERSE_DEPTH);
    }

    Ok(InitReport { mean_depth, origin_in_first_camera: origin, bearing_outside_depth_range })
}
