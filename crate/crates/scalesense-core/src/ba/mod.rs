//! Region-based sliding-window bundle adjustment.
//!
//! Estimates camera poses *with respect to the tracked object's frame* from
//! normalized 2D feature observations inside the object region. Because both
//! the camera and the object move, the estimated motion is the compound of
//! the two; its translation is only defined up to the window's intrinsic
//! scale gauge, which is pinned by freezing the first pose and normalizing
//! the mean anchor depth during object-frame initialization.
//!
//! Features are parameterized by their inverse depth along the first
//! observation ray. States are camera-in-object poses; the object-in-camera
//! trajectory consumed downstream is the inverse, taken at export.

mod init;
mod solver;
mod tracker;

pub use init::{initialize_object_frame, InitReport};
pub use solver::{jacobian_consistency_error, optimize_window, reprojection_residual};
pub use tracker::{Tracker, TrackerParams};

use alloc::vec::Vec;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{FrameId, FrameLabel, GeometryError, Pose};

/// Default sliding-window length.
pub const DEFAULT_WINDOW_SIZE: usize = 20;
/// Inverse-depth clamp range; a step that leaves it is rejected.
pub const MIN_INVERSE_DEPTH: f64 = 1e-4;
pub const MAX_INVERSE_DEPTH: f64 = 1e4;
/// Minimum depth in the target camera for a residual to be usable.
pub const MIN_TARGET_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaError {
    #[error("unknown feature id {0}")]
    UnknownFeature(u64),
    #[error("duplicate feature id {0}")]
    DuplicateFeature(u64),
    #[error("feature {feature} has no observation in frame {frame}")]
    NotObserved { feature: u64, frame: usize },
    #[error("window is full (capacity {0})")]
    WindowFull(usize),
    #[error("frame index {frame} out of range for {len} states")]
    FrameOutOfRange { frame: usize, len: usize },
    #[error("observations must be sorted by frame without duplicates")]
    UnsortedObservations,
    #[error("anchor frame {anchor} does not match first observation frame {first}")]
    AnchorMismatch { anchor: usize, first: usize },
    #[error("inverse depth {0} outside [{MIN_INVERSE_DEPTH}, {MAX_INVERSE_DEPTH}]")]
    InverseDepthOutOfRange(f64),
    #[error("window needs at least {need} states, has {have}")]
    TooFewStates { have: usize, need: usize },
    #[error("state timestamps must be strictly increasing")]
    NonIncreasingTimestamp,
    #[error("window has no feature cloud to initialize from")]
    EmptyCloud,
    #[error("mean cloud depth {0} in the first camera is not positive")]
    NonPositiveCloudDepth(f64),
    #[error("bearing vector is numerically zero")]
    InvalidBearing,
    #[error(
        "normal equations singular at damping {lambda:.3e} \
         (hessian diagonal in [{min_diag:.3e}, {max_diag:.3e}], {size} parameters)"
    )]
    SingularNormalEquations { lambda: f64, min_diag: f64, max_diag: f64, size: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One normalized 2D observation of a feature in a window frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Window-local frame index.
    pub frame: usize,
    /// Normalized image coordinates on the z=1 plane.
    pub point: Vector2<f64>,
}

/// A feature track inside the window, parameterized by inverse depth along
/// the ray of its first (anchor) observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub id: u64,
    /// Window index of the first observation.
    pub anchor_frame: usize,
    /// Sorted by frame, no duplicates.
    pub observations: Vec<Observation>,
    /// Inverse depth in the anchor camera, 1/depth in window-intrinsic units.
    pub inverse_depth: f64,
}

impl FeatureTrack {
    pub fn observation_in(&self, frame: usize) -> Option<&Observation> {
        self.observations.iter().find(|o| o.frame == frame)
    }

    pub fn anchor_observation(&self) -> &Observation {
        self.observations
            .first()
            .expect("feature tracks always carry their anchor observation")
    }

    /// Back-projected anchor point in the anchor camera frame.
    pub fn point_in_anchor_camera(&self) -> Vector3<f64> {
        let obs = self.anchor_observation();
        Vector3::new(obs.point.x, obs.point.y, 1.0) / self.inverse_depth
    }

    /// Participates in estimation only with two or more observations; a
    /// single-observation track is an inert passenger awaiting its second
    /// observation.
    pub fn is_active(&self) -> bool {
        self.observations.len() >= 2
    }

    fn validate(&self) -> Result<(), BaError> {
        match self.observations.first() {
            Some(first) if first.frame == self.anchor_frame => {}
            Some(first) => {
                return Err(BaError::AnchorMismatch {
                    anchor: self.anchor_frame,
                    first: first.frame,
                })
            }
            None => {
                return Err(BaError::AnchorMismatch { anchor: self.anchor_frame, first: usize::MAX })
            }
        }
        for pair in self.observations.windows(2) {
            if pair[1].frame <= pair[0].frame {
                return Err(BaError::UnsortedObservations);
            }
        }
        if !(MIN_INVERSE_DEPTH..=MAX_INVERSE_DEPTH).contains(&self.inverse_depth) {
            return Err(BaError::InverseDepthOutOfRange(self.inverse_depth));
        }
        Ok(())
    }
}

/// One camera state in the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowState {
    /// Global frame number, used for frame ids and export.
    pub frame_id: u64,
    pub timestamp: f64,
    /// Camera-in-object pose: maps camera coordinates into the object frame.
    pub pose: Pose,
}

/// Sliding window of camera-in-object states plus the feature tracks
/// observed across them.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    capacity: usize,
    states: Vec<WindowState>,
    features: Vec<FeatureTrack>,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "window capacity must be at least 2");
        Self { capacity, states: Vec::with_capacity(capacity), features: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.states.len() == self.capacity
    }

    pub fn states(&self) -> &[WindowState] {
        &self.states
    }

    pub fn features(&self) -> &[FeatureTrack] {
        &self.features
    }

    pub fn feature(&self, id: u64) -> Option<&FeatureTrack> {
        self.features.iter().find(|f| f.id == id)
    }

    /// Appends a camera state. The pose must map camera -> object.
    pub fn push_state(
        &mut self,
        frame_id: u64,
        timestamp: f64,
        pose: Pose,
    ) -> Result<(), BaError> {
        if self.states.len() == self.capacity {
            return Err(BaError::WindowFull(self.capacity));
        }
        if pose.from_frame().label != FrameLabel::Camera
            || pose.to_frame().label != FrameLabel::Object
        {
            return Err(BaError::Geometry(GeometryError::WrongFrameKind {
                expected_from: FrameLabel::Camera,
                expected_to: FrameLabel::Object,
                from: pose.from_frame(),
                to: pose.to_frame(),
            }));
        }
        if let Some(last) = self.states.last() {
            if timestamp <= last.timestamp {
                return Err(BaError::NonIncreasingTimestamp);
            }
        }
        self.states.push(WindowState { frame_id, timestamp, pose });
        Ok(())
    }

    pub fn add_feature(&mut self, feature: FeatureTrack) -> Result<(), BaError> {
        feature.validate()?;
        if self.feature(feature.id).is_some() {
            return Err(BaError::DuplicateFeature(feature.id));
        }
        if let Some(last) = feature.observations.last() {
            if last.frame >= self.states.len() {
                return Err(BaError::FrameOutOfRange { frame: last.frame, len: self.states.len() });
            }
        }
        self.features.push(feature);
        Ok(())
    }

    /// Appends an observation to an existing feature; frames must arrive in
    /// increasing order.
    pub fn add_observation(
        &mut self,
        feature_id: u64,
        frame: usize,
        point: Vector2<f64>,
    ) -> Result<(), BaError> {
        if frame >= self.states.len() {
            return Err(BaError::FrameOutOfRange { frame, len: self.states.len() });
        }
        let feature = self
            .features
            .iter_mut()
            .find(|f| f.id == feature_id)
            .ok_or(BaError::UnknownFeature(feature_id))?;
        if feature.observations.last().map_or(false, |o| o.frame >= frame) {
            return Err(BaError::UnsortedObservations);
        }
        feature.observations.push(Observation { frame, point });
        Ok(())
    }

    /// 3D position of a feature in the object frame, from its anchor state
    /// and inverse depth.
    pub fn feature_point_in_object(&self, feature: &FeatureTrack) -> Vector3<f64> {
        let anchor = &self.states[feature.anchor_frame];
        anchor.pose.transform_point(&feature.point_in_anchor_camera())
    }

    /// Mean depth of the active features in their anchor cameras; the scale
    /// gauge coordinate.
    pub fn mean_anchor_depth(&self) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for feature in self.features.iter().filter(|f| f.is_active()) {
            total += 1.0 / feature.inverse_depth;
            count += 1;
        }
        (count > 0).then(|| total / count as f64)
    }

    /// Total cost: sum of squared valid reprojection residuals.
    pub fn total_cost(&self) -> f64 {
        solver::evaluate_cost(self).0
    }

    /// Drops the oldest state. Features anchored there are re-anchored to
    /// their next observing frame with the inverse depth re-derived from the
    /// current 3D estimate; features with no remaining observations (or a
    /// re-anchor point behind the camera) are removed.
    pub fn marginalize_oldest(&mut self) -> Result<(), BaError> {
        if self.states.len() < 2 {
            return Err(BaError::TooFewStates { have: self.states.len(), need: 2 });
        }
        let mut kept = Vec::with_capacity(self.features.len());
        for mut feature in core::mem::take(&mut self.features) {
            if feature.anchor_frame == 0 {
                // Re-anchor before the state disappears.
                let has_later = feature.observations.iter().any(|o| o.frame > 0);
                if !has_later {
                    continue;
                }
                let point_object = self.feature_point_in_object(&feature);
                feature.observations.retain(|o| o.frame > 0);
                let new_anchor = feature.observations[0].frame;
                let in_new_anchor =
                    self.states[new_anchor].pose.inverse().transform_point(&point_object);
                if in_new_anchor.z <= MIN_TARGET_DEPTH {
                    continue;
                }
                let inverse_depth =
                    (1.0 / in_new_anchor.z).clamp(MIN_INVERSE_DEPTH, MAX_INVERSE_DEPTH);
                feature.anchor_frame = new_anchor;
                feature.inverse_depth = inverse_depth;
            } else {
                feature.observations.retain(|o| o.frame > 0);
            }
            for obs in feature.observations.iter_mut() {
                obs.frame -= 1;
            }
            feature.anchor_frame -= 1;
            kept.push(feature);
        }
        self.features = kept;
        self.states.remove(0);
        Ok(())
    }

    pub(crate) fn state_pose_mut(&mut self, index: usize) -> &mut Pose {
        &mut self.states[index].pose
    }

    pub(crate) fn feature_mut(&mut self, index: usize) -> &mut FeatureTrack {
        &mut self.features[index]
    }

    /// Object-in-camera pose of a window state (the export convention).
    pub fn object_in_camera(&self, index: usize) -> Pose {
        self.states[index].pose.inverse()
    }
}

/// Convergence report for one window optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
}

/// Camera-in-object pose with standard frame ids for a window state.
pub(crate) fn camera_in_object_frames(frame_id: u64) -> (FrameId, FrameId) {
    (FrameId::camera(frame_id), FrameId::object(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn camera_pose(frame_id: u64, translation: Vector3<f64>) -> Pose {
        let (from, to) = camera_in_object_frames(frame_id);
        Pose::new(UnitQuaternion::identity(), translation, from, to)
    }

    #[test]
    fn window_rejects_overflow_and_bad_frames() {
        let mut window = SlidingWindow::new(2);
        window.push_state(0, 0.0, camera_pose(0, Vector3::zeros())).unwrap();
        window.push_state(1, 0.1, camera_pose(1, Vector3::new(0.1, 0.0, 0.0))).unwrap();
        assert!(matches!(
            window.push_state(2, 0.2, camera_pose(2, Vector3::zeros())),
            Err(BaError::WindowFull(2))
        ));
        assert!(matches!(
            window.add_observation(99, 0, Vector2::zeros()),
            Err(BaError::UnknownFeature(99))
        ));
        let feature = FeatureTrack {
            id: 0,
            anchor_frame: 0,
            observations: alloc::vec![
                Observation { frame: 0, point: Vector2::zeros() },
                Observation { frame: 5, point: Vector2::zeros() },
            ],
            inverse_depth: 0.5,
        };
        assert!(matches!(
            window.add_feature(feature),
            Err(BaError::FrameOutOfRange { frame: 5, .. })
        ));
    }

    #[test]
    fn feature_validation_catches_anchor_and_order_problems() {
        let bad_anchor = FeatureTrack {
            id: 0,
            anchor_frame: 1,
            observations: alloc::vec![Observation { frame: 0, point: Vector2::zeros() }],
            inverse_depth: 0.5,
        };
        assert!(matches!(bad_anchor.validate(), Err(BaError::AnchorMismatch { .. })));

        let unsorted = FeatureTrack {
            id: 0,
            anchor_frame: 0,
            observations: alloc::vec![
                Observation { frame: 0, point: Vector2::zeros() },
                Observation { frame: 0, point: Vector2::zeros() },
            ],
            inverse_depth: 0.5,
        };
        assert!(matches!(unsorted.validate(), Err(BaError::UnsortedObservations)));

        let bad_depth = FeatureTrack {
            id: 0,
            anchor_frame: 0,
            observations: alloc::vec![Observation { frame: 0, point: Vector2::zeros() }],
            inverse_depth: 0.0,
        };
        assert!(matches!(bad_depth.validate(), Err(BaError::InverseDepthOutOfRange(_))));
    }

    #[test]
    fn marginalize_reanchors_and_prunes() {
        let mut window = SlidingWindow::new(3);
        window.push_state(0, 0.0, camera_pose(0, Vector3::zeros())).unwrap();
        window
            .push_state(1, 0.1, camera_pose(1, Vector3::new(-1.0, 0.0, 0.0)))
            .unwrap();

        // Point at (0,0,2) in the object frame; camera 1 sits at (-1,0,0).
        window
            .add_feature(FeatureTrack {
                id: 7,
                anchor_frame: 0,
                observations: alloc::vec![
                    Observation { frame: 0, point: Vector2::new(0.0, 0.0) },
                    Observation { frame: 1, point: Vector2::new(0.5, 0.0) },
                ],
                inverse_depth: 0.5,
            })
            .unwrap();
        // Feature seen only in the frame about to be dropped.
        window
            .add_feature(FeatureTrack {
                id: 8,
                anchor_frame: 0,
                observations: alloc::vec![Observation { frame: 0, point: Vector2::new(0.1, 0.1) }],
                inverse_depth: 0.5,
            })
            .unwrap();

        let before = window.feature_point_in_object(window.feature(7).unwrap());
        window.marginalize_oldest().unwrap();

        assert_eq!(window.len(), 1);
        assert!(window.feature(8).is_none());
        let survivor = window.feature(7).unwrap();
        assert_eq!(survivor.anchor_frame, 0);
        assert_eq!(survivor.observations.len(), 1);
        let after = window.feature_point_in_object(survivor);
        assert!((before - after).norm() < 1e-10);
    }
}
