//! Motion-derivative extraction.
//!
//! The scale estimator works on n-th order time derivatives of three
//! synchronized position signals: the camera in the world frame, the rotated
//! up-to-scale relative position, and (in simulation) the true object
//! position. This module computes those derivatives with forward finite
//! differences over uniformly sampled trajectories and maintains the rolling
//! window of samples the estimator consumes.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{rotate_relative_position, FrameLabel, GeometryError, TimedTrajectory};

/// Default derivative order: velocity.
pub const DEFAULT_DERIVATIVE_ORDER: usize = 1;

/// Relative deviation from the mean sample spacing tolerated before a
/// trajectory is rejected as non-uniform.
pub const SPACING_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("derivative order {0} is unsupported (expected 1 or 2)")]
    UnsupportedOrder(usize),
    #[error("need at least {need} samples for order {order}, got {have}")]
    TooFewSamples { have: usize, need: usize, order: usize },
    #[error("non-uniform sample spacing at index {index}: gap {gap} vs expected {expected}")]
    NonUniformSpacing { index: usize, gap: f64, expected: f64 },
    #[error("timestamp mismatch at index {index}: {left} vs {right}")]
    TimestampMismatch { index: usize, left: f64, right: f64 },
    #[error("trajectory lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sample has a non-finite component")]
    NonFiniteSample,
    #[error("samples must arrive in strictly increasing time order")]
    NonIncreasingTimestamp,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Paired motion derivatives at one timestamp.
///
/// `camera` is the derivative of the metric camera world position, `relative`
/// the derivative of the rotated up-to-scale relative position. Their affine
/// combination `scale * relative + camera` reconstructs the object motion at
/// a candidate scale. `object_truth` carries the derivative of the true
/// object world position when a simulator supplies it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSample {
    pub timestamp: f64,
    pub camera: Vector3<f64>,
    pub relative: Vector3<f64>,
    pub object_truth: Option<Vector3<f64>>,
}

impl MotionSample {
    fn is_finite(&self) -> bool {
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        self.timestamp.is_finite()
            && finite(&self.camera)
            && finite(&self.relative)
            && self.object_truth.as_ref().map_or(true, finite)
    }

    /// Reconstructed object motion at the given candidate scale.
    pub fn reconstructed(&self, scale: f64) -> Vector3<f64> {
        scale * self.relative + self.camera
    }
}

/// Rolling window of the latest motion samples.
///
/// Pushing beyond capacity drops the oldest sample.
#[derive(Debug, Clone)]
pub struct SampleWindow {
    capacity: usize,
    samples: VecDeque<MotionSample>,
}

impl SampleWindow {
    /// Default window capacity.
    pub const DEFAULT_CAPACITY: usize = 200;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "sample window capacity must be at least 2");
        Self { capacity, samples: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn push(&mut self, sample: MotionSample) -> Result<(), MotionError> {
        if !sample.is_finite() {
            return Err(MotionError::NonFiniteSample);
        }
        if let Some(last) = self.samples.back() {
            if sample.timestamp <= last.timestamp {
                return Err(MotionError::NonIncreasingTimestamp);
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &MotionSample> {
        self.samples.iter()
    }

    /// All samples currently in the window, oldest first.
    pub fn samples(&self) -> Vec<MotionSample> {
        self.samples.iter().copied().collect()
    }
}

/// Forward finite differences of order 1 or 2 over a uniformly spaced signal.
///
/// Order 1 maps `p` to `(p[k+1] - p[k]) / dt`, order 2 to
/// `(p[k+2] - 2 p[k+1] + p[k]) / dt^2`, both timestamped at the leading
/// sample; the output is `order` samples shorter than the input. `dt` is the
/// mean spacing, and every gap must match it within [`SPACING_TOLERANCE`].
pub fn finite_difference(
    samples: &[(f64, Vector3<f64>)],
    order: usize,
) -> Result<Vec<(f64, Vector3<f64>)>, MotionError> {
    if !(order == 1 || order == 2) {
        return Err(MotionError::UnsupportedOrder(order));
    }
    if samples.len() < order + 1 {
        return Err(MotionError::TooFewSamples { have: samples.len(), need: order + 1, order });
    }
    let dt = uniform_spacing(samples)?;
    let out_len = samples.len() - order;
    let mut out = Vec::with_capacity(out_len);
    match order {
        1 => {
            for k in 0..out_len {
                let d = (samples[k + 1].1 - samples[k].1) / dt;
                out.push((samples[k].0, d));
            }
        }
        2 => {
            let dt2 = dt * dt;
            for k in 0..out_len {
                let d = (samples[k + 2].1 - 2.0 * samples[k + 1].1 + samples[k].1) / dt2;
                out.push((samples[k].0, d));
            }
        }
        _ => unreachable!(),
    }
    Ok(out)
}

fn uniform_spacing(samples: &[(f64, Vector3<f64>)]) -> Result<f64, MotionError> {
    let n = samples.len();
    let expected = (samples[n - 1].0 - samples[0].0) / (n - 1) as f64;
    if !(expected > 0.0 && expected.is_finite()) {
        return Err(MotionError::NonUniformSpacing { index: 0, gap: expected, expected });
    }
    for k in 1..n {
        let gap = samples[k].0 - samples[k - 1].0;
        if (gap - expected).abs() > SPACING_TOLERANCE * expected {
            return Err(MotionError::NonUniformSpacing { index: k, gap, expected });
        }
    }
    Ok(expected)
}

/// Builds motion samples from synchronized camera-in-world and up-to-scale
/// object-in-camera trajectories.
///
/// The relative position is first rotated into world axes with the camera
/// pose at the same timestamp, then both signals are differentiated. When a
/// ground-truth object-in-world trajectory is supplied its derivative is
/// attached to each sample.
pub fn build_samples(
    camera_world: &TimedTrajectory,
    object_camera_upscale: &TimedTrajectory,
    order: usize,
    object_world_truth: Option<&TimedTrajectory>,
) -> Result<Vec<MotionSample>, MotionError> {
    check_labels(camera_world, FrameLabel::Camera, FrameLabel::World)?;
    check_labels(object_camera_upscale, FrameLabel::Object, FrameLabel::Camera)?;
    check_timestamps(camera_world, object_camera_upscale)?;
    if let Some(truth) = object_world_truth {
        check_labels(truth, FrameLabel::Object, FrameLabel::World)?;
        check_timestamps(camera_world, truth)?;
    }

    let camera_positions: Vec<(f64, Vector3<f64>)> = camera_world
        .iter()
        .map(|(t, pose)| (*t, pose.translation()))
        .collect();

    let mut rotated_relative = Vec::with_capacity(camera_world.len());
    for ((t, camera_pose), (_, object_pose)) in camera_world.iter().zip(object_camera_upscale.iter())
    {
        let rotated = rotate_relative_position(camera_pose, &object_pose.translation())?;
        rotated_relative.push((*t, rotated));
    }

    let camera_derivatives = finite_difference(&camera_positions, order)?;
    let relative_derivatives = finite_difference(&rotated_relative, order)?;
    let truth_derivatives = match object_world_truth {
        Some(truth) => {
            let positions: Vec<(f64, Vector3<f64>)> =
                truth.iter().map(|(t, pose)| (*t, pose.translation())).collect();
            Some(finite_difference(&positions, order)?)
        }
        None => None,
    };

    let samples = camera_derivatives
        .iter()
        .zip(relative_derivatives.iter())
        .enumerate()
        .map(|(k, ((t, camera), (_, relative)))| MotionSample {
            timestamp: *t,
            camera: *camera,
            relative: *relative,
            object_truth: truth_derivatives.as_ref().map(|d| d[k].1),
        })
        .collect();
    Ok(samples)
}

fn check_labels(
    trajectory: &TimedTrajectory,
    from: FrameLabel,
    to: FrameLabel,
) -> Result<(), MotionError> {
    if trajectory.from_label() != from || trajectory.to_label() != to {
        return Err(MotionError::Geometry(GeometryError::TrajectoryFrameMismatch {
            expected_from: from,
            expected_to: to,
            from: crate::geometry::FrameId { label: trajectory.from_label(), index: 0 },
            to: crate::geometry::FrameId { label: trajectory.to_label(), index: 0 },
            index: 0,
        }));
    }
    Ok(())
}

fn check_timestamps(a: &TimedTrajectory, b: &TimedTrajectory) -> Result<(), MotionError> {
    if a.len() != b.len() {
        return Err(MotionError::LengthMismatch { left: a.len(), right: b.len() });
    }
    for (index, (ta, tb)) in a.timestamps().zip(b.timestamps()).enumerate() {
        if ta != tb {
            return Err(MotionError::TimestampMismatch { index, left: ta, right: tb });
        }
    }
    Ok(())
}
