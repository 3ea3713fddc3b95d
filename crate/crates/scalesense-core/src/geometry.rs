//! Frame-aware rigid-body geometry.
//!
//! Every [`Pose`] carries the pair of frames it maps between, and the
//! operations in this module refuse to chain transforms whose inner frames
//! disagree. Three frame labels exist: the static world frame, the camera
//! frame and the tracked-object frame; the latter two are time-indexed.
//!
//! Conventions fixed here and used everywhere else in the workspace:
//! quaternions are stored and serialized in `(qw, qx, qy, qz)` order,
//! timestamps are seconds as `f64`, and rotations are renormalized after
//! every composition (drift beyond 1e-9 is a debug assertion failure).

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

/// Which physical frame a [`FrameId`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameLabel {
    /// The static world frame (metric, provided by the camera's own odometry).
    World,
    /// The camera frame at some time index.
    Camera,
    /// The tracked object's body frame at some time index.
    Object,
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameLabel::World => write!(f, "world"),
            FrameLabel::Camera => write!(f, "camera"),
            FrameLabel::Object => write!(f, "object"),
        }
    }
}

/// A coordinate frame: a label plus a time index.
///
/// The world frame is static and always carries index 0. Camera and object
/// frames are per-sample snapshots; the index ties them to a trajectory
/// sample or a global frame counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameId {
    pub label: FrameLabel,
    pub index: u64,
}

impl FrameId {
    pub const fn world() -> Self {
        Self { label: FrameLabel::World, index: 0 }
    }

    pub const fn camera(index: u64) -> Self {
        Self { label: FrameLabel::Camera, index }
    }

    pub const fn object(index: u64) -> Self {
        Self { label: FrameLabel::Object, index }
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label {
            FrameLabel::World => write!(f, "world"),
            _ => write!(f, "{}[{}]", self.label, self.index),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    /// Two transforms were chained but the inner frames disagree.
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: FrameId, found: FrameId },
    /// A pose with the wrong frame labels was passed to an operation.
    #[error("expected a {expected_from}->{expected_to} pose, got {from}->{to}")]
    WrongFrameKind {
        expected_from: FrameLabel,
        expected_to: FrameLabel,
        from: FrameId,
        to: FrameId,
    },
    #[error("scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("timestamps must be strictly increasing: sample {index} has {t} after {prev}")]
    NonIncreasingTimestamp { index: usize, prev: f64, t: f64 },
    #[error(
        "trajectory expects {expected_from}->{expected_to} poses, sample {index} is {from}->{to}"
    )]
    TrajectoryFrameMismatch {
        expected_from: FrameLabel,
        expected_to: FrameLabel,
        from: FrameId,
        to: FrameId,
        index: usize,
    },
    #[error("timestamp is not finite: {0}")]
    NonFiniteTimestamp(f64),
}

/// Maximum tolerated quaternion norm drift before renormalization.
const QUATERNION_DRIFT_TOLERANCE: f64 = 1e-9;

/// Rigid transform between two named frames.
///
/// Maps coordinates expressed in `from_frame` into `to_frame`:
/// `x_to = R * x_from + t`. The translation is metric for world-frame poses
/// and unitless for up-to-scale object poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
    from_frame: FrameId,
    to_frame: FrameId,
}

impl Pose {
    pub fn new(
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
        from_frame: FrameId,
        to_frame: FrameId,
    ) -> Self {
        debug_assert!(
            (rotation.as_ref().norm() - 1.0).abs() <= QUATERNION_DRIFT_TOLERANCE,
            "quaternion norm drifted beyond tolerance"
        );
        Self { rotation, translation, from_frame, to_frame }
    }

    /// Identity transform of a frame onto itself.
    pub fn identity(frame: FrameId) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros(), frame, frame)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn from_frame(&self) -> FrameId {
        self.from_frame
    }

    pub fn to_frame(&self) -> FrameId {
        self.to_frame
    }

    /// Inverse transform; swaps the frame pair.
    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose::new(
            rotation,
            -(rotation * self.translation),
            self.to_frame,
            self.from_frame,
        )
    }

    /// Maps a point from `from_frame` coordinates into `to_frame` coordinates.
    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.as_ref();
        write!(
            f,
            "{} -> {}: t=({:.4}, {:.4}, {:.4}) q=({:.4}, {:.4}, {:.4}, {:.4})",
            self.from_frame,
            self.to_frame,
            self.translation.x,
            self.translation.y,
            self.translation.z,
            q.w,
            q.i,
            q.j,
            q.k
        )
    }
}

/// Chains two transforms: the result maps `b.from_frame` into `a.to_frame`.
///
/// Requires `a.from_frame == b.to_frame` (labels and time indices). The
/// rotation is renormalized after the product.
pub fn compose(a: &Pose, b: &Pose) -> Result<Pose, GeometryError> {
    if a.from_frame != b.to_frame {
        return Err(GeometryError::FrameMismatch {
            expected: a.from_frame,
            found: b.to_frame,
        });
    }
    let raw = a.rotation.as_ref() * b.rotation.as_ref();
    debug_assert!(
        (raw.norm() - 1.0).abs() <= QUATERNION_DRIFT_TOLERANCE,
        "quaternion norm drifted beyond tolerance in composition"
    );
    let rotation = UnitQuaternion::new_normalize(raw);
    let translation = a.rotation * b.translation + a.translation;
    Ok(Pose::new(rotation, translation, b.from_frame, a.to_frame))
}

/// Rotates an up-to-scale object position from the camera frame into world
/// axes: returns `R_cw * p` without adding the camera translation.
///
/// `camera_pose_world` must be a camera -> world pose.
pub fn rotate_relative_position(
    camera_pose_world: &Pose,
    object_pos_camera_upscale: &Vector3<f64>,
) -> Result<Vector3<f64>, GeometryError> {
    expect_labels(camera_pose_world, FrameLabel::Camera, FrameLabel::World)?;
    Ok(camera_pose_world.rotation * object_pos_camera_upscale)
}

/// Recovers the metric object pose in the world frame from the camera's
/// world pose, the up-to-scale object pose in the camera frame and the
/// estimated metric scale.
///
/// The camera frame indices of the two poses must agree. Output:
/// `R = R_cw * R_oc`, `p = scale * R_cw * p_oc + p_cw`.
pub fn recover_world_pose(
    camera_pose_world: &Pose,
    object_pose_camera_upscale: &Pose,
    scale: f64,
) -> Result<Pose, GeometryError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GeometryError::NonPositiveScale(scale));
    }
    expect_labels(camera_pose_world, FrameLabel::Camera, FrameLabel::World)?;
    expect_labels(object_pose_camera_upscale, FrameLabel::Object, FrameLabel::Camera)?;
    if object_pose_camera_upscale.to_frame != camera_pose_world.from_frame {
        return Err(GeometryError::FrameMismatch {
            expected: camera_pose_world.from_frame,
            found: object_pose_camera_upscale.to_frame,
        });
    }
    let scaled = Pose::new(
        object_pose_camera_upscale.rotation,
        scale * object_pose_camera_upscale.translation,
        object_pose_camera_upscale.from_frame,
        object_pose_camera_upscale.to_frame,
    );
    compose(camera_pose_world, &scaled)
}

fn expect_labels(pose: &Pose, from: FrameLabel, to: FrameLabel) -> Result<(), GeometryError> {
    if pose.from_frame.label != from || pose.to_frame.label != to {
        return Err(GeometryError::WrongFrameKind {
            expected_from: from,
            expected_to: to,
            from: pose.from_frame,
            to: pose.to_frame,
        });
    }
    Ok(())
}

/// Uniformly ordered sequence of timestamped poses sharing one frame-label
/// pair (e.g. camera-in-world, object-in-camera).
///
/// Timestamps are strictly increasing; the per-sample frame indices are free
/// so each sample can reference its own camera/object snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedTrajectory {
    from_label: FrameLabel,
    to_label: FrameLabel,
    samples: Vec<(f64, Pose)>,
}

impl TimedTrajectory {
    pub fn new(from_label: FrameLabel, to_label: FrameLabel) -> Self {
        Self { from_label, to_label, samples: Vec::new() }
    }

    pub fn from_samples(
        from_label: FrameLabel,
        to_label: FrameLabel,
        samples: impl IntoIterator<Item = (f64, Pose)>,
    ) -> Result<Self, GeometryError> {
        let mut trajectory = Self::new(from_label, to_label);
        for (timestamp, pose) in samples {
            trajectory.push(timestamp, pose)?;
        }
        Ok(trajectory)
    }

    pub fn push(&mut self, timestamp: f64, pose: Pose) -> Result<(), GeometryError> {
        if !timestamp.is_finite() {
            return Err(GeometryError::NonFiniteTimestamp(timestamp));
        }
        let index = self.samples.len();
        if pose.from_frame().label != self.from_label || pose.to_frame().label != self.to_label {
            return Err(GeometryError::TrajectoryFrameMismatch {
                expected_from: self.from_label,
                expected_to: self.to_label,
                from: pose.from_frame(),
                to: pose.to_frame(),
                index,
            });
        }
        if let Some(&(prev, _)) = self.samples.last() {
            if timestamp <= prev {
                return Err(GeometryError::NonIncreasingTimestamp { index, prev, t: timestamp });
            }
        }
        self.samples.push((timestamp, pose));
        Ok(())
    }

    pub fn from_label(&self) -> FrameLabel {
        self.from_label
    }

    pub fn to_label(&self) -> FrameLabel {
        self.to_label
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[(f64, Pose)] {
        &self.samples
    }

    pub fn get(&self, index: usize) -> Option<&(f64, Pose)> {
        self.samples.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, Pose)> {
        self.samples.iter()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|(t, _)| *t)
    }

    pub fn positions(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.samples.iter().map(|(_, pose)| pose.translation())
    }
}

/// An up-to-scale pose paired with the metric scale that converts its
/// translation to meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledPose {
    pose: Pose,
    scale: f64,
}

impl ScaledPose {
    pub fn new(pose: Pose, scale: f64) -> Result<Self, GeometryError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GeometryError::NonPositiveScale(scale));
        }
        Ok(Self { pose, scale })
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The pose with its translation converted to metric units.
    pub fn metric(&self) -> Pose {
        Pose::new(
            self.pose.rotation(),
            self.scale * self.pose.translation(),
            self.pose.from_frame(),
            self.pose.to_frame(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::FRAC_PI_2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rz(angle: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
    }

    fn random_pose(rng: &mut ChaCha8Rng, from: FrameId, to: FrameId) -> Pose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(-3.0..3.0);
        let rotation = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        let translation = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        Pose::new(rotation, translation, from, to)
    }

    #[test]
    fn compose_with_identity_is_identity_map() {
        let pose = Pose::new(
            rz(0.3),
            Vector3::new(1.0, -2.0, 0.5),
            FrameId::camera(0),
            FrameId::world(),
        );
        let out = compose(&pose, &Pose::identity(FrameId::camera(0))).unwrap();
        assert_eq!(out.translation(), pose.translation());
        assert!(out.rotation().angle_to(&pose.rotation()) < 1e-15);
        assert_eq!(out.from_frame(), pose.from_frame());
        assert_eq!(out.to_frame(), pose.to_frame());
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let pose = random_pose(&mut rng, FrameId::camera(3), FrameId::world());
            let out = compose(&pose, &pose.inverse()).unwrap();
            assert_abs_diff_eq!(out.translation(), Vector3::zeros(), epsilon = 1e-12);
            assert!(out.rotation().angle() < 1e-12);
        }
    }

    #[test]
    fn inverse_of_inverse_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let pose = random_pose(&mut rng, FrameId::object(1), FrameId::camera(1));
            let back = pose.inverse().inverse();
            assert_abs_diff_eq!(back.translation(), pose.translation(), epsilon = 1e-12);
            assert_abs_diff_eq!(
                back.rotation().as_ref().coords,
                pose.rotation().as_ref().coords,
                epsilon = 1e-12
            );
            assert_eq!(back.from_frame(), pose.from_frame());
        }
    }

    // Hand oracle for the two-rotation case, evaluated with raw 3x3 arrays:
    // R1*t2 + t1 = Rz(90)*(0,1,0) + (1,0,0) = (-1,0,0)+(1,0,0) = (0,0,0),
    // R1*R2 = Rz(180).
    #[test]
    fn compose_two_quarter_turns() {
        let mat_rz90 = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let t2 = [0.0, 1.0, 0.0];
        let mut rotated = [0.0f64; 3];
        for r in 0..3 {
            for c in 0..3 {
                rotated[r] += mat_rz90[r][c] * t2[c];
            }
        }
        let expected_t = Vector3::new(rotated[0] + 1.0, rotated[1], rotated[2]);

        let a = Pose::new(rz(FRAC_PI_2), Vector3::new(1.0, 0.0, 0.0), FrameId::camera(1), FrameId::world());
        let b = Pose::new(rz(FRAC_PI_2), Vector3::new(0.0, 1.0, 0.0), FrameId::camera(2), FrameId::camera(1));
        let out = compose(&a, &b).unwrap();

        assert_abs_diff_eq!(out.translation(), expected_t, epsilon = 1e-12);
        let angle_to_rz180 = out.rotation().angle_to(&rz(core::f64::consts::PI));
        assert!(angle_to_rz180 < 1e-12);
        assert_eq!(out.from_frame(), FrameId::camera(2));
        assert_eq!(out.to_frame(), FrameId::world());
    }

    #[test]
    fn compose_rejects_frame_mismatch() {
        let a = Pose::identity(FrameId::camera(0));
        let b = Pose::new(rz(0.1), Vector3::zeros(), FrameId::object(0), FrameId::camera(1));
        let err = compose(&a, &b).unwrap_err();
        assert_eq!(
            err,
            GeometryError::FrameMismatch {
                expected: FrameId::camera(0),
                found: FrameId::camera(1),
            }
        );
    }

    #[test]
    fn compose_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_pose(&mut rng, FrameId::camera(1), FrameId::world());
            let b = random_pose(&mut rng, FrameId::object(1), FrameId::camera(1));
            let c = random_pose(&mut rng, FrameId::object(0), FrameId::object(1));
            let left = compose(&a, &compose(&b, &c).unwrap()).unwrap();
            let right = compose(&compose(&a, &b).unwrap(), &c).unwrap();
            assert_abs_diff_eq!(left.translation(), right.translation(), epsilon = 1e-10);
            assert!(left.rotation().angle_to(&right.rotation()) < 1e-10);
        }
    }

    #[test]
    fn rotate_relative_position_identity_and_axis() {
        let identity = Pose::new(
            UnitQuaternion::identity(),
            Vector3::zeros(),
            FrameId::camera(0),
            FrameId::world(),
        );
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(rotate_relative_position(&identity, &p).unwrap(), p);

        let quarter = Pose::new(rz(FRAC_PI_2), Vector3::new(9.0, 9.0, 9.0), FrameId::camera(0), FrameId::world());
        let out = rotate_relative_position(&quarter, &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(out, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn rotate_relative_position_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let pose = random_pose(&mut rng, FrameId::camera(0), FrameId::world());
            let p = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            // Independent route: explicit 3x3 matrix product.
            let m = pose.rotation_matrix();
            let mut expected = Vector3::zeros();
            for r in 0..3 {
                for c in 0..3 {
                    expected[r] += m[(r, c)] * p[c];
                }
            }
            let got = rotate_relative_position(&pose, &p).unwrap();
            assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotate_relative_position_rejects_wrong_labels() {
        let pose = Pose::identity(FrameId::world());
        assert!(matches!(
            rotate_relative_position(&pose, &Vector3::zeros()),
            Err(GeometryError::WrongFrameKind { .. })
        ));
    }

    #[test]
    fn recover_world_pose_identity_camera() {
        let camera = Pose::new(
            UnitQuaternion::identity(),
            Vector3::zeros(),
            FrameId::camera(0),
            FrameId::world(),
        );
        let object = Pose::new(
            rz(0.7),
            Vector3::new(0.3, -0.1, 2.0),
            FrameId::object(0),
            FrameId::camera(0),
        );
        let out = recover_world_pose(&camera, &object, 1.0).unwrap();
        assert_abs_diff_eq!(out.translation(), object.translation(), epsilon = 1e-15);
        assert!(out.rotation().angle_to(&object.rotation()) < 1e-15);
        assert_eq!(out.to_frame(), FrameId::world());
    }

    #[test]
    fn recover_world_pose_round_trips_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let scale = rng.random_range(0.1..3.0);
            let camera = random_pose(&mut rng, FrameId::camera(7), FrameId::world());
            let object_world = random_pose(&mut rng, FrameId::object(7), FrameId::world());
            // Build the up-to-scale observation from the truth.
            let p_rel = camera.rotation().inverse()
                * (object_world.translation() - camera.translation())
                / scale;
            let r_rel = camera.rotation().inverse() * object_world.rotation();
            let observed = Pose::new(r_rel, p_rel, FrameId::object(7), FrameId::camera(7));

            let recovered = recover_world_pose(&camera, &observed, scale).unwrap();
            assert_abs_diff_eq!(
                recovered.translation(),
                object_world.translation(),
                epsilon = 1e-10
            );
            assert!(recovered.rotation().angle_to(&object_world.rotation()) < 1e-10);
        }
    }

    #[test]
    fn recover_world_pose_is_equivariant_under_world_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let camera = random_pose(&mut rng, FrameId::camera(0), FrameId::world());
            let object = random_pose(&mut rng, FrameId::object(0), FrameId::camera(0));
            let scale = rng.random_range(0.2..2.0);
            let g = random_pose(&mut rng, FrameId::world(), FrameId::world());

            let moved_camera = compose(&g, &camera).unwrap();
            let direct = compose(&g, &recover_world_pose(&camera, &object, scale).unwrap()).unwrap();
            let via_moved = recover_world_pose(&moved_camera, &object, scale).unwrap();

            assert_abs_diff_eq!(direct.translation(), via_moved.translation(), epsilon = 1e-10);
            assert!(direct.rotation().angle_to(&via_moved.rotation()) < 1e-10);
        }
    }

    #[test]
    fn recover_world_pose_scale_position_reciprocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let camera = random_pose(&mut rng, FrameId::camera(0), FrameId::world());
            let object = random_pose(&mut rng, FrameId::object(0), FrameId::camera(0));
            let scale = rng.random_range(0.2..2.0);
            let k = rng.random_range(0.1..10.0);

            let scaled_object = Pose::new(
                object.rotation(),
                object.translation() * k,
                object.from_frame(),
                object.to_frame(),
            );
            let base = recover_world_pose(&camera, &object, scale).unwrap();
            let reciprocal = recover_world_pose(&camera, &scaled_object, scale / k).unwrap();
            assert_abs_diff_eq!(base.translation(), reciprocal.translation(), epsilon = 1e-10);
        }
    }

    #[test]
    fn recover_world_pose_rejects_bad_scale_and_index_mismatch() {
        let identity = UnitQuaternion::identity();
        let camera =
            Pose::new(identity, Vector3::zeros(), FrameId::camera(0), FrameId::world());
        let object =
            Pose::new(identity, Vector3::zeros(), FrameId::object(0), FrameId::camera(0));
        assert!(matches!(
            recover_world_pose(&camera, &object, 0.0),
            Err(GeometryError::NonPositiveScale(_))
        ));
        assert!(matches!(
            recover_world_pose(&camera, &object, -1.0),
            Err(GeometryError::NonPositiveScale(_))
        ));
        let object_late =
            Pose::new(identity, Vector3::zeros(), FrameId::object(1), FrameId::camera(1));
        assert!(matches!(
            recover_world_pose(&camera, &object_late, 1.0),
            Err(GeometryError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn trajectory_enforces_order_and_labels() {
        let mut traj = TimedTrajectory::new(FrameLabel::Camera, FrameLabel::World);
        let identity = UnitQuaternion::identity();
        let p0 = Pose::new(identity, Vector3::zeros(), FrameId::camera(0), FrameId::world());
        traj.push(0.0, p0).unwrap();
        let p1 = Pose::new(identity, Vector3::zeros(), FrameId::camera(1), FrameId::world());
        assert!(matches!(
            traj.push(0.0, p1),
            Err(GeometryError::NonIncreasingTimestamp { .. })
        ));
        traj.push(0.5, p1).unwrap();
        let bad = Pose::new(identity, Vector3::zeros(), FrameId::object(2), FrameId::world());
        assert!(matches!(
            traj.push(1.0, bad),
            Err(GeometryError::TrajectoryFrameMismatch { .. })
        ));
        assert_eq!(traj.len(), 2);
    }

    #[test]
    fn scaled_pose_rejects_nonpositive_scale() {
        let pose = Pose::new(
            UnitQuaternion::identity(),
            Vector3::zeros(),
            FrameId::object(0),
            FrameId::camera(0),
        );
        assert!(ScaledPose::new(pose, 0.0).is_err());
        assert!(ScaledPose::new(pose, f64::NAN).is_err());
        let scaled = ScaledPose::new(pose, 0.5).unwrap();
        assert_eq!(scaled.metric().translation(), Vector3::zeros());
    }
}
