//! Trajectory and feature-track simulator.
//!
//! Generates ground-truth camera and object trajectories, the up-to-scale
//! relative observations a region-based tracker would produce, and synthetic
//! normalized feature tracks, all deterministically from a seed. Besides
//! rich independent motion, the scenario library covers the four motion
//! combinations under which the metric scale is unidentifiable:
//!
//! - the camera translation mimics the object translation,
//! - the camera is static,
//! - the camera moves at constant velocity,
//! - the relative observation is static while both bodies move.
//!
//! The static and constant-velocity scenarios ship with a small camera pose
//! random walk (a hand-held camera is never perfectly still); without it
//! every covariance involving the camera motion is identically zero and the
//! gate would trip on numerical stability instead of the camera-excitation
//! check this case is meant to exercise. Explicitly zeroing the noise in the
//! config restores the exact trajectories.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitBall};
use thiserror::Error;

use crate::float;
use crate::geometry::{FrameId, FrameLabel, GeometryError, Pose, TimedTrajectory};
use crate::motion::{finite_difference, MotionError};

/// Default true metric scale for generated scenarios.
pub const DEFAULT_TRUE_SCALE: f64 = 0.43;
/// Default number of synthesized object features.
pub const DEFAULT_FEATURE_COUNT: usize = 50;
/// Default camera field of view in degrees.
pub const DEFAULT_FOV_DEGREES: f64 = 90.0;
/// Default sample rate in Hz.
pub const DEFAULT_RATE_HZ: f64 = 20.0;
/// Default scenario duration in seconds.
pub const DEFAULT_DURATION_S: f64 = 12.0;
/// Radius of the synthetic object point cloud in meters.
pub const CLOUD_RADIUS_M: f64 = 0.3;
/// Frames with fewer visible features than this are flagged.
pub const LOW_VISIBILITY_FLOOR: usize = 8;

/// Seed offset separating the track-synthesis stream from the trajectory
/// stream, so track synthesis is a pure function of the scenario output.
const TRACK_STREAM_SALT: u64 = 0x6665_6174_7572_6573;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(&'static str),
    #[error("camera motion is rank-deficient; cannot orthogonalize against it")]
    DegenerateCameraMotion,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Ba(#[from] crate::ba::BaError),
}

/// Knobs for the smooth random motion processes.
///
/// The default profile keeps the camera excitation in a faster frequency
/// band than the object motion (a hand-guided camera against a driving toy).
/// Spectral separation is what makes the scale identifiable from a finite
/// window: overlapping narrowband motions stay correlated over the whole
/// window and bias the estimate even though the processes are independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionProfile {
    /// Per-axis total camera position amplitude range, meters.
    pub camera_amplitude: (f64, f64),
    /// Camera harmonic frequency band, Hz.
    pub camera_frequency: (f64, f64),
    /// Per-axis total object position amplitude range, meters.
    pub object_amplitude: (f64, f64),
    /// Object harmonic frequency band, Hz.
    pub object_frequency: (f64, f64),
    /// Harmonics per axis.
    pub harmonics: usize,
    /// Distance from the camera region to the object center, meters.
    pub object_distance: f64,
    /// Bound on the object angular velocity, rad/s.
    pub object_angular_rate: f64,
}

impl Default for MotionProfile {
    fn default() -> Self {
        Self {
            camera_amplitude: (0.8, 2.0),
            camera_frequency: (0.55, 1.0),
            object_amplitude: (0.25, 0.8),
            object_frequency: (0.1, 0.45),
            harmonics: 4,
            object_distance: 4.0,
            object_angular_rate: 0.4,
        }
    }
}

/// Scenario family to generate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScenarioKind {
    /// Independent smooth random camera and object motion; scale observable.
    RichMotion,
    /// Camera translation tracks the object translation (plus a constant
    /// offset and a small independent jitter along one direction).
    MimicTranslation,
    /// Camera frozen.
    StaticCamera,
    /// Camera translating at constant velocity with fixed orientation.
    ConstantVelocityCamera,
    /// Object pose locked in the camera frame while both bodies move.
    StaticRelativeObservation,
    /// Rich motion with explicit process knobs.
    Custom(MotionProfile),
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::RichMotion => "rich-motion",
            ScenarioKind::MimicTranslation => "mimic-translation",
            ScenarioKind::StaticCamera => "static-camera",
            ScenarioKind::ConstantVelocityCamera => "constant-velocity-camera",
            ScenarioKind::StaticRelativeObservation => "static-relative-observation",
            ScenarioKind::Custom(_) => "custom",
        }
    }

    fn profile(&self) -> MotionProfile {
        match self {
            ScenarioKind::Custom(profile) => *profile,
            _ => MotionProfile::default(),
        }
    }

    /// Per-scenario default noise. The degenerate camera scenarios carry a
    /// few millimeters of pose random walk by default; see the module docs.
    pub fn default_noise(&self) -> NoiseConfig {
        match self {
            ScenarioKind::StaticCamera | ScenarioKind::ConstantVelocityCamera => {
                NoiseConfig { pose_walk_std: 0.002, observation_std: 0.0 }
            }
            _ => NoiseConfig::default(),
        }
    }
}

/// Noise injected into the generated data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    /// Per-step standard deviation of the random walk added to the measured
    /// camera world position, meters.
    pub pose_walk_std: f64,
    /// Standard deviation of the Gaussian noise added to normalized feature
    /// observations.
    pub observation_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub true_scale: f64,
    /// Duration in seconds.
    pub duration: f64,
    /// Sample rate in Hz.
    pub rate: f64,
    pub noise: NoiseConfig,
    pub seed: u64,
    pub feature_count: usize,
    pub fov_degrees: f64,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            true_scale: DEFAULT_TRUE_SCALE,
            duration: DEFAULT_DURATION_S,
            rate: DEFAULT_RATE_HZ,
            noise: kind.default_noise(),
            seed,
            feature_count: DEFAULT_FEATURE_COUNT,
            fov_degrees: DEFAULT_FOV_DEGREES,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.true_scale > 0.0 && self.true_scale.is_finite()) {
            return Err(SimError::InvalidConfig("true_scale must be positive"));
        }
        if !(self.rate > 0.0 && self.duration > 0.0) {
            return Err(SimError::InvalidConfig("rate and duration must be positive"));
        }
        if self.sample_count() < 4 {
            return Err(SimError::InvalidConfig("scenario too short"));
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees < 180.0) {
            return Err(SimError::InvalidConfig("fov must be in (0, 180) degrees"));
        }
        if self.feature_count == 0 {
            return Err(SimError::InvalidConfig("feature_count must be at least 1"));
        }
        Ok(())
    }

    /// Checks that the scenario produces enough motion samples to fill one
    /// gate window of `sample_capacity` derivatives of the given order.
    pub fn validate_for_gate(&self, sample_capacity: usize, order: usize) -> Result<(), SimError> {
        self.validate()?;
        if self.sample_count() < sample_capacity + order {
            return Err(SimError::InvalidConfig(
                "rate * duration too small for one gate evaluation",
            ));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.rate) as usize + 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::new(ScenarioKind::RichMotion, 0)
    }
}

/// One synthesized feature track: normalized observations on the z=1 plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrack {
    pub id: u64,
    pub observations: Vec<SimObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimObservation {
    pub frame: usize,
    pub point: Vector2<f64>,
}

/// Feature tracks for a whole scenario plus the rigid cloud they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrackSet {
    pub timestamps: Vec<f64>,
    pub tracks: Vec<SimTrack>,
    /// Object-frame positions of the cloud points, meters.
    pub cloud: Vec<Vector3<f64>>,
    /// Frames where fewer than [`LOW_VISIBILITY_FLOOR`] features were visible.
    pub low_visibility_frames: Vec<usize>,
}

/// Everything a scenario produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub config: ScenarioConfig,
    pub camera_world_truth: TimedTrajectory,
    /// Camera trajectory with the configured pose noise applied; equals the
    /// truth when the pose noise is zero. This is what the estimator sees.
    pub camera_world_measured: TimedTrajectory,
    pub object_world_truth: TimedTrajectory,
    /// Up-to-scale object-in-camera trajectory, exact before noise:
    /// `p = (1/s) * R_cw^T * (p_o - p_c)`.
    pub object_camera_upscale: TimedTrajectory,
    pub tracks: FeatureTrackSet,
    pub true_scale: f64,
}

/// Sum of sinusoids, one scalar channel.
#[derive(Debug, Clone)]
struct SinusoidSum {
    terms: Vec<(f64, f64, f64)>, // amplitude, angular frequency, phase
}

impl SinusoidSum {
    /// Draws a broadband sum: the total amplitude is split evenly across
    /// harmonics whose frequencies are stratified over the band, so two
    /// independent draws decorrelate quickly over a gate window.
    fn draw(
        rng: &mut ChaCha8Rng,
        total_amplitude: (f64, f64),
        frequency: (f64, f64),
        harmonics: usize,
    ) -> Self {
        let total = rng.random_range(total_amplitude.0..total_amplitude.1);
        let share = total / harmonics as f64;
        let band = (frequency.1 - frequency.0) / harmonics as f64;
        let terms = (0..harmonics)
            .map(|h| {
                let lo = frequency.0 + band * h as f64;
                let f = rng.random_range(lo..lo + band);
                let phase = rng.random_range(0.0..core::f64::consts::TAU);
                (share, core::f64::consts::TAU * f, phase)
            })
            .collect();
        Self { terms }
    }

    fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|(a, w, p)| a * float::sin(w * t + p)).sum()
    }
}

#[derive(Debug, Clone)]
struct Wiggle {
    axes: [SinusoidSum; 3],
}

impl Wiggle {
    fn draw(
        rng: &mut ChaCha8Rng,
        amplitude: (f64, f64),
        frequency: (f64, f64),
        harmonics: usize,
    ) -> Self {
        Self {
            axes: [
                SinusoidSum::draw(rng, amplitude, frequency, harmonics),
                SinusoidSum::draw(rng, amplitude, frequency, harmonics),
                SinusoidSum::draw(rng, amplitude, frequency, harmonics),
            ],
        }
    }

    fn eval(&self, t: f64) -> Vector3<f64> {
        Vector3::new(self.axes[0].eval(t), self.axes[1].eval(t), self.axes[2].eval(t))
    }

    /// Damps the depth-axis amplitudes so the camera-object separation stays
    /// bounded away from zero.
    fn damp_depth_axis(mut self, factor: f64) -> Self {
        for term in self.axes[2].terms.iter_mut() {
            term.0 *= factor;
        }
        self
    }
}

fn random_unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let v = Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// Rotation taking camera axes to world axes for a camera at `eye` whose
/// optical (+z) axis points at `target`.
fn look_at_rotation(eye: &Vector3<f64>, target: &Vector3<f64>) -> UnitQuaternion<f64> {
    let up = Vector3::new(0.0, 1.0, 0.0);
    let z = (target - eye).normalize();
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Smooth random rotation sequence: integrated bounded angular velocity.
fn integrate_rotations(
    rng: &mut ChaCha8Rng,
    timestamps: &[f64],
    angular_rate: f64,
) -> Vec<UnitQuaternion<f64>> {
    let omega = Wiggle::draw(rng, (0.05, angular_rate / 2.0), (0.1, 0.6), 2);
    let mut rotations = Vec::with_capacity(timestamps.len());
    let mut current = UnitQuaternion::identity();
    rotations.push(current);
    for k in 1..timestamps.len() {
        let dt = timestamps[k] - timestamps[k - 1];
        let step = UnitQuaternion::from_scaled_axis(omega.eval(timestamps[k - 1]) * dt);
        current = UnitQuaternion::new_normalize(current.as_ref() * step.as_ref());
        rotations.push(current);
    }
    rotations
}

struct RawScenario {
    timestamps: Vec<f64>,
    camera_positions: Vec<Vector3<f64>>,
    camera_rotations: Vec<UnitQuaternion<f64>>,
    object_positions: Vec<Vector3<f64>>,
    object_rotations: Vec<UnitQuaternion<f64>>,
}

/// Generates a scenario: ground-truth trajectories, the exact up-to-scale
/// relative observations, the measured (noisy) camera trajectory and the
/// synthetic feature tracks. Deterministic for a fixed config.
pub fn generate(config: &ScenarioConfig) -> Result<ScenarioOutput, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let steps = config.sample_count();
    let dt = config.dt();
    let timestamps: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
    let profile = config.kind.profile();

    let raw = match config.kind {
        ScenarioKind::RichMotion | ScenarioKind::Custom(_) => {
            rich_motion(&mut rng, &timestamps, &profile)
        }
        ScenarioKind::MimicTranslation => mimic_translation(&mut rng, &timestamps, &profile),
        ScenarioKind::StaticCamera => static_camera(&mut rng, &timestamps, &profile),
        ScenarioKind::ConstantVelocityCamera => {
            constant_velocity_camera(&mut rng, &timestamps, &profile)
        }
        ScenarioKind::StaticRelativeObservation => {
            static_relative_observation(&mut rng, &timestamps, &profile)
        }
    };

    let mut output = assemble_output(config, &raw, &mut rng)?;
    output.tracks = synthesize_feature_tracks(&output, config.feature_count, config.fov_degrees)?;
    Ok(output)
}

fn rich_motion(rng: &mut ChaCha8Rng, timestamps: &[f64], profile: &MotionProfile) -> RawScenario {
    let camera_wiggle =
        Wiggle::draw(rng, profile.camera_amplitude, profile.camera_frequency, profile.harmonics)
            .damp_depth_axis(0.5);
    let object_wiggle =
        Wiggle::draw(rng, profile.object_amplitude, profile.object_frequency, profile.harmonics)
            .damp_depth_axis(0.5);
    let object_center = Vector3::new(0.0, 0.0, profile.object_distance);

    let object_positions: Vec<Vector3<f64>> =
        timestamps.iter().map(|t| object_center + object_wiggle.eval(*t)).collect();
    let camera_positions: Vec<Vector3<f64>> =
        timestamps.iter().map(|t| camera_wiggle.eval(*t)).collect();
    let camera_rotations: Vec<UnitQuaternion<f64>> = camera_positions
        .iter()
        .zip(object_positions.iter())
        .map(|(c, o)| look_at_rotation(c, o))
        .collect();
    let object_rotations = integrate_rotations(rng, timestamps, profile.object_angular_rate);

    RawScenario {
        timestamps: timestamps.to_vec(),
        camera_positions,
        camera_rotations,
        object_positions,
        object_rotations,
    }
}

fn mimic_translation(
    rng: &mut ChaCha8Rng,
    timestamps: &[f64],
    profile: &MotionProfile,
) -> RawScenario {
    let object_wiggle =
        Wiggle::draw(rng, profile.object_amplitude, profile.object_frequency, profile.harmonics)
            .damp_depth_axis(0.5);
    let object_center = Vector3::new(0.0, 0.0, profile.object_distance);
    let offset = -object_center;
    // A hand-guided camera never mimics exactly; one-directional jitter is
    // what separates this case from a perfectly locked relative observation.
    let jitter_direction = random_unit_vector(rng);
    let jitter = SinusoidSum::draw(rng, (0.08, 0.16), (0.5, 1.0), 2);

    let object_positions: Vec<Vector3<f64>> =
        timestamps.iter().map(|t| object_center + object_wiggle.eval(*t)).collect();
    let camera_positions: Vec<Vector3<f64>> = timestamps
        .iter()
        .zip(object_positions.iter())
        .map(|(t, o)| o + offset + jitter_direction * jitter.eval(*t))
        .collect();
    let camera_rotations: Vec<UnitQuaternion<f64>> = camera_positions
        .iter()
        .zip(object_positions.iter())
        .map(|(c, o)| look_at_rotation(c, o))
        .collect();
    let object_rotations = integrate_rotations(rng, timestamps, profile.object_angular_rate);

    RawScenario {
        timestamps: timestamps.to_vec(),
        camera_positions,
        camera_rotations,
        object_positions,
        object_rotations,
    }
}

fn static_camera(rng: &mut ChaCha8Rng, timestamps: &[f64], profile: &MotionProfile) -> RawScenario {
    let object_wiggle =
        Wiggle::draw(rng, profile.object_amplitude, profile.object_frequency, profile.harmonics)
            .damp_depth_axis(0.5);
    let object_center = Vector3::new(0.0, 0.0, profile.object_distance);
    let camera_position = Vector3::zeros();
    let camera_rotation = look_at_rotation(&camera_position, &object_center);

    RawScenario {
        timestamps: timestamps.to_vec(),
        camera_positions: vec![camera_position; timestamps.len()],
        camera_rotations: vec![camera_rotation; timestamps.len()],
        object_positions: timestamps
            .iter()
            .map(|t| object_center + object_wiggle.eval(*t))
            .collect(),
        object_rotations: integrate_rotations(rng, timestamps, profile.object_angular_rate),
    }
}

fn constant_velocity_camera(
    rng: &mut ChaCha8Rng,
    timestamps: &[f64],
    profile: &MotionProfile,
) -> RawScenario {
    let object_wiggle =
        Wiggle::draw(rng, profile.object_amplitude, profile.object_frequency, profile.harmonics)
            .damp_depth_axis(0.5);
    let object_center = Vector3::new(0.0, 0.0, profile.object_distance);
    let velocity = random_unit_vector(rng) * 0.25;
    let duration = *timestamps.last().unwrap_or(&0.0);
    // Aim from the path midpoint so the object stays in view.
    let camera_rotation = look_at_rotation(&(velocity * (duration / 2.0)), &object_center);

    RawScenario {
        timestamps: timestamps.to_vec(),
        camera_positions: timestamps.iter().map(|t| velocity * *t).collect(),
        camera_rotations: vec![camera_rotation; timestamps.len()],
        object_positions: timestamps
            .iter()
            .map(|t| object_center + object_wiggle.eval(*t))
            .collect(),
        object_rotations: integrate_rotations(rng, timestamps, profile.object_angular_rate),
    }
}

fn static_relative_observation(
    rng: &mut ChaCha8Rng,
    timestamps: &[f64],
    profile: &MotionProfile,
) -> RawScenario {
    let camera_wiggle =
        Wiggle::draw(rng, profile.camera_amplitude, profile.camera_frequency, profile.harmonics)
            .damp_depth_axis(0.5);
    let camera_rotation = look_at_rotation(
        &Vector3::zeros(),
        &Vector3::new(0.0, 0.0, profile.object_distance),
    );
    // Lock the metric relative pose; the object rides along with the camera.
    let relative_position = Vector3::new(0.0, 0.0, profile.object_distance);
    let relative_rotation = UnitQuaternion::from_scaled_axis(random_unit_vector(rng) * 0.5);

    let camera_positions: Vec<Vector3<f64>> =
        timestamps.iter().map(|t| camera_wiggle.eval(*t)).collect();
    let object_positions: Vec<Vector3<f64>> = camera_positions
        .iter()
        .map(|c| camera_rotation * relative_position + c)
        .collect();
    let object_rotation = camera_rotation * relative_rotation;

    RawScenario {
        timestamps: timestamps.to_vec(),
        camera_positions,
        camera_rotations: vec![camera_rotation; timestamps.len()],
        object_positions,
        object_rotations: vec![object_rotation; timestamps.len()],
    }
}

fn assemble_output(
    config: &ScenarioConfig,
    raw: &RawScenario,
    rng: &mut ChaCha8Rng,
) -> Result<ScenarioOutput, SimError> {
    let scale = config.true_scale;
    let mut camera_world_truth = TimedTrajectory::new(FrameLabel::Camera, FrameLabel::World);
    let mut camera_world_measured = TimedTrajectory::new(FrameLabel::Camera, FrameLabel::World);
    let mut object_world_truth = TimedTrajectory::new(FrameLabel::Object, FrameLabel::World);
    let mut object_camera_upscale = TimedTrajectory::new(FrameLabel::Object, FrameLabel::Camera);

    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut walk = Vector3::zeros();

    for k in 0..raw.timestamps.len() {
        let t = raw.timestamps[k];
        let camera_id = FrameId::camera(k as u64);
        let object_id = FrameId::object(k as u64);
        let r_c = raw.camera_rotations[k];
        let p_c = raw.camera_positions[k];
        let r_o = raw.object_rotations[k];
        let p_o = raw.object_positions[k];

        camera_world_truth.push(t, Pose::new(r_c, p_c, camera_id, FrameId::world()))?;
        object_world_truth.push(t, Pose::new(r_o, p_o, object_id, FrameId::world()))?;

        let relative_rotation = r_c.inverse() * r_o;
        let relative_position = (r_c.inverse() * (p_o - p_c)) / scale;
        object_camera_upscale.push(
            t,
            Pose::new(relative_rotation, relative_position, object_id, camera_id),
        )?;

        if config.noise.pose_walk_std > 0.0 {
            walk += Vector3::new(
                normal.sample(rng) * config.noise.pose_walk_std,
                normal.sample(rng) * config.noise.pose_walk_std,
                normal.sample(rng) * config.noise.pose_walk_std,
            );
        }
        camera_world_measured.push(t, Pose::new(r_c, p_c + walk, camera_id, FrameId::world()))?;
    }

    Ok(ScenarioOutput {
        config: *config,
        camera_world_truth,
        camera_world_measured,
        object_world_truth,
        object_camera_upscale,
        tracks: FeatureTrackSet {
            timestamps: raw.timestamps.clone(),
            tracks: Vec::new(),
            cloud: Vec::new(),
            low_visibility_frames: Vec::new(),
        },
        true_scale: scale,
    })
}

/// Projects a rigid point cloud around the object origin into every camera
/// of the scenario, dropping points outside the field of view or behind the
/// camera, and adds the configured observation noise.
///
/// Pure function of the scenario output: the cloud and the noise stream are
/// derived from the scenario seed.
pub fn synthesize_feature_tracks(
    output: &ScenarioOutput,
    feature_count: usize,
    fov_degrees: f64,
) -> Result<FeatureTrackSet, SimError> {
    if feature_count == 0 {
        return Err(SimError::InvalidConfig("feature_count must be at least 1"));
    }
    if !(fov_degrees > 0.0 && fov_degrees < 180.0) {
        return Err(SimError::InvalidConfig("fov must be in (0, 180) degrees"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(output.config.seed ^ TRACK_STREAM_SALT);
    let cloud: Vec<Vector3<f64>> = (0..feature_count)
        .map(|_| {
            let sample: [f64; 3] = UnitBall.sample(&mut rng);
            Vector3::from(sample) * CLOUD_RADIUS_M
        })
        .collect();

    let tan_half_fov = float::tan(fov_degrees.to_radians() / 2.0);
    let noise_std = output.config.noise.observation_std;
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let scale = output.true_scale;

    let frame_count = output.object_camera_upscale.len();
    let mut tracks: Vec<SimTrack> = (0..feature_count)
        .map(|id| SimTrack { id: id as u64, observations: Vec::with_capacity(frame_count) })
        .collect();
    let mut visible_count = vec![0usize; frame_count];

    for (frame, (_, relative_pose)) in output.object_camera_upscale.iter().enumerate() {
        let rotation = relative_pose.rotation();
        let metric_position = relative_pose.translation() * scale;
        for (id, point) in cloud.iter().enumerate() {
            let in_camera = rotation * point + metric_position;
            if in_camera.z <= 1e-6 {
                continue;
            }
            let radial = float::sqrt(in_camera.x * in_camera.x + in_camera.y * in_camera.y);
            if radial / in_camera.z > tan_half_fov {
                continue;
            }
            let mut u = in_camera.x / in_camera.z;
            let mut v = in_camera.y / in_camera.z;
            if noise_std > 0.0 {
                u += normal.sample(&mut rng) * noise_std;
                v += normal.sample(&mut rng) * noise_std;
            }
            tracks[id].observations.push(SimObservation { frame, point: Vector2::new(u, v) });
            visible_count[frame] += 1;
        }
    }

    let low_visibility_frames = visible_count
        .iter()
        .enumerate()
        .filter_map(|(frame, count)| (*count < LOW_VISIBILITY_FLOOR).then_some(frame))
        .collect();

    Ok(FeatureTrackSet {
        timestamps: output.tracks.timestamps.clone(),
        tracks,
        cloud,
        low_visibility_frames,
    })
}

/// Adjusts the object world trajectory so the sample cross covariance
/// between object and camera motion derivatives is exactly zero, then
/// regenerates the relative observations and feature tracks.
///
/// The object motion samples are Gram-Schmidt-projected against the constant
/// and the camera motion samples, and the projected derivatives are
/// reintegrated into positions. The camera trajectories are untouched.
pub fn orthogonalize_object_motion(
    output: &ScenarioOutput,
    order: usize,
) -> Result<ScenarioOutput, SimError> {
    let camera_positions: Vec<(f64, Vector3<f64>)> = output
        .camera_world_truth
        .iter()
        .map(|(t, pose)| (*t, pose.translation()))
        .collect();
    let object_positions: Vec<(f64, Vector3<f64>)> = output
        .object_world_truth
        .iter()
        .map(|(t, pose)| (*t, pose.translation()))
        .collect();

    let camera_motion = finite_difference(&camera_positions, order)?;
    let object_motion = finite_difference(&object_positions, order)?;
    let n = camera_motion.len();

    // Orthonormal basis of span{1, camera_x, camera_y, camera_z}.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(4);
    let constant = vec![1.0 / float::sqrt(n as f64); n];
    basis.push(constant);
    for axis in 0..3 {
        let mut v: Vec<f64> = camera_motion.iter().map(|(_, m)| m[axis]).collect();
        let original_norm = norm(&v);
        for b in &basis {
            let coefficient = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= coefficient * bi;
            }
        }
        let residual_norm = norm(&v);
        if residual_norm <= 1e-10 * (1.0 + original_norm) {
            return Err(SimError::DegenerateCameraMotion);
        }
        for vi in v.iter_mut() {
            *vi /= residual_norm;
        }
        basis.push(v);
    }

    // Project each object motion axis out of the basis span.
    let mut adjusted = vec![Vector3::zeros(); n];
    for axis in 0..3 {
        let mut v: Vec<f64> = object_motion.iter().map(|(_, m)| m[axis]).collect();
        for b in &basis {
            let coefficient = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= coefficient * bi;
            }
        }
        for (k, vi) in v.iter().enumerate() {
            adjusted[k][axis] = *vi;
        }
    }

    // Reintegrate the adjusted derivatives: exact inverse of the forward
    // difference stencils.
    let dt = (object_positions[object_positions.len() - 1].0 - object_positions[0].0)
        / (object_positions.len() - 1) as f64;
    let mut new_positions: Vec<Vector3<f64>> = object_positions.iter().map(|(_, p)| *p).collect();
    match order {
        1 => {
            for k in 0..n {
                new_positions[k + 1] = new_positions[k] + adjusted[k] * dt;
            }
        }
        2 => {
            let dt2 = dt * dt;
            for k in 0..n {
                new_positions[k + 2] =
                    2.0 * new_positions[k + 1] - new_positions[k] + adjusted[k] * dt2;
            }
        }
        other => return Err(SimError::Motion(MotionError::UnsupportedOrder(other))),
    }

    let mut object_world_truth = TimedTrajectory::new(FrameLabel::Object, FrameLabel::World);
    let mut object_camera_upscale = TimedTrajectory::new(FrameLabel::Object, FrameLabel::Camera);
    let scale = output.true_scale;
    for (k, ((t, old_pose), (_, camera_pose))) in output
        .object_world_truth
        .iter()
        .zip(output.camera_world_truth.iter())
        .enumerate()
    {
        let object_id = FrameId::object(k as u64);
        let camera_id = FrameId::camera(k as u64);
        let rotation = old_pose.rotation();
        object_world_truth
            .push(*t, Pose::new(rotation, new_positions[k], object_id, FrameId::world()))?;
        let relative_rotation = camera_pose.rotation().inverse() * rotation;
        let relative_position =
            (camera_pose.rotation().inverse() * (new_positions[k] - camera_pose.translation()))
                / scale;
        object_camera_upscale.push(
            *t,
            Pose::new(relative_rotation, relative_position, object_id, camera_id),
        )?;
    }

    let mut orthogonalized = ScenarioOutput {
        config: output.config,
        camera_world_truth: output.camera_world_truth.clone(),
        camera_world_measured: output.camera_world_measured.clone(),
        object_world_truth,
        object_camera_upscale,
        tracks: FeatureTrackSet {
            timestamps: output.tracks.timestamps.clone(),
            tracks: Vec::new(),
            cloud: Vec::new(),
            low_visibility_frames: Vec::new(),
        },
        true_scale: scale,
    };
    orthogonalized.tracks = synthesize_feature_tracks(
        &orthogonalized,
        output.config.feature_count,
        output.config.fov_degrees,
    )?;
    Ok(orthogonalized)
}

/// Builds a bundle-adjustment window from a span of scenario frames with
/// every state and inverse depth set to the simulation truth (in metric
/// units; the window's intrinsic gauge is the meter until an object-frame
/// initialization renormalizes it).
///
/// Features observed fewer than twice inside the span are skipped.
pub fn truth_window(
    output: &ScenarioOutput,
    start_frame: usize,
    frame_count: usize,
    capacity: usize,
) -> Result<crate::ba::SlidingWindow, SimError> {
    if start_frame + frame_count > output.object_camera_upscale.len() {
        return Err(SimError::InvalidConfig("frame span exceeds the scenario length"));
    }
    let mut window = crate::ba::SlidingWindow::new(capacity.max(frame_count));
    let scale = output.true_scale;

    for local in 0..frame_count {
        let frame = start_frame + local;
        let (timestamp, relative) = &output.object_camera_upscale.samples()[frame];
        // Camera-in-object is the inverse of the metric object-in-camera.
        let rotation = relative.rotation().inverse();
        let translation = -(rotation * (relative.translation() * scale));
        let pose = Pose::new(
            rotation,
            translation,
            FrameId::camera(frame as u64),
            FrameId::object(0),
        );
        window.push_state(frame as u64, *timestamp, pose)?;
    }

    for track in &output.tracks.tracks {
        let local_observations: Vec<crate::ba::Observation> = track
            .observations
            .iter()
            .filter(|obs| obs.frame >= start_frame && obs.frame < start_frame + frame_count)
            .map(|obs| crate::ba::Observation { frame: obs.frame - start_frame, point: obs.point })
            .collect();
        if local_observations.len() < 2 {
            continue;
        }
        let anchor_local = local_observations[0].frame;
        let anchor_global = start_frame + anchor_local;
        let relative = &output.object_camera_upscale.samples()[anchor_global].1;
        let point = &output.tracks.cloud[track.id as usize];
        let depth = (relative.rotation() * point + relative.translation() * scale).z;
        if depth <= 1e-6 {
            continue;
        }
        window.add_feature(crate::ba::FeatureTrack {
            id: track.id,
            anchor_frame: anchor_local,
            observations: local_observations,
            inverse_depth: 1.0 / depth,
        })?;
    }
    Ok(window)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    float::sqrt(dot(a, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::build_samples;
    use crate::scale::sample_covariance;
    use approx::assert_abs_diff_eq;

    #[test]
    fn generation_is_deterministic() {
        let config =
            ScenarioConfig { duration: 3.0, ..ScenarioConfig::new(ScenarioKind::RichMotion, 42) };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compound_motion_identity_holds() {
        for kind in [
            ScenarioKind::RichMotion,
            ScenarioKind::MimicTranslation,
            ScenarioKind::StaticCamera,
            ScenarioKind::ConstantVelocityCamera,
            ScenarioKind::StaticRelativeObservation,
        ] {
            let config = ScenarioConfig { duration: 2.0, ..ScenarioConfig::new(kind, 7) };
            let output = generate(&config).unwrap();
            for (((_, camera), (_, object)), (_, relative)) in output
                .camera_world_truth
                .iter()
                .zip(output.object_world_truth.iter())
                .zip(output.object_camera_upscale.iter())
            {
                let reconstructed = output.true_scale
                    * (camera.rotation() * relative.translation())
                    + camera.translation();
                assert_abs_diff_eq!(reconstructed, object.translation(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn static_camera_truth_is_exactly_constant() {
        let mut config = ScenarioConfig::new(ScenarioKind::StaticCamera, 3);
        config.duration = 2.0;
        config.noise = NoiseConfig::default();
        let output = generate(&config).unwrap();
        let first = output.camera_world_truth.samples()[0].1.translation();
        for (_, pose) in output.camera_world_truth.iter() {
            assert_eq!(pose.translation(), first);
        }
        let positions: Vec<(f64, Vector3<f64>)> = output
            .camera_world_truth
            .iter()
            .map(|(t, p)| (*t, p.translation()))
            .collect();
        for (_, v) in finite_difference(&positions, 1).unwrap() {
            assert_eq!(v, Vector3::zeros());
        }
    }

    #[test]
    fn constant_velocity_camera_has_zero_velocity_variance() {
        let mut config = ScenarioConfig::new(ScenarioKind::ConstantVelocityCamera, 4);
        config.duration = 3.0;
        config.noise = NoiseConfig::default();
        let output = generate(&config).unwrap();
        let positions: Vec<(f64, Vector3<f64>)> = output
            .camera_world_truth
            .iter()
            .map(|(t, p)| (*t, p.translation()))
            .collect();
        let velocity = finite_difference(&positions, 1).unwrap();
        let values: Vec<Vector3<f64>> = velocity.iter().map(|(_, v)| *v).collect();
        let cov = sample_covariance(&values, &values).unwrap();
        for entry in cov.iter() {
            assert!(entry.abs() < 1e-12);
        }
    }

    #[test]
    fn static_relative_observation_is_constant() {
        let config = ScenarioConfig {
            duration: 2.0,
            ..ScenarioConfig::new(ScenarioKind::StaticRelativeObservation, 5)
        };
        let output = generate(&config).unwrap();
        let first = output.object_camera_upscale.samples()[0].1.translation();
        for (_, pose) in output.object_camera_upscale.iter() {
            assert_abs_diff_eq!(pose.translation(), first, epsilon = 1e-12);
        }
    }

    #[test]
    fn mimic_translation_keeps_offset_plus_jitter_small() {
        let config = ScenarioConfig {
            duration: 2.0,
            ..ScenarioConfig::new(ScenarioKind::MimicTranslation, 6)
        };
        let output = generate(&config).unwrap();
        for ((_, camera), (_, object)) in output
            .camera_world_truth
            .iter()
            .zip(output.object_world_truth.iter())
        {
            let gap = (object.translation() - camera.translation()).norm();
            assert!((gap - 4.0).abs() < 1.0, "relative distance wandered: {gap}");
        }
    }

    #[test]
    fn look_at_projects_object_center_to_origin() {
        let config =
            ScenarioConfig { duration: 2.0, ..ScenarioConfig::new(ScenarioKind::RichMotion, 8) };
        let output = generate(&config).unwrap();
        for (_, relative) in output.object_camera_upscale.iter() {
            let metric = relative.translation() * output.true_scale;
            assert!(metric.z > 0.5);
            let u = metric.x / metric.z;
            let v = metric.y / metric.z;
            assert!(u.abs() < 1e-9 && v.abs() < 1e-9, "object center off axis: ({u}, {v})");
        }
    }

    #[test]
    fn tracks_are_visible_and_reasonably_dense() {
        let config =
            ScenarioConfig { duration: 2.0, ..ScenarioConfig::new(ScenarioKind::RichMotion, 9) };
        let output = generate(&config).unwrap();
        assert_eq!(output.tracks.tracks.len(), DEFAULT_FEATURE_COUNT);
        assert!(output.tracks.low_visibility_frames.is_empty());
        let total: usize = output.tracks.tracks.iter().map(|t| t.observations.len()).sum();
        let frames = output.object_camera_upscale.len();
        assert!(total >= frames * DEFAULT_FEATURE_COUNT * 9 / 10);
    }

    #[test]
    fn orthogonalized_cross_covariance_is_zero_and_camera_untouched() {
        let config =
            ScenarioConfig { duration: 6.0, ..ScenarioConfig::new(ScenarioKind::RichMotion, 10) };
        let output = generate(&config).unwrap();
        let orthogonal = orthogonalize_object_motion(&output, 1).unwrap();

        assert_eq!(orthogonal.camera_world_truth, output.camera_world_truth);
        assert_eq!(orthogonal.camera_world_measured, output.camera_world_measured);

        let samples = build_samples(
            &orthogonal.camera_world_truth,
            &orthogonal.object_camera_upscale,
            1,
            Some(&orthogonal.object_world_truth),
        )
        .unwrap();
        let object: Vec<Vector3<f64>> = samples.iter().map(|s| s.object_truth.unwrap()).collect();
        let camera: Vec<Vector3<f64>> = samples.iter().map(|s| s.camera).collect();
        let cov = sample_covariance(&object, &camera).unwrap();
        for entry in cov.iter() {
            assert!(entry.abs() < 1e-10, "cross covariance entry {entry}");
        }
    }

    #[test]
    fn orthogonalize_rejects_degenerate_camera() {
        let mut config = ScenarioConfig::new(ScenarioKind::StaticCamera, 11);
        config.duration = 2.0;
        config.noise = NoiseConfig::default();
        let output = generate(&config).unwrap();
        assert!(matches!(
            orthogonalize_object_motion(&output, 1),
            Err(SimError::DegenerateCameraMotion)
        ));
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut config = ScenarioConfig::new(ScenarioKind::RichMotion, 0);
        config.true_scale = 0.0;
        assert!(config.validate().is_err());
        let mut config = ScenarioConfig::new(ScenarioKind::RichMotion, 0);
        config.duration = 0.01;
        assert!(config.validate().is_err());
        let config =
            ScenarioConfig { duration: 1.0, ..ScenarioConfig::new(ScenarioKind::RichMotion, 0) };
        assert!(config.validate_for_gate(200, 1).is_err());
        assert!(ScenarioConfig::new(ScenarioKind::RichMotion, 0)
            .validate_for_gate(200, 1)
            .is_ok());
    }
}
