//! Closed-form metric scale estimation with an observability gate.
//!
//! An object trajectory reconstructed at the wrong scale stays correlated
//! with the camera motion. Measuring that correlation as the sum of squared
//! entries of the cross covariance between the reconstructed object motion
//! and the camera motion gives an objective that is quadratic in the
//! candidate scale, so the minimizer is available in closed form from two
//! 3x3 sample covariances.
//!
//! The estimate is only trustworthy when three subconditions hold:
//!
//! 1. the residual correlation at the optimum is small,
//! 2. the camera motion carries enough covariance energy,
//! 3. the cross covariance between relative and camera motion carries enough
//!    energy for the closed form to be numerically stable.
//!
//! The gate checks them in the order III, II, I so numerical-stability
//! failures short-circuit before the objective value is trusted.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::motion::SampleWindow;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleError {
    #[error("need at least 2 samples for a covariance, got {0}")]
    TooFewSamples(usize),
    #[error("sample lists have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cross-covariance energy is zero; closed-form scale is undefined")]
    ZeroDenominator,
    #[error("error-ratio denominator is zero; motion pair is degenerate")]
    DegenerateDiagnostic,
    #[error("sample window not full: {have} of {need}")]
    WindowNotFull { have: usize, need: usize },
    #[error("gate thresholds must be strictly positive")]
    InvalidThresholds,
}

/// Observability gate thresholds.
///
/// `epsilon_t1` bounds the residual correlation energy at the optimum
/// *relative to the camera covariance energy* (the units of the two match,
/// so the ratio is dimensionless). `rho_t1` and `rho_t2` are absolute floors
/// on the camera covariance energy and the cross-covariance energy.
///
/// The defaults were calibrated on the built-in simulator so that rich
/// independent motion passes while the four degenerate scenarios fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateThresholds {
    pub epsilon_t1: f64,
    pub rho_t1: f64,
    pub rho_t2: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self { epsilon_t1: 0.05, rho_t1: 2e-3, rho_t2: 1e-9 }
    }
}

impl GateThresholds {
    pub fn validate(&self) -> Result<(), ScaleError> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if ok(self.epsilon_t1) && ok(self.rho_t1) && ok(self.rho_t2) {
            Ok(())
        } else {
            Err(ScaleError::InvalidThresholds)
        }
    }
}

/// Gate outcome. A rejection names the first failed subcondition in the
/// check order III -> II -> I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accepted,
    /// Residual correlation at the optimum too large (subcondition I).
    RejectedI,
    /// Camera motion covariance energy too small (subcondition II).
    RejectedII,
    /// Cross-covariance energy too small for a stable closed form (III).
    RejectedIII,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accepted => write!(f, "accepted"),
            Verdict::RejectedI => write!(f, "rejected-i"),
            Verdict::RejectedII => write!(f, "rejected-ii"),
            Verdict::RejectedIII => write!(f, "rejected-iii"),
        }
    }
}

/// One of the three gate subconditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subcondition {
    /// I: residual correlation of the reconstructed object motion.
    ResidualCorrelation,
    /// II: camera-motion covariance energy.
    CameraExcitation,
    /// III: cross-covariance energy (numerical stability).
    CrossCovariance,
}

/// Set of subconditions that failed during one gate evaluation.
///
/// The verdict reports only the first failure in check order; this set keeps
/// every failing subcondition for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SubconditionSet {
    residual_correlation: bool,
    camera_excitation: bool,
    cross_covariance: bool,
}

impl SubconditionSet {
    pub fn contains(&self, subcondition: Subcondition) -> bool {
        match subcondition {
            Subcondition::ResidualCorrelation => self.residual_correlation,
            Subcondition::CameraExcitation => self.camera_excitation,
            Subcondition::CrossCovariance => self.cross_covariance,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.residual_correlation || self.camera_excitation || self.cross_covariance)
    }

    pub fn iter(&self) -> impl Iterator<Item = Subcondition> + '_ {
        [
            (self.cross_covariance, Subcondition::CrossCovariance),
            (self.camera_excitation, Subcondition::CameraExcitation),
            (self.residual_correlation, Subcondition::ResidualCorrelation),
        ]
        .into_iter()
        .filter_map(|(failed, s)| failed.then_some(s))
    }
}

/// The sample covariances one gate evaluation was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSet {
    /// Cov(relative motion, camera motion).
    pub relative_camera: Matrix3<f64>,
    /// Cov(camera motion, camera motion).
    pub camera_camera: Matrix3<f64>,
    /// Cov(reconstructed object motion at the estimate, camera motion).
    pub reconstructed_camera: Matrix3<f64>,
    /// Number of samples the covariances were estimated from.
    pub sample_count: usize,
}

/// Closed-form scale estimate with gate verdict and per-subcondition
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEstimate {
    /// The closed-form scale. NaN when the cross-covariance energy is exactly
    /// zero (the verdict is then `RejectedIII`).
    pub scale: f64,
    /// Objective value at the optimum (quadratic form), >= 0.
    pub objective_at_optimum: f64,
    /// Subcondition I statistic: residual correlation energy at the estimate.
    pub residual_energy: f64,
    /// Subcondition II statistic: sum of squared camera covariance entries.
    pub camera_energy: f64,
    /// Subcondition III statistic: sum of squared cross-covariance entries.
    pub cross_energy: f64,
    pub verdict: Verdict,
    pub failed_subconditions: SubconditionSet,
    pub covariances: CovarianceSet,
}

impl ScaleEstimate {
    /// Quality ratio used to pick the best of several accepted estimates;
    /// smaller is better.
    pub fn quality_ratio(&self) -> f64 {
        self.objective_at_optimum / self.cross_energy
    }
}

/// Keeps the most trustworthy accepted estimate seen so far, ranked by
/// [`ScaleEstimate::quality_ratio`].
#[derive(Debug, Clone, Default)]
pub struct ScaleFuser {
    best: Option<ScaleEstimate>,
    accepted: usize,
    offered: usize,
}

impl ScaleFuser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Offers an estimate; non-accepted estimates only bump the counter.
    pub fn offer(&mut self, estimate: &ScaleEstimate) {
        self.offered += 1;
        if estimate.verdict != Verdict::Accepted {
            return;
        }
        self.accepted += 1;
        let better = match &self.best {
            Some(best) => estimate.quality_ratio() < best.quality_ratio(),
            None => true,
        };
        if better {
            self.best = Some(estimate.clone());
        }
    }

    pub fn best(&self) -> Option<&ScaleEstimate> {
        self.best.as_ref()
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted
    }

    pub fn offered_count(&self) -> usize {
        self.offered
    }
}

/// Unbiased 3x3 sample cross covariance `(1/(n-1)) * sum (x - x̄)(y - ȳ)ᵀ`.
pub fn sample_covariance(
    xs: &[Vector3<f64>],
    ys: &[Vector3<f64>],
) -> Result<Matrix3<f64>, ScaleError> {
    if xs.len() != ys.len() {
        return Err(ScaleError::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    let n = xs.len();
    if n < 2 {
        return Err(ScaleError::TooFewSamples(n));
    }
    let inv_n = 1.0 / n as f64;
    let x_mean: Vector3<f64> = xs.iter().sum::<Vector3<f64>>() * inv_n;
    let y_mean: Vector3<f64> = ys.iter().sum::<Vector3<f64>>() * inv_n;
    let mut acc = Matrix3::zeros();
    for (x, y) in xs.iter().zip(ys.iter()) {
        acc += (x - x_mean) * (y - y_mean).transpose();
    }
    Ok(acc / (n - 1) as f64)
}

fn frobenius_inner(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn frobenius_sq(a: &Matrix3<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// The correlation objective at a candidate scale: the sum of squared
/// entries of `scale * Cov(relative, camera) + Cov(camera, camera)`, i.e.
/// the squared cross-covariance energy of the reconstructed object motion.
pub fn objective(
    cov_relative_camera: &Matrix3<f64>,
    cov_camera_camera: &Matrix3<f64>,
    scale: f64,
) -> f64 {
    let mut total = 0.0;
    for (dc, cc) in cov_relative_camera.iter().zip(cov_camera_camera.iter()) {
        let term = scale * dc + cc;
        total += term * term;
    }
    total
}

/// Minimizer of [`objective`] in closed form:
/// `-<Cov_dc, Cov_cc> / <Cov_dc, Cov_dc>` (Frobenius inner products).
///
/// Errors when the denominator is exactly zero; the gate maps that case to a
/// subcondition III rejection before the value is ever trusted.
pub fn closed_form_scale(
    cov_relative_camera: &Matrix3<f64>,
    cov_camera_camera: &Matrix3<f64>,
) -> Result<f64, ScaleError> {
    let denominator = frobenius_sq(cov_relative_camera);
    if denominator == 0.0 {
        return Err(ScaleError::ZeroDenominator);
    }
    Ok(-frobenius_inner(cov_relative_camera, cov_camera_camera) / denominator)
}

/// Runs the closed-form estimator and the three-part observability gate on a
/// full sample window.
///
/// Subconditions are checked in the order III (cross-covariance energy), II
/// (camera excitation), I (residual correlation at the optimum); the verdict
/// names the first failure while `failed_subconditions` records every one
/// that failed. Condition I is evaluated against the covariance of the
/// reconstructed object motion computed at the sample level.
pub fn evaluate_gate(
    window: &SampleWindow,
    thresholds: &GateThresholds,
) -> Result<ScaleEstimate, ScaleError> {
    thresholds.validate()?;
    if !window.is_full() {
        return Err(ScaleError::WindowNotFull { have: window.len(), need: window.capacity() });
    }

    let relative: Vec<Vector3<f64>> = window.iter().map(|s| s.relative).collect();
    let camera: Vec<Vector3<f64>> = window.iter().map(|s| s.camera).collect();
    let cov_dc = sample_covariance(&relative, &camera)?;
    let cov_cc = sample_covariance(&camera, &camera)?;

    let cross_energy = frobenius_sq(&cov_dc);
    let camera_energy = frobenius_sq(&cov_cc);

    let scale = match closed_form_scale(&cov_dc, &cov_cc) {
        Ok(s) => s,
        Err(ScaleError::ZeroDenominator) => f64::NAN,
        Err(other) => return Err(other),
    };

    // Condition I uses the reconstructed object motion at the estimate,
    // evaluated at the sample level.
    let (cov_oc_hat, residual_energy) = if scale.is_finite() {
        let reconstructed: Vec<Vector3<f64>> =
            window.iter().map(|s| s.reconstructed(scale)).collect();
        let cov = sample_covariance(&reconstructed, &camera)?;
        let energy = frobenius_sq(&cov);
        (cov, energy)
    } else {
        (Matrix3::zeros(), f64::INFINITY)
    };

    let objective_at_optimum =
        if scale.is_finite() { objective(&cov_dc, &cov_cc, scale) } else { camera_energy };

    let failed = SubconditionSet {
        cross_covariance: !(cross_energy >= thresholds.rho_t2),
        camera_excitation: !(camera_energy >= thresholds.rho_t1),
        residual_correlation: !(residual_energy <= thresholds.epsilon_t1 * camera_energy),
    };
    let verdict = if failed.cross_covariance {
        Verdict::RejectedIII
    } else if failed.camera_excitation {
        Verdict::RejectedII
    } else if failed.residual_correlation {
        Verdict::RejectedI
    } else {
        Verdict::Accepted
    };

    Ok(ScaleEstimate {
        scale,
        objective_at_optimum,
        residual_energy,
        camera_energy,
        cross_energy,
        verdict,
        failed_subconditions: failed,
        covariances: CovarianceSet {
            relative_camera: cov_dc,
            camera_camera: cov_cc,
            reconstructed_camera: cov_oc_hat,
            sample_count: window.len(),
        },
    })
}

/// Relative scale error predicted from ground-truth object motion
/// (simulation only):
/// `sum oc*(cc - oc) / sum (cc - oc)^2` over covariance entries, where
/// `oc = Cov(object, camera)` and `cc = Cov(camera, camera)`.
pub fn error_ratio_diagnostic(
    cov_object_camera_truth: &Matrix3<f64>,
    cov_camera_camera: &Matrix3<f64>,
) -> Result<f64, ScaleError> {
    let difference = cov_camera_camera - cov_object_camera_truth;
    let denominator = frobenius_sq(&difference);
    if denominator == 0.0 {
        return Err(ScaleError::DegenerateDiagnostic);
    }
    Ok(frobenius_inner(cov_object_camera_truth, &difference) / denominator)
}
