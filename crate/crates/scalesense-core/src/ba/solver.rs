//! Gauss-Newton solver with Levenberg damping for the window cost.
//!
//! The parameter vector stacks a 6-dof local perturbation per free pose
//! (rotation as an axis-angle tangent update applied on the right, additive
//! translation) followed by one inverse depth per active feature. The first
//! window pose is held constant; together with the mean-anchor-depth
//! normalization established at object-frame initialization this pins the
//! full similarity gauge. The solver additionally rescales its result so the
//! mean anchor depth it returns equals the one it received, removing the
//! numerically flat gauge direction a finite iteration can drift along.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, UnitQuaternion, Vector2, Vector3};

use super::{
    BaError, BaReport, FeatureTrack, SlidingWindow, MAX_INVERSE_DEPTH, MIN_INVERSE_DEPTH,
    MIN_TARGET_DEPTH,
};
use crate::geometry::Pose;

/// Initial Levenberg damping.
const LAMBDA_INIT: f64 = 1e-4;
/// Damping multiplier on rejection / divisor on acceptance.
const LAMBDA_STEP: f64 = 10.0;
const LAMBDA_MIN: f64 = 1e-9;
/// Escalation ceiling; beyond this the system is declared singular/stalled.
const LAMBDA_MAX: f64 = 1e10;
/// Costs below this are treated as an exact fixed point.
const COST_FLOOR: f64 = 1e-22;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

struct ResidualEval {
    value: Vector2<f64>,
    valid: bool,
    /// d residual / d target pose tangent [rotation | translation].
    d_target: [Matrix2x3<f64>; 2],
    /// d residual / d anchor pose tangent [rotation | translation].
    d_anchor: [Matrix2x3<f64>; 2],
    d_inverse_depth: Vector2<f64>,
}

fn evaluate_residual(
    anchor_pose: &Pose,
    target_pose: &Pose,
    feature: &FeatureTrack,
    observed: &Vector2<f64>,
    with_jacobians: bool,
) -> ResidualEval {
    let anchor_rotation = anchor_pose.rotation_matrix();
    let target_rotation_inv = target_pose.rotation_matrix().transpose();

    let point_anchor = feature.point_in_anchor_camera();
    let point_object = anchor_rotation * point_anchor + anchor_pose.translation();
    let point_target = target_rotation_inv * (point_object - target_pose.translation());

    let valid = point_target.z > MIN_TARGET_DEPTH;
    let z = if valid { point_target.z } else { 1.0 };
    let predicted = Vector2::new(point_target.x / z, point_target.y / z);
    let value = predicted - observed;

    if !with_jacobians || !valid {
        return ResidualEval {
            value,
            valid,
            d_target: [Matrix2x3::zeros(); 2],
            d_anchor: [Matrix2x3::zeros(); 2],
            d_inverse_depth: Vector2::zeros(),
        };
    }

    // Projection derivative at the target point.
    let inv_z = 1.0 / point_target.z;
    let projection = Matrix2x3::new(
        inv_z,
        0.0,
        -point_target.x * inv_z * inv_z,
        0.0,
        inv_z,
        -point_target.y * inv_z * inv_z,
    );
    let projection_in_object = projection * target_rotation_inv;

    let d_target_rotation = projection * skew(&point_target);
    let d_target_translation = -projection_in_object;
    let d_anchor_rotation = -projection_in_object * anchor_rotation * skew(&point_anchor);
    let d_anchor_translation = projection_in_object;
    // d point_anchor / d mu = -point_anchor / mu.
    let d_inverse_depth =
        projection_in_object * anchor_rotation * (-point_anchor / feature.inverse_depth);

    ResidualEval {
        value,
        valid,
        d_target: [d_target_rotation, d_target_translation],
        d_anchor: [d_anchor_rotation, d_anchor_translation],
        d_inverse_depth,
    }
}

/// Reprojection residual of one feature in one target frame: predicted
/// normalized coordinates minus the observed ones.
///
/// Returns `Ok(None)` when the point falls at or behind the target camera's
/// minimum depth; such residuals are excluded from the normal equations.
pub fn reprojection_residual(
    window: &SlidingWindow,
    feature_id: u64,
    target_frame: usize,
) -> Result<Option<Vector2<f64>>, BaError> {
    let feature = window.feature(feature_id).ok_or(BaError::UnknownFeature(feature_id))?;
    if target_frame >= window.len() {
        return Err(BaError::FrameOutOfRange { frame: target_frame, len: window.len() });
    }
    let observed = feature
        .observation_in(target_frame)
        .ok_or(BaError::NotObserved { feature: feature_id, frame: target_frame })?;
    if target_frame == feature.anchor_frame {
        // The anchor ray is defined by this observation; the residual is
        // zero by construction.
        return Ok(Some(Vector2::zeros()));
    }
    let eval = evaluate_residual(
        &window.states()[feature.anchor_frame].pose,
        &window.states()[target_frame].pose,
        feature,
        &observed.point,
        false,
    );
    Ok(eval.valid.then_some(eval.value))
}

/// Sum of squared valid residuals plus the number of residuals excluded for
/// falling behind a camera.
pub(super) fn evaluate_cost(window: &SlidingWindow) -> (f64, usize) {
    let mut cost = 0.0;
    let mut invalid = 0usize;
    for feature in window.features().iter().filter(|f| f.is_active()) {
        let anchor_pose = &window.states()[feature.anchor_frame].pose;
        for obs in &feature.observations {
            if obs.frame == feature.anchor_frame {
                continue;
            }
            let eval = evaluate_residual(
                anchor_pose,
                &window.states()[obs.frame].pose,
                feature,
                &obs.point,
                false,
            );
            if eval.valid {
                cost += eval.value.norm_squared();
            } else {
                invalid += 1;
            }
        }
    }
    (cost, invalid)
}

/// Column layout of the parameter vector.
struct Layout {
    free_poses: usize,
    /// Indices into `window.features()` of the active features, in order.
    active_features: Vec<usize>,
}

impl Layout {
    fn new(window: &SlidingWindow) -> Self {
        Self {
            free_poses: window.len().saturating_sub(1),
            active_features: window
                .features()
                .iter()
                .enumerate()
                .filter_map(|(i, f)| f.is_active().then_some(i))
                .collect(),
        }
    }

    fn dimension(&self) -> usize {
        6 * self.free_poses + self.active_features.len()
    }

    /// Column of the first parameter of pose `frame`, or None if fixed.
    fn pose_column(&self, frame: usize) -> Option<usize> {
        (frame > 0).then(|| 6 * (frame - 1))
    }

    fn feature_column(&self, active_index: usize) -> usize {
        6 * self.free_poses + active_index
    }
}

/// Accumulates the normal equations in deterministic order.
fn assemble(
    window: &SlidingWindow,
    layout: &Layout,
) -> (DMatrix<f64>, DVector<f64>, f64, usize) {
    let dim = layout.dimension();
    let mut hessian = DMatrix::zeros(dim, dim);
    let mut gradient = DVector::zeros(dim);
    let mut cost = 0.0;
    let mut invalid = 0usize;

    // Scratch: flattened jacobian row block as (column, 2-vector) pairs.
    let mut columns: Vec<(usize, Vector2<f64>)> = Vec::with_capacity(13);

    for (active_index, &feature_index) in layout.active_features.iter().enumerate() {
        let feature = &window.features()[feature_index];
        let anchor_frame = feature.anchor_frame;
        let anchor_pose = &window.states()[anchor_frame].pose;
        for obs in &feature.observations {
            if obs.frame == anchor_frame {
                continue;
            }
            let eval = evaluate_residual(
                anchor_pose,
                &window.states()[obs.frame].pose,
                feature,
                &obs.point,
                true,
            );
            if !eval.valid {
                invalid += 1;
                continue;
            }
            cost += eval.value.norm_squared();

            columns.clear();
            if let Some(base) = layout.pose_column(obs.frame) {
                for axis in 0..3 {
                    columns.push((base + axis, eval.d_target[0].column(axis).into()));
                    columns.push((base + 3 + axis, eval.d_target[1].column(axis).into()));
                }
            }
            if let Some(base) = layout.pose_column(anchor_frame) {
                for axis in 0..3 {
                    columns.push((base + axis, eval.d_anchor[0].column(axis).into()));
                    columns.push((base + 3 + axis, eval.d_anchor[1].column(axis).into()));
                }
            }
            columns.push((layout.feature_column(active_index), eval.d_inverse_depth));

            for (col_i, jac_i) in &columns {
                gradient[*col_i] += jac_i.dot(&eval.value);
                for (col_j, jac_j) in &columns {
                    hessian[(*col_i, *col_j)] += jac_i.dot(jac_j);
                }
            }
        }
    }
    (hessian, gradient, cost, invalid)
}

/// Applies a parameter step to a copy of the window. Returns the candidate
/// and whether any inverse depth had to be clamped (a clamped step counts as
/// rejected for damping purposes).
fn apply_step(window: &SlidingWindow, layout: &Layout, step: &DVector<f64>) -> (SlidingWindow, bool) {
    let mut candidate = window.clone();
    for frame in 1..window.len() {
        let base = 6 * (frame - 1);
        let rotation_step = Vector3::new(step[base], step[base + 1], step[base + 2]);
        let translation_step = Vector3::new(step[base + 3], step[base + 4], step[base + 5]);
        let pose = candidate.state_pose_mut(frame);
        let rotation = UnitQuaternion::new_normalize(
            pose.rotation().as_ref() * UnitQuaternion::from_scaled_axis(rotation_step).as_ref(),
        );
        *pose = Pose::new(
            rotation,
            pose.translation() + translation_step,
            pose.from_frame(),
            pose.to_frame(),
        );
    }
    let mut clamped = false;
    for (active_index, &feature_index) in layout.active_features.iter().enumerate() {
        let column = layout.feature_column(active_index);
        let feature = candidate.feature_mut(feature_index);
        let updated = feature.inverse_depth + step[column];
        let bounded = updated.clamp(MIN_INVERSE_DEPTH, MAX_INVERSE_DEPTH);
        if bounded != updated {
            clamped = true;
        }
        feature.inverse_depth = bounded;
    }
    (candidate, clamped)
}

/// Rescales the window about the (fixed) first camera center so the mean
/// anchor depth equals `target`. This is a motion along the scale gauge
/// orbit: reprojection residuals are unchanged.
fn renormalize_gauge(window: &mut SlidingWindow, target: f64) {
    let Some(current) = window.mean_anchor_depth() else { return };
    if current <= 0.0 || !current.is_finite() {
        return;
    }
    let sigma = target / current;
    if (sigma - 1.0).abs() < 1e-15 {
        return;
    }
    let first_center = window.states()[0].pose.translation();
    for frame in 1..window.len() {
        let pose = window.state_pose_mut(frame);
        let translation = first_center + sigma * (pose.translation() - first_center);
        *pose = Pose::new(pose.rotation(), translation, pose.from_frame(), pose.to_frame());
    }
    for index in 0..window.features().len() {
        let feature = window.feature_mut(index);
        feature.inverse_depth /= sigma;
    }
}

/// Optimizes the window in place with Gauss-Newton plus Levenberg damping.
///
/// The first pose is held constant. Stops when the relative cost decrease
/// drops below `tolerance` or after `max_iterations`. Residuals that fall
/// behind a camera are excluded from the normal equations for that
/// iteration. A step that drives an inverse depth outside its clamp range is
/// rejected and the damping raised.
pub fn optimize_window(
    window: &mut SlidingWindow,
    max_iterations: usize,
    tolerance: f64,
) -> Result<BaReport, BaError> {
    if window.is_empty() {
        return Err(BaError::TooFewStates { have: 0, need: 1 });
    }
    let entering_depth = window.mean_anchor_depth();
    let layout = Layout::new(window);
    let (initial_cost, _) = evaluate_cost(window);

    if layout.dimension() == 0 || initial_cost <= COST_FLOOR {
        return Ok(BaReport {
            iterations: 0,
            initial_cost,
            final_cost: initial_cost,
            converged: true,
        });
    }

    let mut lambda = LAMBDA_INIT;
    let mut current_cost = initial_cost;
    let mut converged = false;
    let mut iterations = 0usize;

    'outer: for iteration in 1..=max_iterations {
        iterations = iteration;
        let (hessian, gradient, _, _) = assemble(window, &layout);
        loop {
            let mut damped = hessian.clone();
            for d in 0..damped.nrows() {
                damped[(d, d)] += lambda;
            }
            let Some(cholesky) = damped.cholesky() else {
                lambda *= LAMBDA_STEP;
                if lambda > LAMBDA_MAX {
                    let diag = hessian.diagonal();
                    return Err(BaError::SingularNormalEquations {
                        lambda,
                        min_diag: diag.min(),
                        max_diag: diag.max(),
                        size: hessian.nrows(),
                    });
                }
                continue;
            };
            let step = cholesky.solve(&(-&gradient));
            let (candidate, clamped) = apply_step(window, &layout, &step);
            let (candidate_cost, _) = evaluate_cost(&candidate);

            if !clamped && candidate_cost <= current_cost {
                *window = candidate;
                let decrease = (current_cost - candidate_cost) / current_cost.max(f64::MIN_POSITIVE);
                current_cost = candidate_cost;
                lambda = (lambda / LAMBDA_STEP).max(LAMBDA_MIN);
                if decrease < tolerance || current_cost <= COST_FLOOR {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= LAMBDA_STEP;
            if lambda > LAMBDA_MAX {
                // Damping exhausted without an acceptable step.
                break 'outer;
            }
        }
    }

    if let Some(target) = entering_depth {
        renormalize_gauge(window, target);
    }

    Ok(BaReport { iterations, initial_cost, final_cost: current_cost, converged })
}

/// Compares the analytic jacobians of every usable residual against central
/// finite differences of the given step, using the same local
/// parameterization, and returns the largest relative entry error.
pub fn jacobian_consistency_error(window: &SlidingWindow, step_size: f64) -> f64 {
    let layout = Layout::new(window);
    let mut worst: f64 = 0.0;

    let probe = |window: &SlidingWindow, column: usize| -> Vec<Vector2<f64>> {
        // Residual stack at a window perturbed by +step and -step on one column.
        let mut direction = DVector::zeros(layout.dimension());
        direction[column] = step_size;
        let (plus, _) = apply_step(window, &layout, &direction);
        direction[column] = -step_size;
        let (minus, _) = apply_step(window, &layout, &direction);
        collect_residuals(&plus)
            .iter()
            .zip(collect_residuals(&minus).iter())
            .map(|(p, m)| (p - m) / (2.0 * step_size))
            .collect()
    };

    let analytic = collect_jacobian(window, &layout);
    for column in 0..layout.dimension() {
        let numeric = probe(window, column);
        for (row, fd) in numeric.iter().enumerate() {
            for axis in 0..2 {
                let a = analytic[row][column][axis];
                let f = fd[axis];
                let scale = a.abs().max(f.abs()).max(1.0);
                worst = worst.max((a - f).abs() / scale);
            }
        }
    }
    worst
}

fn collect_residuals(window: &SlidingWindow) -> Vec<Vector2<f64>> {
    let mut out = Vec::new();
    for feature in window.features().iter().filter(|f| f.is_active()) {
        let anchor_pose = &window.states()[feature.anchor_frame].pose;
        for obs in &feature.observations {
            if obs.frame == feature.anchor_frame {
                continue;
            }
            let eval = evaluate_residual(
                anchor_pose,
                &window.states()[obs.frame].pose,
                feature,
                &obs.point,
                false,
            );
            out.push(eval.value);
        }
    }
    out
}

/// Dense jacobian rows (one per residual) for the consistency check.
fn collect_jacobian(window: &SlidingWindow, layout: &Layout) -> Vec<Vec<Vector2<f64>>> {
    let mut rows = Vec::new();
    for (active_index, &feature_index) in layout.active_features.iter().enumerate() {
        let feature = &window.features()[feature_index];
        let anchor_pose = &window.states()[feature.anchor_frame].pose;
        for obs in &feature.observations {
            if obs.frame == feature.anchor_frame {
                continue;
            }
            let eval = evaluate_residual(
                anchor_pose,
                &window.states()[obs.frame].pose,
                feature,
                &obs.point,
                true,
            );
            let mut row = alloc::vec![Vector2::zeros(); layout.dimension()];
            if let Some(base) = layout.pose_column(obs.frame) {
                for axis in 0..3 {
                    row[base + axis] += Vector2::from(eval.d_target[0].column(axis));
                    row[base + 3 + axis] += Vector2::from(eval.d_target[1].column(axis));
                }
            }
            if let Some(base) = layout.pose_column(feature.anchor_frame) {
                for axis in 0..3 {
                    row[base + axis] += Vector2::from(eval.d_anchor[0].column(axis));
                    row[base + 3 + axis] += Vector2::from(eval.d_anchor[1].column(axis));
                }
            }
            row[layout.feature_column(active_index)] = eval.d_inverse_depth;
            rows.push(row);
        }
    }
    rows
}
