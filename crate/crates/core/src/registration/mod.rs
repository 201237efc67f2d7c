//! Point cloud to SDF registration by Gauss-Newton on SE(3).
//!
//! For points `p_i` and a pose `T` the cost is `Σ SDF([T·p_i])²`, where `[·]`
//! rounds to the nearest voxel center. Each iteration linearizes around the
//! current pose with the left-perturbation Jacobian
//! `J = ∇SDF · (−x^ | I)`, solves the damped normal equations and retracts.
//!
//! The same loop runs against a dense grid ([`DenseSdfMap`]) or directly on
//! TT cores ([`CompressedSdf`]).

mod map;
mod trace;

pub use map::{CompressedSdf, DenseSdfMap, SdfMap, SdfSample};
pub use trace::write_trace_csv;

use nalgebra::{Matrix6, Vector3, Vector6};
use rayon::prelude::*;
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geometry::{hat, retract, Pose, Twist};

/// Minimum number of in-bounds points for a well-posed 6-DoF step.
pub const MIN_ACTIVE_POINTS: usize = 6;

/// Points per work unit in the parallel reduction. Fixed so that results do
/// not depend on the thread count.
const CHUNK: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("only {active} points inside the volume, need at least {required}")]
    TooFewActive { active: usize, required: usize },
    #[error("all sampled gradients vanish; the pose is unobservable")]
    ZeroGradients,
    #[error("damped Gauss-Newton system is singular")]
    Singular,
    #[error("invalid registration config: {0}")]
    InvalidConfig(String),
}

/// Handling of points whose nearest voxel falls outside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfBoundsPolicy {
    /// Skip the point for the current iteration.
    #[default]
    Drop,
    /// Sample the nearest voxel on the grid boundary instead.
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    pub max_iterations: usize,
    /// Step scale α in `(0, 1]`.
    pub step_scale: f64,
    /// Threshold on `‖ξ‖` that must be undercut twice in a row.
    pub convergence_threshold: f64,
    /// Levenberg damping, relative: `λ = levenberg_damping · trace(H) / 6`.
    /// Large enough to pin directions the scene does not constrain (rotation
    /// about a sphere's center), small next to the well-observed eigenvalues.
    pub levenberg_damping: f64,
    pub out_of_bounds: OutOfBoundsPolicy,
    /// Step halvings tried when the cost goes up.
    pub max_backtracks: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_scale: 1.0,
            convergence_threshold: 1e-4,
            levenberg_damping: 1e-3,
            out_of_bounds: OutOfBoundsPolicy::Drop,
            max_backtracks: 5,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: &str| Err(RegistrationError::InvalidConfig(m.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return bad("step_scale must lie in (0, 1]");
        }
        if !(self.convergence_threshold > 0.0 && self.convergence_threshold.is_finite()) {
            return bad("convergence_threshold must be positive");
        }
        if !(self.levenberg_damping >= 0.0 && self.levenberg_damping.is_finite()) {
            return bad("levenberg_damping must be nonnegative");
        }
        Ok(())
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// Cost `Σ r²` at the pose the iteration started from.
    pub cost: f64,
    /// Norm of the twist actually applied (after backtracking).
    pub step_norm: f64,
    pub active_points: usize,
    /// Pose after the update.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
    /// `Σ r²` over the active points at the final pose.
    pub final_cost: f64,
    pub trace: Vec<TraceEntry>,
}

/// Residual and Jacobian row of one point: `r = value`,
/// `J = gradᵀ · (−x^ | I)` in `(ω, v)` order.
pub fn residual_jacobian(value: f64, grad: &Vector3<f64>, x: &Vector3<f64>) -> (f64, Vector6<f64>) {
    let rot = -(grad.transpose() * hat(x));
    let j = Vector6::new(rot[0], rot[1], rot[2], grad.x, grad.y, grad.z);
    (value, j)
}

/// Gauss-Newton normal equations accumulated over a set of points.
///
/// Forms a commutative monoid under [`NormalEquations::merge`], so partial
/// sums over disjoint point subsets can be combined in any grouping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEquations {
    /// `Σ JᵀJ`.
    pub hessian: Matrix6<f64>,
    /// `Σ Jᵀ r`.
    pub gradient: Vector6<f64>,
    /// `Σ r²`.
    pub cost: f64,
    pub active: usize,
}

impl Default for NormalEquations {
    fn default() -> Self {
        Self {
            hessian: Matrix6::zeros(),
            gradient: Vector6::zeros(),
            cost: 0.0,
            active: 0,
        }
    }
}

impl NormalEquations {
    pub fn add(&mut self, r: f64, j: &Vector6<f64>) {
        self.hessian += j * j.transpose();
        self.gradient += j * r;
        self.cost += r * r;
        self.active += 1;
    }

    pub fn merge(mut self, other: &NormalEquations) -> NormalEquations {
        self.hessian += other.hessian;
        self.gradient += other.gradient;
        self.cost += other.cost;
        self.active += other.active;
        self
    }
}

fn sample_point<M: SdfMap + ?Sized>(
    map: &M,
    x: &Vector3<f64>,
    policy: OutOfBoundsPolicy,
) -> Option<SdfSample> {
    match policy {
        OutOfBoundsPolicy::Drop => map.sample(x),
        OutOfBoundsPolicy::Clamp => Some(map.sample_clamped(x)),
    }
}

/// Accumulates `H`, `g` and the cost at `pose`. The Jacobian is evaluated at
/// the rounded point `[T·p]`, i.e. the sampled voxel center.
pub fn accumulate<M: SdfMap + Sync + ?Sized>(
    points: &PointCloud,
    pose: &Pose,
    map: &M,
    policy: OutOfBoundsPolicy,
) -> NormalEquations {
    let partials: Vec<NormalEquations> = points
        .points()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = NormalEquations::default();
            for p in chunk {
                let x = pose.transform_point(p);
                if let Some(s) = sample_point(map, &x, policy) {
                    let (r, j) = residual_jacobian(s.value, &s.gradient, &s.center);
                    acc.add(r, &j);
                }
            }
            acc
        })
        .collect();
    partials
        .iter()
        .fold(NormalEquations::default(), |acc, p| acc.merge(p))
}

/// Cost `Σ r²` and active count at `pose`, without gradients.
pub fn evaluate_cost<M: SdfMap + Sync + ?Sized>(
    points: &PointCloud,
    pose: &Pose,
    map: &M,
    policy: OutOfBoundsPolicy,
) -> (f64, usize) {
    let partials: Vec<(f64, usize)> = points
        .points()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut cost = 0.0;
            let mut active = 0;
            for p in chunk {
                let x = pose.transform_point(p);
                let idx = match policy {
                    OutOfBoundsPolicy::Drop => map.grid().world_to_index(&x),
                    OutOfBoundsPolicy::Clamp => Some(map.grid().world_to_index_clamped(&x)),
                };
                if let Some(idx) = idx {
                    let r = map.value_at(idx);
                    cost += r * r;
                    active += 1;
                }
            }
            (cost, active)
        })
        .collect();
    partials
        .iter()
        .fold((0.0, 0), |(c, a), (pc, pa)| (c + pc, a + pa))
}

/// Outcome of one Gauss-Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonStep {
    pub xi: Twist,
    /// Cost at the input pose.
    pub cost: f64,
    pub active: usize,
}

/// Solves `(H + λI)·ξ = −α·g` at `pose`.
pub fn gauss_newton_step<M: SdfMap + Sync + ?Sized>(
    points: &PointCloud,
    pose: &Pose,
    map: &M,
    config: &RegistrationConfig,
) -> Result<GaussNewtonStep, RegistrationError> {
    let ne = accumulate(points, pose, map, config.out_of_bounds);
    solve_step(&ne, config)
}

/// Solves the damped normal equations of an accumulated system.
pub fn solve_step(
    ne: &NormalEquations,
    config: &RegistrationConfig,
) -> Result<GaussNewtonStep, RegistrationError> {
    if ne.active < MIN_ACTIVE_POINTS {
        return Err(RegistrationError::TooFewActive {
            active: ne.active,
            required: MIN_ACTIVE_POINTS,
        });
    }
    let trace = ne.hessian.trace();
    if !(trace > 0.0) {
        return Err(RegistrationError::ZeroGradients);
    }
    let lambda = config.levenberg_damping * trace / 6.0;
    let damped = ne.hessian + Matrix6::identity() * lambda;
    let chol = damped.cholesky().ok_or(RegistrationError::Singular)?;
    let delta = chol.solve(&(-ne.gradient * config.step_scale));
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(RegistrationError::Singular);
    }
    Ok(GaussNewtonStep {
        xi: Twist::from_array([delta[0], delta[1], delta[2], delta[3], delta[4], delta[5]]),
        cost: ne.cost,
        active: ne.active,
    })
}

/// Gauss-Newton registration against any nearest-voxel SDF map.
///
/// Stops once `‖ξ‖` falls below the threshold in two consecutive iterations,
/// or after `max_iterations` (with `converged = false`).
pub fn register_with<M: SdfMap + Sync + ?Sized>(
    points: &PointCloud,
    map: &M,
    initial: &Pose,
    config: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    config.validate()?;
    let policy = config.out_of_bounds;
    let mut pose = *initial;
    let mut trace = Vec::new();
    let mut small_steps = 0;
    let mut converged = false;

    for _ in 0..config.max_iterations {
        let step = gauss_newton_step(points, &pose, map, config)?;
        let base = step.cost / step.active as f64;

        let mut xi = step.xi;
        let mut candidate = retract(&pose, &xi);
        for _ in 0..config.max_backtracks {
            let (cost, active) = evaluate_cost(points, &candidate, map, policy);
            if active >= MIN_ACTIVE_POINTS && cost / active as f64 <= base {
                break;
            }
            xi = xi.scale(0.5);
            candidate = retract(&pose, &xi);
        }
        pose = candidate;

        let step_norm = xi.norm();
        trace.push(TraceEntry {
            cost: step.cost,
            step_norm,
            active_points: step.active,
            pose,
        });
        if step_norm < config.convergence_threshold {
            small_steps += 1;
            if small_steps >= 2 {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    let (final_cost, _) = evaluate_cost(points, &pose, map, policy);
    Ok(RegistrationResult {
        pose,
        converged,
        iterations: trace.len(),
        final_cost,
        trace,
    })
}

/// Registration directly on the compressed map.
pub fn register(
    points: &PointCloud,
    map: &CompressedSdf,
    initial: &Pose,
    config: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    register_with(points, map, initial, config)
}

/// Registration on the uncompressed grid; reference path for [`register`].
pub fn register_dense(
    points: &PointCloud,
    map: &DenseSdfMap,
    initial: &Pose,
    config: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    register_with(points, map, initial, config)
}
