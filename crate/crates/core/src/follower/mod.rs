//! Vector-field trajectory follower.
//!
//! The follower tracks the newest proposed trajectory. Each tick it picks the
//! furthest safe target `r(s*)` whose control points lie inside the current
//! C-SDF ball, descends the potential
//! `phi = (sigma * |q - r(s*)|^2 + eps) / (CSDF(q) + eps)`, optionally removes
//! the component that would violate an end-effector orientation constraint,
//! and scales the command to the joint velocity limits.

use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::csdf::{csdf_with_gradient, CsdfParams, SceneCloud};
use crate::error::{Error, Result};
use crate::kinematics::{AttachedObject, ChainFrames, Configuration, KinematicChain};
use crate::planner::ProposedTrajectory;

/// Piecewise-linear curve reindexed by normalized arclength `s in [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    waypoints: Vec<Configuration>,
    cumulative: Vec<f64>,
    total: f64,
    generation: u64,
}

impl ReferenceTrajectory {
    /// Builds the arclength table; consecutive duplicate waypoints are merged.
    pub fn from_waypoints(waypoints: &[Configuration], generation: u64) -> Result<Self> {
        let first = waypoints
            .first()
            .ok_or_else(|| Error::invalid("trajectory has no waypoints"))?;
        let mut kept = vec![first.clone()];
        let mut cumulative = vec![0.0];
        for w in &waypoints[1..] {
            if w.len() != first.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    actual: w.len(),
                });
            }
            let len = (w - kept.last().unwrap()).norm();
            if len > 0.0 {
                cumulative.push(cumulative.last().unwrap() + len);
                kept.push(w.clone());
            }
        }
        Ok(Self {
            total: *cumulative.last().unwrap(),
            waypoints: kept,
            cumulative,
            generation,
        })
    }

    pub fn parameterize(traj: &ProposedTrajectory) -> Result<Self> {
        Self::from_waypoints(&traj.waypoints, traj.generation)
    }

    pub fn waypoints(&self) -> &[Configuration] {
        &self.waypoints
    }

    pub fn total_length(&self) -> f64 {
        self.total
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn end(&self) -> &Configuration {
        self.waypoints.last().unwrap()
    }

    /// `r(s)`; `s` is clamped to `[0, 1]`.
    pub fn eval(&self, s: f64) -> Configuration {
        if self.waypoints.len() == 1 {
            return self.waypoints[0].clone();
        }
        let s = s.clamp(0.0, 1.0);
        if s == 1.0 {
            return self.end().clone();
        }
        let target = s * self.total;
        // Last segment whose start is at or before the target length.
        let i = self
            .cumulative
            .partition_point(|c| *c <= target)
            .saturating_sub(1)
            .min(self.waypoints.len() - 2);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((target - self.cumulative[i]) / seg).clamp(0.0, 1.0);
        &self.waypoints[i] * (1.0 - t) + &self.waypoints[i + 1] * t
    }

    /// Arclength parameter of the closest point to `q` (exact per-segment
    /// projection, lowest segment index on ties).
    pub fn project(&self, q: &Configuration) -> f64 {
        if self.waypoints.len() == 1 || self.total == 0.0 {
            return 0.0;
        }
        let mut best_d = f64::INFINITY;
        let mut best_s = 0.0;
        for (i, pair) in self.waypoints.windows(2).enumerate() {
            let seg = &pair[1] - &pair[0];
            let len2 = seg.norm_squared();
            let t = ((q - &pair[0]).dot(&seg) / len2).clamp(0.0, 1.0);
            let d = (q - (&pair[0] + &seg * t)).norm_squared();
            if d < best_d {
                best_d = d;
                best_s = (self.cumulative[i] + t * len2.sqrt()) / self.total;
            }
        }
        best_s.min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EeAxis {
    #[default]
    X,
    Y,
    Z,
}

impl EeAxis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            EeAxis::X => Vector3::x(),
            EeAxis::Y => Vector3::y(),
            EeAxis::Z => Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DhMethod {
    #[default]
    Analytic,
    FiniteDifference,
}

/// Keep an end-effector axis aligned with a world axis:
/// `h(q) = arccos(e(q) . z)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSpec {
    pub active: bool,
    pub ee_axis: EeAxis,
    pub world_axis: [f64; 3],
    pub dh_method: DhMethod,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self {
            active: false,
            ee_axis: EeAxis::Z,
            world_axis: [0.0, 0.0, 1.0],
            dh_method: DhMethod::Analytic,
        }
    }
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        let n = Vector3::from(self.world_axis).norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("constraint world axis must be unit length"));
        }
        Ok(())
    }

    pub fn world(&self) -> Vector3<f64> {
        Vector3::from(self.world_axis)
    }
}

const ACOS_CLAMP: f64 = 1.0 - 1e-12;
const DH_FD_STEP: f64 = 1e-6;
/// Below this constraint-gradient norm the projection is skipped.
pub const DH_EPS: f64 = 1e-8;

fn ee_axis_world(chain: &KinematicChain, frames: &ChainFrames, spec: &ConstraintSpec) -> Vector3<f64> {
    frames.poses[chain.ee_frame()].rotation * spec.ee_axis.unit()
}

/// Constraint value `h(q)` in radians squared.
pub fn constraint_value(chain: &KinematicChain, q: &Configuration, spec: &ConstraintSpec) -> Result<f64> {
    let frames = chain.frames(q)?;
    let c = ee_axis_world(chain, &frames, spec).dot(&spec.world());
    Ok(c.clamp(-ACOS_CLAMP, ACOS_CLAMP).acos().powi(2))
}

/// Angle between the constrained axes, in radians.
pub fn constraint_angle(chain: &KinematicChain, q: &Configuration, spec: &ConstraintSpec) -> Result<f64> {
    Ok(constraint_value(chain, q, spec)?.sqrt())
}

/// `Dh(q)` (as a column vector) via the orientation chain rule:
/// `dh/dq_i = -2 theta / sin(theta) * z . (w_i x e)`.
pub fn constraint_gradient_analytic(
    chain: &KinematicChain,
    q: &Configuration,
    spec: &ConstraintSpec,
) -> Result<DVector<f64>> {
    let frames = chain.frames(q)?;
    let e = ee_axis_world(chain, &frames, spec);
    let z = spec.world();
    let c = e.dot(&z).clamp(-ACOS_CLAMP, ACOS_CLAMP);
    let theta = c.acos();
    let sin = (1.0 - c * c).sqrt();
    let ratio = if theta < 1e-6 { 1.0 } else { theta / sin };
    let ee = chain.ee_frame();
    Ok(DVector::from_iterator(
        chain.dof(),
        (0..chain.dof()).map(|i| {
            if chain.influences(i, ee) {
                -2.0 * ratio * z.dot(&frames.axes[i].cross(&e))
            } else {
                0.0
            }
        }),
    ))
}

/// `Dh(q)` by central differences with a 1e-6 rad step.
pub fn constraint_gradient_fd(
    chain: &KinematicChain,
    q: &Configuration,
    spec: &ConstraintSpec,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(chain.dof());
    for i in 0..chain.dof() {
        let mut a = q.clone();
        let mut b = q.clone();
        a[i] += DH_FD_STEP;
        b[i] -= DH_FD_STEP;
        g[i] = (constraint_value(chain, &a, spec)? - constraint_value(chain, &b, spec)?) / (2.0 * DH_FD_STEP);
    }
    Ok(g)
}

pub fn constraint_gradient(
    chain: &KinematicChain,
    q: &Configuration,
    spec: &ConstraintSpec,
) -> Result<DVector<f64>> {
    match spec.dh_method {
        DhMethod::Analytic => constraint_gradient_analytic(chain, q, spec),
        DhMethod::FiniteDifference => constraint_gradient_fd(chain, q, spec),
    }
}

/// `u_h = (I - Dh^T (Dh Dh^T)^-1 Dh) u - c * grad h`; identity when
/// `|Dh| < 1e-8`.
pub fn project_constraint(u: &DVector<f64>, dh: &DVector<f64>, c_gain: f64) -> DVector<f64> {
    let n2 = dh.norm_squared();
    if n2.sqrt() < DH_EPS {
        return u.clone();
    }
    u - dh * (dh.dot(u) / n2) - dh * c_gain
}

/// Uniform scaling by `min(1, min_i limit_i / |u_i|)`.
pub fn scale_to_limits(u: &DVector<f64>, limits: &DVector<f64>) -> DVector<f64> {
    let factor = u
        .iter()
        .zip(limits.iter())
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, l)| l / v.abs())
        .fold(1.0_f64, f64::min);
    if factor < 1.0 {
        u * factor
    } else {
        u.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FollowerParams {
    /// Potential-field gain k.
    pub k: f64,
    /// Constraint gain c.
    pub c: f64,
    /// Blend constant eps in the potential.
    pub epsilon: f64,
    /// Denominator guard.
    pub epsilon_min: f64,
    /// Scale on the joint-space numerator term of the potential.
    pub numerator_scale: f64,
    /// Control period (seconds).
    pub dt: f64,
    /// Number of samples in the safe-target search.
    pub s_grid: usize,
    /// Goal tolerance (radians, joint-space L2).
    pub goal_tolerance: f64,
    pub constraint: ConstraintSpec,
}

impl Default for FollowerParams {
    fn default() -> Self {
        Self {
            k: 0.5,
            c: 0.5,
            epsilon: 1e-3,
            epsilon_min: 1e-6,
            numerator_scale: 1.0,
            dt: 0.01,
            s_grid: 512,
            goal_tolerance: 0.02,
            constraint: ConstraintSpec::default(),
        }
    }
}

impl FollowerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.k,
            self.c,
            self.epsilon,
            self.epsilon_min,
            self.numerator_scale,
            self.dt,
            self.goal_tolerance,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("follower gains, eps, dt and tolerance must be positive"));
        }
        if self.s_grid < 2 {
            return Err(Error::invalid("s_grid must be at least 2"));
        }
        self.constraint.validate()
    }
}

/// `phi(q)` with a frozen target.
pub fn potential(q: &Configuration, target: &Configuration, csdf: f64, params: &FollowerParams) -> f64 {
    let num = params.numerator_scale * (q - target).norm_squared() + params.epsilon;
    num / (csdf + params.epsilon).max(params.epsilon_min)
}

/// `u = -k grad phi` with the target held fixed. `grad_csdf = None` drops
/// the repulsion term.
pub fn velocity_command(
    q: &Configuration,
    target: &Configuration,
    csdf: f64,
    grad_csdf: Option<&DVector<f64>>,
    params: &FollowerParams,
) -> DVector<f64> {
    let diff = q - target;
    let num = params.numerator_scale * diff.norm_squared() + params.epsilon;
    let den = (csdf + params.epsilon).max(params.epsilon_min);
    let mut grad = diff * (2.0 * params.numerator_scale / den);
    if let Some(g) = grad_csdf {
        grad -= g * (num / (den * den));
    }
    grad * -params.k
}

/// Control-point positions at `q` (body points, then attached points).
fn control_points(chain: &KinematicChain, q: &[f64], attached: Option<&AttachedObject>, out: &mut Vec<Vector3<f64>>) {
    let frames = chain.frames_unchecked(q);
    chain.control_points_into(&frames, attached, out);
}

/// Furthest grid parameter in `[s_proj, 1]` whose control points all lie
/// within `csdf` of the control points at `q`. Falls back to `s_proj` when
/// `csdf <= 0` or no grid point qualifies. Returns `(s*, s_proj)`.
pub fn find_safe_target(
    reference: &ReferenceTrajectory,
    q: &Configuration,
    csdf: f64,
    chain: &KinematicChain,
    attached: Option<&AttachedObject>,
    grid: usize,
) -> (f64, f64) {
    let s_proj = reference.project(q);
    if csdf <= 0.0 {
        return (s_proj, s_proj);
    }
    let mut here = Vec::new();
    control_points(chain, q.as_slice(), attached, &mut here);
    let mut there = Vec::new();
    let r2 = csdf * csdf;
    let n = grid.max(2);
    for i in (0..n).rev() {
        let s = if i == n - 1 {
            1.0
        } else {
            s_proj + (1.0 - s_proj) * i as f64 / (n - 1) as f64
        };
        let target = reference.eval(s);
        control_points(chain, target.as_slice(), attached, &mut there);
        if here
            .iter()
            .zip(&there)
            .all(|(a, b)| (a - b).norm_squared() <= r2)
        {
            return (s, s_proj);
        }
    }
    (s_proj, s_proj)
}

/// Per-tick follower diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickDiagnostics {
    /// `None` when the scene cloud was empty.
    pub csdf: Option<f64>,
    pub s_star: f64,
    pub u_norm: f64,
    /// Constraint value, when the constraint is active.
    pub h: Option<f64>,
    /// `Dh . u_h` before velocity scaling, when the projection was applied.
    pub dh_dot_u: Option<f64>,
    pub dh_norm: Option<f64>,
    pub generation: u64,
    pub degenerate_gradient: bool,
    pub at_goal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub u: DVector<f64>,
    pub diagnostics: TickDiagnostics,
}

/// Stateful follower: the current reference and the last good C-SDF gradient.
#[derive(Debug, Clone)]
pub struct Follower {
    chain: Arc<KinematicChain>,
    params: FollowerParams,
    csdf: CsdfParams,
    attached: Option<AttachedObject>,
    reference: Option<ReferenceTrajectory>,
    last_gradient: Option<DVector<f64>>,
    velocity_limits: DVector<f64>,
}

impl Follower {
    pub fn new(chain: Arc<KinematicChain>, params: FollowerParams, csdf: CsdfParams) -> Result<Self> {
        params.validate()?;
        csdf.validate()?;
        let velocity_limits = chain.velocity_limits();
        Ok(Self {
            chain,
            params,
            csdf,
            attached: None,
            reference: None,
            last_gradient: None,
            velocity_limits,
        })
    }

    pub fn with_attached(mut self, attached: Option<AttachedObject>) -> Result<Self> {
        self.chain.check_attached(attached.as_ref())?;
        self.attached = attached;
        Ok(self)
    }

    pub fn params(&self) -> &FollowerParams {
        &self.params
    }

    pub fn reference(&self) -> Option<&ReferenceTrajectory> {
        self.reference.as_ref()
    }

    /// One control tick. `latest` is the newest published trajectory; it
    /// replaces the current reference only if its generation is newer.
    pub fn tick(
        &mut self,
        q: &Configuration,
        latest: Option<&ProposedTrajectory>,
        cloud: &SceneCloud,
    ) -> Result<TickOutput> {
        self.chain.check_dimension(q)?;
        if let Some(traj) = latest {
            let newer = self
                .reference
                .as_ref()
                .is_none_or(|r| traj.generation > r.generation());
            if newer {
                self.reference = Some(ReferenceTrajectory::parameterize(traj)?);
            }
        }
        let spec = &self.params.constraint;
        let h = if spec.active {
            Some(constraint_value(&self.chain, q, spec)?)
        } else {
            None
        };
        let Some(reference) = &self.reference else {
            return Ok(self.idle(q, h, None, 0));
        };
        let generation = reference.generation();
        if (q - reference.end()).norm() <= self.params.goal_tolerance {
            let mut out = self.idle(q, h, None, generation);
            out.diagnostics.at_goal = true;
            out.diagnostics.s_star = 1.0;
            return Ok(out);
        }

        let (csdf, grad, degenerate) = if cloud.is_empty() {
            (None, None, false)
        } else {
            let res = csdf_with_gradient(&self.chain, q, cloud, &self.csdf, self.attached.as_ref())?;
            let grad = if res.degenerate {
                self.last_gradient.clone()
            } else {
                let g = res.gradient.expect("gradient requested");
                self.last_gradient = Some(g.clone());
                Some(g)
            };
            (Some(res.value), grad, res.degenerate)
        };

        let (s_star, _) = match csdf {
            Some(v) => find_safe_target(reference, q, v, &self.chain, self.attached.as_ref(), self.params.s_grid),
            None => (1.0, reference.project(q)),
        };
        let target = reference.eval(s_star);
        let mut u = match csdf {
            Some(v) => velocity_command(q, &target, v, grad.as_ref(), &self.params),
            None => (q - &target) * (-2.0 * self.params.k * self.params.numerator_scale),
        };

        let (mut dh_dot_u, mut dh_norm) = (None, None);
        if spec.active {
            let dh = constraint_gradient(&self.chain, q, spec)?;
            let n = dh.norm();
            dh_norm = Some(n);
            if n >= DH_EPS {
                u = project_constraint(&u, &dh, self.params.c);
                dh_dot_u = Some(dh.dot(&u));
            }
        }
        let u = scale_to_limits(&u, &self.velocity_limits);
        Ok(TickOutput {
            diagnostics: TickDiagnostics {
                csdf,
                s_star,
                u_norm: u.norm(),
                h,
                dh_dot_u,
                dh_norm,
                generation,
                degenerate_gradient: degenerate,
                at_goal: false,
            },
            u,
        })
    }

    fn idle(&self, q: &Configuration, h: Option<f64>, csdf: Option<f64>, generation: u64) -> TickOutput {
        TickOutput {
            u: DVector::zeros(q.len()),
            diagnostics: TickDiagnostics {
                csdf,
                s_star: 0.0,
                u_norm: 0.0,
                h,
                dh_dot_u: None,
                dh_norm: None,
                generation,
                degenerate_gradient: false,
                at_goal: false,
            },
        }
    }
}
