//! MPPI-based global trajectory generation.
//!
//! Each iteration samples `M` displacement sequences around a nominal
//! hypothesis, scores them with the C-SDF based cost, and forms the posterior
//! displacements by exponential averaging. The published trajectory is the
//! posterior rollout with the goal appended. Between iterations the
//! hypothesis is rebuilt from the robot's current configuration and the
//! closest point on the previously published trajectory.

mod generator;
mod mailbox;

pub use generator::{generator_loop, IterationReport, TrajectoryGenerator};
pub use mailbox::Mailbox;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::csdf::{evaluate_flat_batch, CsdfParams, SceneCloud};
use crate::error::{Error, Result};
use crate::kinematics::{AttachedObject, Configuration, KinematicChain};

/// Sampling covariance: a scalar (times identity), a diagonal, or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Default for Covariance {
    fn default() -> Self {
        Covariance::Isotropic(0.005)
    }
}

/// Cholesky factor and inverse of a resolved covariance.
#[derive(Debug, Clone)]
pub struct ResolvedCovariance {
    pub matrix: DMatrix<f64>,
    pub cholesky_lower: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

impl Covariance {
    pub fn resolve(&self, dof: usize) -> Result<ResolvedCovariance> {
        let matrix = match self {
            Covariance::Isotropic(s) => DMatrix::identity(dof, dof) * *s,
            Covariance::Diagonal(d) => {
                if d.len() != dof {
                    return Err(Error::invalid(format!(
                        "covariance diagonal has {} entries for {dof} joints",
                        d.len()
                    )));
                }
                DMatrix::from_diagonal(&DVector::from_column_slice(d))
            }
            Covariance::Full(rows) => {
                if rows.len() != dof || rows.iter().any(|r| r.len() != dof) {
                    return Err(Error::invalid(format!("covariance must be {dof}x{dof}")));
                }
                DMatrix::from_fn(dof, dof, |i, j| rows[i][j])
            }
        };
        if (&matrix - matrix.transpose()).amax() > 1e-12 * matrix.amax().max(1.0) {
            return Err(Error::invalid("covariance must be symmetric"));
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("covariance must be positive definite"))?;
        Ok(ResolvedCovariance {
            inverse: chol.inverse(),
            cholesky_lower: chol.l(),
            matrix,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MppiParams {
    pub rollouts: usize,
    pub covariance: Covariance,
    /// Temperature lambda.
    pub temperature: f64,
    /// Posterior smoothing alpha in (0, 1).
    pub smoothing: f64,
    pub w_length: f64,
    pub w_coll: f64,
    pub w_self_coll: f64,
    pub w_terminal: f64,
    /// Collision cost threshold delta (meters).
    pub collision_threshold: f64,
    /// Per-waypoint displacement norm limit (radians).
    pub max_displacement: f64,
    /// Joint-space distance between nominal waypoints (radians).
    pub spacing: f64,
    pub seed: u64,
    /// Multiplier on the `lambda * sum_t d_t' Sigma^-1 e_t` term of the
    /// weight exponent; 1 keeps the full term.
    pub importance_scale: f64,
    /// Ablation: straight-to-goal perturbation without shifting; rollouts
    /// touching an obstacle are discarded.
    pub greedy_baseline: bool,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            rollouts: 500,
            covariance: Covariance::default(),
            temperature: 1.0,
            smoothing: 0.9,
            w_length: 1.0,
            w_coll: 10.0,
            w_self_coll: 10.0,
            w_terminal: 5.0,
            collision_threshold: 0.05,
            max_displacement: 0.1,
            spacing: 0.1,
            seed: 0,
            importance_scale: 1.0,
            greedy_baseline: false,
        }
    }
}

impl MppiParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_length, self.w_coll, self.w_self_coll, self.w_terminal];
        if self.rollouts == 0 {
            Err(Error::invalid("rollouts must be at least 1"))
        } else if !(self.temperature > 0.0) {
            Err(Error::invalid("temperature must be positive"))
        } else if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            Err(Error::invalid("smoothing must lie in (0, 1]"))
        } else if weights.iter().any(|w| !(*w >= 0.0)) {
            Err(Error::invalid("cost weights must be non-negative"))
        } else if !(self.collision_threshold > 0.0) {
            Err(Error::invalid("collision threshold must be positive"))
        } else if !(self.importance_scale >= 0.0) {
            Err(Error::invalid("importance scale must be non-negative"))
        } else if !(self.max_displacement > 0.0 && self.spacing > 0.0) {
            Err(Error::invalid("displacement limit and spacing must be positive"))
        } else {
            Ok(())
        }
    }
}

/// Nominal waypoints `q_0..q_H` and displacements `d_0..d_{H-1}` with
/// `q_{t+1} = q_t + d_t` (up to rounding).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryHypothesis {
    pub waypoints: Vec<Configuration>,
    pub displacements: Vec<DVector<f64>>,
}

impl TrajectoryHypothesis {
    pub fn from_displacements(start: Configuration, displacements: Vec<DVector<f64>>) -> Self {
        let mut waypoints = Vec::with_capacity(displacements.len() + 1);
        waypoints.push(start);
        for d in &displacements {
            let next = waypoints.last().unwrap() + d;
            waypoints.push(next);
        }
        Self {
            waypoints,
            displacements,
        }
    }

    pub fn horizon(&self) -> usize {
        self.displacements.len()
    }

    pub fn start(&self) -> &Configuration {
        &self.waypoints[0]
    }
}

/// Resamples a polyline at uniform arclength, `H = ceil(length / spacing)` steps.
/// A zero-length polyline yields one zero step.
pub fn discretize_polyline(vertices: &[Configuration], spacing: f64) -> TrajectoryHypothesis {
    assert!(!vertices.is_empty());
    let start = vertices[0].clone();
    let lengths: Vec<f64> = vertices.windows(2).map(|p| (&p[1] - &p[0]).norm()).collect();
    let total: f64 = lengths.iter().sum();
    if total == 0.0 {
        return TrajectoryHypothesis::from_displacements(start.clone(), vec![DVector::zeros(start.len())]);
    }
    // Tolerate rounding so that exact multiples of the spacing are not split.
    let n = ((total / spacing - 1e-9).ceil() as usize).max(1);
    let mut points = Vec::with_capacity(n + 1);
    points.push(start.clone());
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 1..n {
        let s = total * k as f64 / n as f64;
        while seg + 1 < lengths.len() && seg_start + lengths[seg] < s {
            seg_start += lengths[seg];
            seg += 1;
        }
        let t = if lengths[seg] > 0.0 {
            ((s - seg_start) / lengths[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        points.push(&vertices[seg] + (&vertices[seg + 1] - &vertices[seg]) * t);
    }
    points.push(vertices[vertices.len() - 1].clone());
    // Keep the sampled points themselves so the last one is the final vertex
    // bit for bit; summing the steps could drift by an ulp.
    let displacements = points.windows(2).map(|p| &p[1] - &p[0]).collect();
    TrajectoryHypothesis {
        waypoints: points,
        displacements,
    }
}

/// Straight joint-space line from start to goal, `H = ceil(|goal - start| / spacing)`.
pub fn init_hypothesis(
    q_start: &Configuration,
    q_goal: &Configuration,
    spacing: f64,
) -> TrajectoryHypothesis {
    discretize_polyline(&[q_start.clone(), q_goal.clone()], spacing)
}

/// Trajectory published to the follower: posterior rollout plus the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedTrajectory {
    pub waypoints: Vec<Configuration>,
    pub generation: u64,
    /// Creation time (seconds; simulated time in deterministic runs).
    pub created_at: f64,
}

impl ProposedTrajectory {
    pub fn goal(&self) -> &Configuration {
        self.waypoints.last().expect("trajectory is never empty")
    }
}

/// Closest point on a polyline: (segment index, fraction, point).
/// Exact per-segment projection with the lowest index winning ties.
pub fn closest_point_on_polyline(
    waypoints: &[Configuration],
    q: &Configuration,
) -> (usize, f64, Configuration) {
    assert!(!waypoints.is_empty());
    if waypoints.len() == 1 {
        return (0, 0.0, waypoints[0].clone());
    }
    let mut best = (0, 0.0, waypoints[0].clone());
    let mut best_d = f64::INFINITY;
    for (i, pair) in waypoints.windows(2).enumerate() {
        let seg = &pair[1] - &pair[0];
        let len2 = seg.norm_squared();
        let t = if len2 > 0.0 {
            ((q - &pair[0]).dot(&seg) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let p = &pair[0] + &seg * t;
        let d = (q - &p).norm_squared();
        if d < best_d {
            best_d = d;
            best = (i, t, p);
        }
    }
    best
}

/// Warm start: connect `q_now` to the closest point on the previous
/// trajectory and keep everything after it, re-discretized at `spacing`.
pub fn shift_hypothesis(
    previous: &ProposedTrajectory,
    q_now: &Configuration,
    spacing: f64,
) -> TrajectoryHypothesis {
    let wps = &previous.waypoints;
    let (seg, _, closest) = closest_point_on_polyline(wps, q_now);
    let mut vertices = Vec::with_capacity(wps.len() - seg + 1);
    vertices.push(q_now.clone());
    vertices.push(closest);
    vertices.extend(wps.iter().skip(seg + 1).cloned());
    discretize_polyline(&vertices, spacing)
}

/// Sampled displacement sequences and their scores.
///
/// Arrays are row-major: displacements are `[rollout][t][joint]` and states
/// `[rollout][t in 0..=H][joint]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub rollouts: usize,
    pub horizon: usize,
    pub dof: usize,
    pub displacements: Vec<f64>,
    pub states: Vec<f64>,
    pub costs: Vec<f64>,
    pub weights: Vec<f64>,
    pub normalizer: f64,
    /// Minimum scene C-SDF along each rollout (`+inf` without a cloud).
    pub min_csdf: Vec<f64>,
}

impl RolloutBatch {
    pub fn displacement(&self, j: usize, t: usize) -> &[f64] {
        let o = (j * self.horizon + t) * self.dof;
        &self.displacements[o..o + self.dof]
    }

    pub fn state(&self, j: usize, t: usize) -> &[f64] {
        let o = (j * (self.horizon + 1) + t) * self.dof;
        &self.states[o..o + self.dof]
    }
}

/// `e_{j,t} ~ N(d_t, Sigma)`, norm-clamped to `max_displacement`, then the
/// resulting state clamped to the joint limits with the stored displacement
/// adjusted to match.
pub fn sample_rollouts<R: Rng + ?Sized>(
    hyp: &TrajectoryHypothesis,
    params: &MppiParams,
    cov: &ResolvedCovariance,
    chain: &KinematicChain,
    rng: &mut R,
) -> RolloutBatch {
    let m = params.rollouts;
    let h = hyp.horizon();
    let d = chain.dof();
    let lo = chain.lower_limits();
    let hi = chain.upper_limits();
    let mut displacements = vec![0.0; m * h * d];
    let mut states = vec![0.0; m * (h + 1) * d];
    let mut z = DVector::zeros(d);
    for j in 0..m {
        let s0 = j * (h + 1) * d;
        states[s0..s0 + d].copy_from_slice(hyp.start().as_slice());
        for t in 0..h {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let mut e = &hyp.displacements[t] + &cov.cholesky_lower * &z;
            let n = e.norm();
            if n > params.max_displacement {
                e *= params.max_displacement / n;
            }
            let prev = s0 + t * d;
            let next = prev + d;
            let eo = (j * h + t) * d;
            for i in 0..d {
                let q_prev = states[prev + i];
                let q_next = (q_prev + e[i]).clamp(lo[i], hi[i]);
                states[next + i] = q_next;
                displacements[eo + i] = q_next - q_prev;
            }
        }
    }
    RolloutBatch {
        rollouts: m,
        horizon: h,
        dof: d,
        displacements,
        states,
        costs: vec![0.0; m],
        weights: vec![0.0; m],
        normalizer: 0.0,
        min_csdf: vec![f64::INFINITY; m],
    }
}

/// Per-state collision cost: 1 at or below `delta`, `delta / v` above.
pub fn collision_cost(value: f64, delta: f64) -> f64 {
    if value <= delta {
        1.0
    } else {
        delta / value
    }
}

/// Outcome flags of a cost evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostReport {
    /// The cloud was empty; collision costs were treated as zero.
    pub cloud_empty: bool,
}

/// Fills `batch.costs` (and `batch.min_csdf`).
///
/// Running costs are charged on the state reached by each displacement,
/// `q_{j,t+1}`, for `t = 0..H-1`; the shared start state carries no
/// information. With `discard_colliding`, rollouts reaching a state with
/// C-SDF <= 0 get infinite cost.
#[allow(clippy::too_many_arguments)]
pub fn rollout_cost(
    batch: &mut RolloutBatch,
    cloud: &SceneCloud,
    chain: &KinematicChain,
    params: &MppiParams,
    csdf_params: &CsdfParams,
    q_goal: &Configuration,
    attached: Option<&AttachedObject>,
    discard_colliding: bool,
) -> CostReport {
    let (m, h, d) = (batch.rollouts, batch.horizon, batch.dof);
    // States 1..=H of every rollout, flattened.
    let mut flat = Vec::with_capacity(m * h * d);
    for j in 0..m {
        let o = (j * (h + 1) + 1) * d;
        flat.extend_from_slice(&batch.states[o..o + h * d]);
    }
    let with_self = params.w_self_coll > 0.0 && !chain.capsule_pairs().is_empty();
    let eval = evaluate_flat_batch(chain, &flat, cloud, csdf_params, attached, with_self);
    let delta = params.collision_threshold;
    for j in 0..m {
        let mut length = 0.0;
        let mut coll = 0.0;
        let mut self_coll = 0.0;
        let mut min_c = f64::INFINITY;
        for t in 0..h {
            length += batch.displacement(j, t).iter().map(|v| v * v).sum::<f64>().sqrt();
            let idx = j * h + t;
            if let Some(values) = &eval.csdf {
                coll += collision_cost(values[idx], delta);
                min_c = min_c.min(values[idx]);
            }
            if with_self {
                self_coll += collision_cost(eval.self_clearance[idx], delta);
            }
        }
        let last = batch.state(j, h);
        let terminal = last
            .iter()
            .zip(q_goal.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let mut cost = params.w_length * length
            + params.w_coll * coll
            + params.w_self_coll * self_coll
            + params.w_terminal * terminal;
        if discard_colliding && min_c <= 0.0 {
            cost = f64::INFINITY;
        }
        batch.costs[j] = cost;
        batch.min_csdf[j] = min_c;
    }
    CostReport {
        cloud_empty: eval.csdf.is_none(),
    }
}

/// Importance-sampling weights with log-sum-exp stabilization.
///
/// `w_j ∝ exp(-(C_j + lambda * sum_t d_t^T Sigma^-1 e_{j,t}) / lambda)`.
/// If every exponent is infinite the weights fall back to uniform.
pub fn compute_weights(
    hyp: &TrajectoryHypothesis,
    batch: &mut RolloutBatch,
    params: &MppiParams,
    cov: &ResolvedCovariance,
) {
    let (m, h, d) = (batch.rollouts, batch.horizon, batch.dof);
    let lambda = params.temperature;
    let scaled: Vec<DVector<f64>> = hyp
        .displacements
        .iter()
        .map(|dt| &cov.inverse * dt)
        .collect();
    let exponents: Vec<f64> = (0..m)
        .map(|j| {
            let mut ctrl = 0.0;
            for (t, s) in scaled.iter().enumerate().take(h) {
                let e = batch.displacement(j, t);
                ctrl += (0..d).map(|i| s[i] * e[i]).sum::<f64>();
            }
            batch.costs[j] / lambda + params.importance_scale * ctrl
        })
        .collect();
    let min = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        batch.weights.iter_mut().for_each(|w| *w = 1.0 / m as f64);
        batch.normalizer = 0.0;
        return;
    }
    let raw: Vec<f64> = exponents.iter().map(|a| (-(a - min)).exp()).collect();
    let eta: f64 = raw.iter().sum();
    for (w, r) in batch.weights.iter_mut().zip(&raw) {
        *w = r / eta;
    }
    // Normalizer of the unshifted exponentials, in log space would be
    // eta * exp(-min); report the shifted one to stay finite.
    batch.normalizer = eta;
}

/// Posterior displacements and the proposed trajectory (goal appended).
///
/// `d~_t = (1 - alpha) d_t + alpha * sum_j w_j e_{j,t}`. Waypoints integrate
/// the posterior from `q_0` and are clamped to the joint limits.
pub fn mppi_iterate(
    hyp: &TrajectoryHypothesis,
    batch: &mut RolloutBatch,
    params: &MppiParams,
    cov: &ResolvedCovariance,
    chain: &KinematicChain,
    q_goal: &Configuration,
    generation: u64,
    created_at: f64,
) -> (Vec<DVector<f64>>, ProposedTrajectory) {
    compute_weights(hyp, batch, params, cov);
    let (m, h, d) = (batch.rollouts, batch.horizon, batch.dof);
    let alpha = params.smoothing;
    let mut posterior = Vec::with_capacity(h);
    for t in 0..h {
        let mut avg = DVector::zeros(d);
        for j in 0..m {
            let w = batch.weights[j];
            if w == 0.0 {
                continue;
            }
            for (a, e) in avg.iter_mut().zip(batch.displacement(j, t)) {
                *a += w * e;
            }
        }
        posterior.push(&hyp.displacements[t] * (1.0 - alpha) + avg * alpha);
    }
    let mut waypoints = Vec::with_capacity(h + 2);
    waypoints.push(chain.clamp_to_joint_limits(hyp.start()));
    for dt in &posterior {
        let next = chain.clamp_to_joint_limits(&(waypoints.last().unwrap() + dt));
        waypoints.push(next);
    }
    waypoints.push(q_goal.clone());
    (
        posterior,
        ProposedTrajectory {
            waypoints,
            generation,
            created_at,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Configuration {
        DVector::from_column_slice(x)
    }

    #[test]
    fn init_uniform_split() {
        let h = init_hypothesis(&v(&[0.0, 0.0]), &v(&[1.0, 0.0]), 0.5);
        assert_eq!(h.horizon(), 2);
        assert_eq!(h.waypoints, vec![v(&[0.0, 0.0]), v(&[0.5, 0.0]), v(&[1.0, 0.0])]);
    }

    #[test]
    fn init_degenerate_and_single_step() {
        let h = init_hypothesis(&v(&[0.3, 0.3]), &v(&[0.3, 0.3]), 0.1);
        assert_eq!(h.horizon(), 1);
        assert_eq!(h.displacements[0], v(&[0.0, 0.0]));
        let h = init_hypothesis(&v(&[0.0, 0.0]), &v(&[0.3, 0.4]), 2.0);
        assert_eq!(h.horizon(), 1);
        assert_eq!(h.displacements[0], v(&[0.3, 0.4]));
    }

    #[test]
    fn covariance_forms() {
        let c = Covariance::Isotropic(0.5).resolve(2).unwrap();
        assert!((c.inverse - DMatrix::identity(2, 2) * 2.0).amax() < 1e-12);
        assert!(Covariance::Diagonal(vec![1.0]).resolve(2).is_err());
        assert!(Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).resolve(2).is_err());
        let full: Covariance = serde_json::from_str("[[2.0, 0.5], [0.5, 1.0]]").unwrap();
        let r = full.resolve(2).unwrap();
        let back = &r.cholesky_lower * r.cholesky_lower.transpose();
        assert!((back - r.matrix).amax() < 1e-12);
        let iso: Covariance = serde_json::from_str("0.005").unwrap();
        assert_eq!(iso, Covariance::Isotropic(0.005));
    }

    fn two_rollout_batch(costs: [f64; 2]) -> (TrajectoryHypothesis, RolloutBatch) {
        let hyp = TrajectoryHypothesis::from_displacements(v(&[0.0]), vec![v(&[0.0])]);
        let batch = RolloutBatch {
            rollouts: 2,
            horizon: 1,
            dof: 1,
            displacements: vec![0.1, -0.1],
            states: vec![0.0, 0.1, 0.0, -0.1],
            costs: costs.to_vec(),
            weights: vec![0.0; 2],
            normalizer: 0.0,
            min_csdf: vec![f64::INFINITY; 2],
        };
        (hyp, batch)
    }

    #[test]
    fn equal_costs_equal_weights() {
        let (hyp, mut batch) = two_rollout_batch([3.0, 3.0]);
        let cov = Covariance::Isotropic(0.005).resolve(1).unwrap();
        compute_weights(&hyp, &mut batch, &MppiParams::default(), &cov);
        assert_eq!(batch.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn huge_costs_do_not_underflow() {
        let (hyp, mut batch) = two_rollout_batch([1e6, 1e6 + 1.0]);
        let cov = Covariance::Isotropic(0.005).resolve(1).unwrap();
        compute_weights(&hyp, &mut batch, &MppiParams::default(), &cov);
        assert!(batch.weights.iter().all(|w| w.is_finite()));
        assert!((batch.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((batch.weights[0] / batch.weights[1] - 1f64.exp()).abs() < 1e-9);
        let (hyp, mut batch) = two_rollout_batch([f64::INFINITY, f64::INFINITY]);
        compute_weights(&hyp, &mut batch, &MppiParams::default(), &cov);
        assert_eq!(batch.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn single_rollout_full_smoothing_reproduces_sample() {
        let chain = KinematicChain::bundled("planar3").unwrap();
        let hyp = init_hypothesis(&v(&[0.0, 0.0, 0.0]), &v(&[0.5, 0.0, 0.0]), 0.1);
        let params = MppiParams {
            rollouts: 1,
            smoothing: 1.0,
            ..Default::default()
        };
        let cov = params.covariance.resolve(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut batch = sample_rollouts(&hyp, &params, &cov, &chain, &mut rng);
        let (post, traj) = mppi_iterate(&hyp, &mut batch, &params, &cov, &chain, &v(&[0.5, 0.0, 0.0]), 1, 0.0);
        for (t, p) in post.iter().enumerate() {
            assert_eq!(p.as_slice(), batch.displacement(0, t));
        }
        assert_eq!(traj.goal(), &v(&[0.5, 0.0, 0.0]));
    }

    #[test]
    fn collision_cost_cases() {
        assert_eq!(collision_cost(0.05, 0.05), 1.0);
        assert_eq!(collision_cost(-1.0, 0.05), 1.0);
        assert_eq!(collision_cost(0.1, 0.05), 0.5);
    }

    #[test]
    fn shift_on_waypoint_keeps_suffix() {
        let wps: Vec<Configuration> = (0..6).map(|i| v(&[0.1 * i as f64, 0.0])).collect();
        let prev = ProposedTrajectory {
            waypoints: wps.clone(),
            generation: 1,
            created_at: 0.0,
        };
        let h = shift_hypothesis(&prev, &wps[3], 0.1);
        assert_eq!(h.horizon(), 2);
        assert!((&h.waypoints[2] - &wps[5]).norm() < 1e-12);
        let h0 = shift_hypothesis(&prev, &wps[0], 0.1);
        assert_eq!(h0.horizon(), 5);
        let at_end = shift_hypothesis(&prev, &wps[5], 0.1);
        assert_eq!(at_end.horizon(), 1);
        assert_eq!(at_end.displacements[0], v(&[0.0, 0.0]));
    }

    #[test]
    fn shift_projects_perpendicular_offset() {
        let wps = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[2.0, 0.0])];
        let (seg, t, p) = closest_point_on_polyline(&wps, &v(&[1.5, 0.1]));
        assert_eq!(seg, 1);
        assert!((t - 0.5).abs() < 1e-12);
        assert!((p - v(&[1.5, 0.0])).norm() < 1e-12);
    }
}
