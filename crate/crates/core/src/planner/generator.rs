use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{
    init_hypothesis, mppi_iterate, rollout_cost, sample_rollouts, shift_hypothesis, Mailbox,
    MppiParams, ProposedTrajectory, ResolvedCovariance,
};
use crate::csdf::{evaluate_flat_batch, CsdfParams, SceneCloud};
use crate::error::{Error, Result};
use crate::kinematics::{AttachedObject, Configuration, KinematicChain};
use crate::rng::SeedStream;

/// Summary of one generator iteration.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub trajectory: Arc<ProposedTrajectory>,
    pub horizon: usize,
    /// The scene cloud was empty and collision costs were skipped.
    pub cloud_empty: bool,
    /// Lowest scene C-SDF over the published waypoints (`+inf` without a cloud).
    pub trajectory_min_csdf: f64,
    /// Fraction of rollouts whose states all had positive C-SDF.
    pub feasible_fraction: f64,
}

/// Stateful MPPI trajectory generator (one instance per episode).
#[derive(Debug)]
pub struct TrajectoryGenerator {
    chain: Arc<KinematicChain>,
    goal: Configuration,
    params: MppiParams,
    csdf: CsdfParams,
    cov: ResolvedCovariance,
    rng: ChaCha8Rng,
    attached: Option<AttachedObject>,
    latest: Option<Arc<ProposedTrajectory>>,
    generation: u64,
}

impl TrajectoryGenerator {
    pub fn new(
        chain: Arc<KinematicChain>,
        goal: Configuration,
        params: MppiParams,
        csdf: CsdfParams,
    ) -> Result<Self> {
        params.validate()?;
        csdf.validate()?;
        chain.check_dimension(&goal)?;
        if !chain.within_limits(&goal) {
            return Err(Error::invalid("goal configuration violates joint limits"));
        }
        let cov = params.covariance.resolve(chain.dof())?;
        let rng = SeedStream::new(params.seed).derive("mppi").rng();
        Ok(Self {
            chain,
            goal,
            params,
            csdf,
            cov,
            rng,
            attached: None,
            latest: None,
            generation: 0,
        })
    }

    pub fn with_attached(mut self, attached: Option<AttachedObject>) -> Result<Self> {
        self.chain.check_attached(attached.as_ref())?;
        self.attached = attached;
        Ok(self)
    }

    pub fn goal(&self) -> &Configuration {
        &self.goal
    }

    pub fn params(&self) -> &MppiParams {
        &self.params
    }

    pub fn chain(&self) -> &Arc<KinematicChain> {
        &self.chain
    }

    pub fn latest(&self) -> Option<&Arc<ProposedTrajectory>> {
        self.latest.as_ref()
    }

    /// Runs one MPPI iteration from `q_now` against `cloud` and returns the
    /// new proposed trajectory. `now` is stamped on the trajectory.
    pub fn iterate(&mut self, q_now: &Configuration, cloud: &SceneCloud, now: f64) -> Result<IterationReport> {
        self.chain.check_dimension(q_now)?;
        let p = &self.params;
        let hyp = match (&self.latest, p.greedy_baseline) {
            (Some(prev), false) => shift_hypothesis(prev, q_now, p.spacing),
            _ => init_hypothesis(q_now, &self.goal, p.spacing),
        };
        let mut batch = sample_rollouts(&hyp, p, &self.cov, &self.chain, &mut self.rng);
        let report = rollout_cost(
            &mut batch,
            cloud,
            &self.chain,
            p,
            &self.csdf,
            &self.goal,
            self.attached.as_ref(),
            p.greedy_baseline,
        );
        let feasible = batch.min_csdf.iter().filter(|c| **c > 0.0).count();
        self.generation += 1;
        let (_, traj) = mppi_iterate(
            &hyp,
            &mut batch,
            p,
            &self.cov,
            &self.chain,
            &self.goal,
            self.generation,
            now,
        );
        let flat: Vec<f64> = traj.waypoints.iter().flat_map(|w| w.iter().copied()).collect();
        let eval = evaluate_flat_batch(&self.chain, &flat, cloud, &self.csdf, self.attached.as_ref(), false);
        let trajectory_min_csdf = eval
            .csdf
            .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::INFINITY);
        let traj = Arc::new(traj);
        self.latest = Some(traj.clone());
        Ok(IterationReport {
            trajectory: traj,
            horizon: hyp.horizon(),
            cloud_empty: report.cloud_empty,
            trajectory_min_csdf,
            feasible_fraction: feasible as f64 / batch.rollouts as f64,
        })
    }
}

/// Runs the generator until `stop` is set, publishing every trajectory to
/// `mailbox`. `observe` supplies the current configuration, the latest
/// cloud and a timestamp. Returns the number of iterations performed.
pub fn generator_loop<F>(
    generator: &mut TrajectoryGenerator,
    mut observe: F,
    mailbox: &Mailbox<ProposedTrajectory>,
    stop: &AtomicBool,
) -> Result<u64>
where
    F: FnMut() -> (Configuration, Arc<SceneCloud>, f64),
{
    let mut n = 0;
    while !stop.load(Ordering::Acquire) {
        let (q, cloud, now) = observe();
        let report = generator.iterate(&q, &cloud, now)?;
        mailbox.publish(report.trajectory);
        n += 1;
    }
    Ok(n)
}
