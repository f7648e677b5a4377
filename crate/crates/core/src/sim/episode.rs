use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, Scene};
use crate::baseline::{edge_is_free, path_length, rrt_star_plan, RrtParams, RrtResult};
use crate::csdf::{csdf, CsdfParams, SceneCloud};
use crate::error::{Error, Result};
use crate::follower::{scale_to_limits, Follower, FollowerParams, TickOutput};
use crate::kinematics::{Configuration, KinematicChain};
use crate::planner::{generator_loop, Mailbox, MppiParams, ProposedTrajectory, TrajectoryGenerator};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ramp,
    GreedyMppi,
    RrtStar,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ramp, Method::GreedyMppi, Method::RrtStar];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ramp => "ramp",
            Method::GreedyMppi => "greedy_mppi",
            Method::RrtStar => "rrt_star",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Deterministic,
    Realtime,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Deterministic => "deterministic",
            Mode::Realtime => "realtime",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Mode::Deterministic, Mode::Realtime]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown mode {s:?}")))
    }
}

/// Planner, follower and baseline settings for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub planner: MppiParams,
    pub follower: FollowerParams,
    pub csdf: CsdfParams,
    pub rrt: RrtParams,
    /// Follower ticks per generator iteration in deterministic mode.
    pub interleave: usize,
    /// Edge sampling resolution for trajectory feasibility checks (radians).
    pub feasibility_resolution: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            planner: MppiParams::default(),
            follower: FollowerParams::default(),
            csdf: CsdfParams::default(),
            rrt: RrtParams::default(),
            interleave: 10,
            feasibility_resolution: 0.02,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.follower.validate()?;
        self.csdf.validate()?;
        self.rrt.validate()?;
        if self.interleave == 0 || !(self.feasibility_resolution > 0.0) {
            return Err(Error::invalid("interleave and feasibility resolution must be positive"));
        }
        Ok(())
    }
}

/// State and command at one follower tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    /// C-SDF on the perceived cloud (`None` when it was empty).
    pub csdf: Option<f64>,
    /// Raw nearest distance from the control points to the true cloud (meters).
    pub clearance: f64,
    pub s_star: f64,
    pub h: Option<f64>,
    pub dh_dot_u: Option<f64>,
    pub generation: u64,
    /// Every edge of the tracked trajectory was collision-free when published.
    pub trajectory_feasible: bool,
    pub collision: bool,
    pub at_goal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
    /// The baseline found no path within its budget.
    NoPlan,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
            Outcome::NoPlan => "no_plan",
        }
    }
}

/// Episode identity and inputs not recoverable from the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    /// Baseline path length, when a path was planned.
    pub planned_length: Option<f64>,
    pub no_plan: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub outcome: Outcome,
    pub success: bool,
    pub collision: bool,
    pub ticks: usize,
    pub duration: f64,
    /// Joint-space length of the executed motion (radians).
    pub executed_length: f64,
    /// Lowest raw clearance over the episode (meters; 0 after a collision).
    pub min_clearance: f64,
    /// Mean over ticks of the raw clearance (meters; 0 on collision ticks).
    pub mean_clearance: f64,
    pub first_feasible_generation: Option<u64>,
    pub generations: u64,
    pub planned_length: Option<f64>,
}

impl EpisodeSummary {
    pub fn from_rows(meta: &EpisodeMeta, rows: &[EpisodeRow]) -> Self {
        let collision = rows.iter().any(|r| r.collision);
        let success = !collision && rows.last().is_some_and(|r| r.at_goal);
        let outcome = if collision {
            Outcome::Collision
        } else if success {
            Outcome::Success
        } else if meta.no_plan {
            Outcome::NoPlan
        } else {
            Outcome::Timeout
        };
        let executed_length = rows
            .windows(2)
            .map(|w| {
                w[0].q
                    .iter()
                    .zip(&w[1].q)
                    .map(|(a, b)| (b - a) * (b - a))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        let clear = |r: &EpisodeRow| if r.collision { 0.0 } else { r.clearance.max(0.0) };
        let min_clearance = rows.iter().map(clear).fold(f64::INFINITY, f64::min);
        let mean_clearance = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(clear).sum::<f64>() / rows.len() as f64
        };
        Self {
            scenario: meta.scenario.clone(),
            method: meta.method,
            seed: meta.seed,
            outcome,
            success,
            collision,
            ticks: rows.len(),
            duration: rows.last().map_or(0.0, |r| r.t),
            executed_length,
            min_clearance: if min_clearance.is_finite() { min_clearance } else { 0.0 },
            mean_clearance,
            first_feasible_generation: rows
                .iter()
                .find(|r| r.trajectory_feasible)
                .map(|r| r.generation),
            generations: rows.iter().map(|r| r.generation).max().unwrap_or(0),
            planned_length: meta.planned_length,
        }
    }
}

/// Deterministic part of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub meta: EpisodeMeta,
    pub summary: EpisodeSummary,
    pub rows: Vec<EpisodeRow>,
    /// Generator iterations that ran on an empty cloud.
    pub degraded_iterations: u64,
}

impl EpisodeRecord {
    /// Rows as JSON lines.
    pub fn rows_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("row serializes"));
            out.push('\n');
        }
        out
    }
}

/// Wall-clock measurements; kept apart so records stay reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTiming {
    /// Planning time until the first collision-free trajectory (seconds).
    pub first_feasible_seconds: Option<f64>,
    /// Baseline time until its cost was within 5% of its final cost.
    pub converged_seconds: Option<f64>,
    pub planning_seconds: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub record: EpisodeRecord,
    pub timing: EpisodeTiming,
}

/// Scene, robot and resolved start/goal for one episode.
#[derive(Debug, Clone)]
pub struct EpisodeSetup {
    pub scenario: Scenario,
    pub scene: Arc<Scene>,
    pub chain: Arc<KinematicChain>,
    pub start: Configuration,
    pub goal: Configuration,
}

impl EpisodeSetup {
    /// Uses the scenario's fixed pair, or samples one from `seed`.
    pub fn new(scenario: &Scenario, csdf_params: &CsdfParams, seed: u64) -> Result<Self> {
        let chain = scenario.load_robot()?;
        let scene = Scene::build(scenario)?;
        let (start, goal) = match scenario.fixed_pair() {
            Some(p) => p,
            None => {
                let cloud = scene.cloud_at(0.0);
                let sampler =
                    super::PairSampler::new(&chain, &cloud, *csdf_params, scenario.pairs.clone());
                sampler.sample(SeedStream::new(seed).derive("scenario").derive(&scenario.name))?
            }
        };
        Self::with_pair(scenario, Arc::new(scene), Arc::new(chain), start, goal)
    }

    pub fn with_pair(
        scenario: &Scenario,
        scene: Arc<Scene>,
        chain: Arc<KinematicChain>,
        start: Configuration,
        goal: Configuration,
    ) -> Result<Self> {
        chain.check_dimension(&start)?;
        chain.check_dimension(&goal)?;
        if !chain.within_limits(&start) || !chain.within_limits(&goal) {
            return Err(Error::invalid("start or goal violates the joint limits"));
        }
        Ok(Self {
            scenario: scenario.clone(),
            scene,
            chain,
            start,
            goal,
        })
    }
}

/// Raw nearest distance from any control point to `cloud`.
fn raw_clearance(chain: &KinematicChain, q: &Configuration, cloud: &SceneCloud, p: &CsdfParams) -> f64 {
    if cloud.is_empty() {
        return f64::INFINITY;
    }
    csdf(chain, q, cloud, p, None)
        .map(|r| p.raw_clearance(r.value))
        .unwrap_or(f64::INFINITY)
}

/// Whether any point along the skeleton (1 cm spacing) lies inside a primitive.
fn penetrates(chain: &KinematicChain, q: &Configuration, scene: &Scene, t: f64) -> bool {
    let Ok(frames) = chain.frames(q) else {
        return false;
    };
    let skel = chain.skeleton_frames();
    skel.windows(2).any(|w| {
        let a: Vector3<f64> = frames.origin(w[0]);
        let b: Vector3<f64> = frames.origin(w[1]);
        let n = (((b - a).norm() / 0.01).ceil() as usize).max(1);
        (0..=n).any(|k| {
            let p = a + (b - a) * (k as f64 / n as f64);
            scene.primitive_distance(&p, t) <= 0.0
        })
    })
}

fn trajectory_feasible(
    chain: &KinematicChain,
    cloud: &SceneCloud,
    p: &CsdfParams,
    traj: &ProposedTrajectory,
    resolution: f64,
) -> bool {
    cloud.is_empty()
        || traj
            .waypoints
            .windows(2)
            .all(|w| edge_is_free(chain, cloud, p, &w[0], &w[1], resolution))
}

struct Stepper<'a> {
    setup: &'a EpisodeSetup,
    static_truth: SceneCloud,
    config: &'a RunConfig,
    rows: Vec<EpisodeRow>,
    q: Configuration,
}

impl<'a> Stepper<'a> {
    fn new(setup: &'a EpisodeSetup, config: &'a RunConfig) -> Self {
        Self {
            setup,
            static_truth: setup.scene.cloud_at(0.0),
            config,
            rows: Vec::new(),
            q: setup.start.clone(),
        }
    }

    /// Records the tick and integrates; returns true when the episode ends.
    fn step(&mut self, t: f64, out: &TickOutput, feasible: bool) -> bool {
        let s = self.setup;
        let moved;
        let truth = if s.scene.is_dynamic() {
            moved = s.scene.cloud_at(t);
            &moved
        } else {
            &self.static_truth
        };
        let clearance = raw_clearance(&s.chain, &self.q, truth, &self.config.csdf);
        let collision =
            clearance <= s.scenario.collision_margin || penetrates(&s.chain, &self.q, &s.scene, t);
        let d = &out.diagnostics;
        self.rows.push(EpisodeRow {
            t,
            q: self.q.iter().copied().collect(),
            u: out.u.iter().copied().collect(),
            csdf: d.csdf,
            clearance,
            s_star: d.s_star,
            h: d.h,
            dh_dot_u: d.dh_dot_u,
            generation: d.generation,
            trajectory_feasible: feasible,
            collision,
            at_goal: d.at_goal,
        });
        if collision || d.at_goal {
            return true;
        }
        let next = &self.q + &out.u * self.config.follower.dt;
        self.q = s.chain.clamp_to_joint_limits(&next);
        t + self.config.follower.dt > s.scenario.timeout + 1e-9
    }
}

fn planner_params(config: &RunConfig, method: Method, seed: u64) -> MppiParams {
    let mut p = config.planner.clone();
    p.greedy_baseline = method == Method::GreedyMppi || p.greedy_baseline;
    p.seed = SeedStream::new(seed).derive_index("planner", p.seed).seed();
    p
}

fn check_start(setup: &EpisodeSetup, config: &RunConfig) -> Result<()> {
    let cloud = setup.scene.cloud_at(0.0);
    if !cloud.is_empty() && csdf(&setup.chain, &setup.start, &cloud, &config.csdf, None)?.value <= 0.0 {
        return Err(Error::Infeasible("start configuration is in collision at t=0".into()));
    }
    Ok(())
}

/// Runs one episode of `method` on `setup`.
pub fn run_episode(
    setup: &EpisodeSetup,
    method: Method,
    config: &RunConfig,
    seed: u64,
    mode: Mode,
) -> Result<EpisodeResult> {
    config.validate()?;
    check_start(setup, config)?;
    match (method, mode) {
        (Method::RrtStar, _) => run_rrt(setup, config, seed),
        (_, Mode::Deterministic) => run_mppi_deterministic(setup, method, config, seed),
        (_, Mode::Realtime) => run_mppi_realtime(setup, method, config, seed),
    }
}

fn meta(setup: &EpisodeSetup, method: Method, seed: u64) -> EpisodeMeta {
    EpisodeMeta {
        scenario: setup.scenario.name.clone(),
        method,
        seed,
        start: setup.start.iter().copied().collect(),
        goal: setup.goal.iter().copied().collect(),
        planned_length: None,
        no_plan: false,
    }
}

fn run_mppi_deterministic(
    setup: &EpisodeSetup,
    method: Method,
    config: &RunConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    let wall = Instant::now();
    let params = planner_params(config, method, seed);
    let mut generator =
        TrajectoryGenerator::new(setup.chain.clone(), setup.goal.clone(), params, config.csdf)?;
    let mut follower = Follower::new(setup.chain.clone(), config.follower.clone(), config.csdf)?;
    let mut stepper = Stepper::new(setup, config);
    let period = setup.scenario.perception_period;
    let mut perceived = setup.scene.cloud_at(0.0);
    let mut next_perception = period;
    let mut latest: Option<Arc<ProposedTrajectory>> = None;
    let mut latest_feasible = false;
    let mut planning = 0.0;
    let mut first_feasible = None;
    let mut degraded = 0;
    let mut tick: u64 = 0;
    loop {
        let t = tick as f64 * config.follower.dt;
        if setup.scene.is_dynamic() && t + 1e-9 >= next_perception {
            perceived = setup.scene.cloud_at(t);
            next_perception += period;
        }
        if tick % config.interleave as u64 == 0 {
            let started = Instant::now();
            let report = generator.iterate(&stepper.q, &perceived, t)?;
            planning += started.elapsed().as_secs_f64();
            degraded += u64::from(report.cloud_empty);
            latest_feasible = trajectory_feasible(
                &setup.chain,
                &perceived,
                &config.csdf,
                &report.trajectory,
                config.feasibility_resolution,
            );
            if latest_feasible && first_feasible.is_none() {
                first_feasible = Some(planning);
            }
            latest = Some(report.trajectory);
        }
        let out = follower.tick(&stepper.q, latest.as_deref(), &perceived)?;
        if stepper.step(t, &out, latest_feasible) {
            break;
        }
        tick += 1;
    }
    let meta = meta(setup, method, seed);
    let summary = EpisodeSummary::from_rows(&meta, &stepper.rows);
    Ok(EpisodeResult {
        record: EpisodeRecord {
            meta,
            summary,
            rows: stepper.rows,
            degraded_iterations: degraded,
        },
        timing: EpisodeTiming {
            first_feasible_seconds: first_feasible,
            converged_seconds: None,
            planning_seconds: planning,
            wall_seconds: wall.elapsed().as_secs_f64(),
        },
    })
}

fn run_mppi_realtime(
    setup: &EpisodeSetup,
    method: Method,
    config: &RunConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    let wall = Instant::now();
    let params = planner_params(config, method, seed);
    let mut generator =
        TrajectoryGenerator::new(setup.chain.clone(), setup.goal.clone(), params, config.csdf)?;
    let mut follower = Follower::new(setup.chain.clone(), config.follower.clone(), config.csdf)?;
    let trajectories: Mailbox<ProposedTrajectory> = Mailbox::new();
    let state: Mailbox<Configuration> = Mailbox::new();
    let clouds: Mailbox<SceneCloud> = Mailbox::new();
    state.publish(Arc::new(setup.start.clone()));
    clouds.publish(Arc::new(setup.scene.cloud_at(0.0)));
    let stop = AtomicBool::new(false);
    let dt = config.follower.dt;

    std::thread::scope(|scope| -> Result<EpisodeResult> {
        let gen_handle = scope.spawn(|| {
            let observe = || {
                (
                    (*state.latest().expect("state published")).clone(),
                    clouds.latest().expect("cloud published"),
                    wall.elapsed().as_secs_f64(),
                )
            };
            generator_loop(&mut generator, observe, &trajectories, &stop)
        });
        while trajectories.latest().is_none() {
            std::thread::sleep(Duration::from_millis(1));
        }
        let started = Instant::now();
        let mut stepper = Stepper::new(setup, config);
        let period = setup.scenario.perception_period;
        let mut next_perception = period;
        let mut tick: u64 = 0;
        let result = loop {
            let t = tick as f64 * dt;
            if t + 1e-9 >= next_perception {
                clouds.publish(Arc::new(setup.scene.cloud_at(t)));
                next_perception += period;
            }
            let traj = trajectories.latest();
            let cloud = clouds.latest().expect("cloud published");
            let out = match follower.tick(&stepper.q, traj.as_deref(), &cloud) {
                Ok(o) => o,
                Err(e) => break Err(e),
            };
            let feasible = traj.as_deref().is_some_and(|tr| {
                trajectory_feasible(&setup.chain, &cloud, &config.csdf, tr, config.feasibility_resolution)
            });
            if stepper.step(t, &out, feasible) {
                break Ok(());
            }
            state.publish(Arc::new(stepper.q.clone()));
            tick += 1;
            let target = Duration::from_secs_f64(tick as f64 * dt);
            if let Some(wait) = target.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        };
        stop.store(true, Ordering::Release);
        let gen_result = gen_handle.join().expect("generator thread panicked");
        result?;
        gen_result?;
        let meta = meta(setup, method, seed);
        let summary = EpisodeSummary::from_rows(&meta, &stepper.rows);
        Ok(EpisodeResult {
            record: EpisodeRecord {
                meta,
                summary,
                rows: stepper.rows,
                degraded_iterations: 0,
            },
            timing: EpisodeTiming {
                wall_seconds: wall.elapsed().as_secs_f64(),
                ..Default::default()
            },
        })
    })
}

/// Plans once on the t=0 cloud and executes the path open loop at the
/// velocity limits.
fn run_rrt(setup: &EpisodeSetup, config: &RunConfig, seed: u64) -> Result<EpisodeResult> {
    let wall = Instant::now();
    let mut params = config.rrt.clone();
    params.seed = SeedStream::new(seed).derive_index("rrt", params.seed).seed();
    let cloud0 = setup.scene.cloud_at(0.0);
    // The start was checked already, so an infeasible problem means the goal
    // is blocked: the baseline then has no plan and the arm stays put.
    let plan = match rrt_star_plan(&setup.start, &setup.goal, &cloud0, &setup.chain, &config.csdf, &params) {
        Err(Error::Infeasible(_)) => RrtResult {
            path: None,
            cost: f64::INFINITY,
            history: Vec::new(),
            iterations: 0,
            checks: 0,
            elapsed: 0.0,
            tree: Default::default(),
        },
        other => other?,
    };
    let mut meta = meta(setup, Method::RrtStar, seed);
    meta.planned_length = plan.path.as_deref().map(path_length);
    meta.no_plan = plan.path.is_none();
    let limits = setup.chain.velocity_limits();
    let dt = config.follower.dt;
    let mut stepper = Stepper::new(setup, config);
    let path = plan.path.clone().unwrap_or_else(|| vec![setup.start.clone()]);
    let mut next = 0;
    let mut tick: u64 = 0;
    loop {
        let t = tick as f64 * dt;
        while next < path.len() && (&path[next] - &stepper.q).norm() < 1e-9 {
            next += 1;
        }
        let at_goal = plan.path.is_some()
            && (&stepper.q - &setup.goal).norm() <= config.follower.goal_tolerance;
        let u = if at_goal || next >= path.len() {
            Configuration::zeros(setup.chain.dof())
        } else {
            scale_to_limits(&((&path[next] - &stepper.q) / dt), &limits)
        };
        let out = TickOutput {
            diagnostics: crate::follower::TickDiagnostics {
                csdf: None,
                s_star: next as f64 / path.len().max(1) as f64,
                u_norm: u.norm(),
                h: None,
                dh_dot_u: None,
                dh_norm: None,
                generation: u64::from(plan.path.is_some()),
                degenerate_gradient: false,
                at_goal,
            },
            u,
        };
        let done = stepper.step(t, &out, plan.path.is_some());
        // Without a plan the arm never moves; one row is enough.
        if done || plan.path.is_none() {
            break;
        }
        tick += 1;
    }
    let summary = EpisodeSummary::from_rows(&meta, &stepper.rows);
    Ok(EpisodeResult {
        record: EpisodeRecord {
            meta,
            summary,
            rows: stepper.rows,
            degraded_iterations: 0,
        },
        timing: EpisodeTiming {
            first_feasible_seconds: plan.history.first().map(|s| s.elapsed),
            converged_seconds: plan.converged_sample(0.05).map(|s| s.elapsed),
            planning_seconds: plan.elapsed,
            wall_seconds: wall.elapsed().as_secs_f64(),
        },
    })
}
