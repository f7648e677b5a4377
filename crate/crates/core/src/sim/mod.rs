//! Scenario construction, episode orchestration and benchmark metrics.
//!
//! In deterministic mode the generator and follower are stepped by a
//! cooperative scheduler on a fixed interleave (one generator iteration per
//! `interleave` follower ticks, with a generator iteration before the first
//! tick), so identical inputs and seeds give identical records.

mod episode;
mod metrics;
mod pairs;
mod scenario;

pub use episode::{
    run_episode, EpisodeMeta, EpisodeRecord, EpisodeResult, EpisodeRow, EpisodeSetup,
    EpisodeSummary, EpisodeTiming, Method, Mode, Outcome, RunConfig,
};
pub use metrics::{compute_metrics, BenchmarkSummary};
pub use pairs::{ConnectivityGrid, PairSampler};
pub use scenario::{
    build_scene_cloud, desk_scenes, MovingObstacle, ObstacleSpec, PairSpec, Scenario, Scene, Shape,
};

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csdf::{csdf, CsdfParams};
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, KinematicChain};
use crate::rng::SeedStream;

/// Settings for the obstacle added by [`with_crossing_obstacle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossingSpec {
    pub radius: f64,
    pub speed: [f64; 2],
    /// Range of times at which the obstacle passes the crossing point.
    pub crossing_time: [f64; 2],
    pub density: f64,
}

impl Default for CrossingSpec {
    fn default() -> Self {
        Self {
            radius: 0.04,
            speed: [0.1, 0.2],
            crossing_time: [0.6, 1.6],
            density: 1500.0,
        }
    }
}

/// Copy of `scenario` with a cylinder moving at constant velocity in the
/// horizontal plane. Its straight path passes the end-effector position at
/// the midpoint of the joint-space segment from `start` to `goal`, in a
/// random direction, at a random time. Directions that would put the
/// obstacle within `clearance` of the arm at `start` or `goal` at t = 0 are
/// redrawn.
#[allow(clippy::too_many_arguments)]
pub fn with_crossing_obstacle(
    scenario: &Scenario,
    chain: &KinematicChain,
    start: &Configuration,
    goal: &Configuration,
    csdf_params: &CsdfParams,
    spec: &CrossingSpec,
    clearance: f64,
    seed: SeedStream,
) -> Result<Scenario> {
    let mid = (start + goal) * 0.5;
    let poses = chain.forward_kinematics(&mid)?;
    let cross = poses[chain.ee_frame()].translation.vector;
    let mut rng = seed.derive("crossing").rng();
    for _ in 0..200 {
        let angle = rng.random_range(-PI..PI);
        let speed = rng.random_range(spec.speed[0]..spec.speed[1]);
        let tc = rng.random_range(spec.crossing_time[0]..spec.crossing_time[1]);
        let v = Vector3::new(angle.cos(), angle.sin(), 0.0) * speed;
        let c0 = cross - v * tc;
        let obstacle = ObstacleSpec {
            id: 1000,
            shape: Shape::Cylinder {
                radius: spec.radius,
                half_height: 0.03,
            },
            center: [c0.x, c0.y, cross.z],
            rpy: [0.0; 3],
            density: spec.density,
        };
        let mut out = scenario.clone();
        out.moving_obstacle = Some(MovingObstacle {
            obstacle,
            velocity: [v.x, v.y, 0.0],
            start_time: 0.0,
            end_time: None,
        });
        out.start = Some(start.iter().copied().collect());
        out.goal = Some(goal.iter().copied().collect());
        let cloud = build_scene_cloud(&out, 0.0)?;
        let ok = [start, goal]
            .iter()
            .all(|q| csdf(chain, q, &cloud, csdf_params, None).is_ok_and(|r| r.value > clearance));
        if ok {
            return Ok(out);
        }
    }
    Err(Error::Infeasible("could not place a crossing obstacle".into()))
}
