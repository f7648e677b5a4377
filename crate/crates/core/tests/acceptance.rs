//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`); the process fails if any
//! criterion fails.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ramp_core::cli::{run_benchmark, BenchmarkConfig, BENCH_RRT_ITERATIONS};
use ramp_core::csdf::{csdf, csdf_gradient, CsdfParams, SceneCloud};
use ramp_core::follower::{
    constraint_angle, constraint_gradient_analytic, constraint_gradient_fd, potential,
    velocity_command, ConstraintSpec, DhMethod, EeAxis, FollowerParams,
};
use ramp_core::kinematics::KinematicChain;
use ramp_core::planner::{
    closest_point_on_polyline, compute_weights, init_hypothesis, mppi_iterate, rollout_cost,
    sample_rollouts, shift_hypothesis, Covariance, MppiParams, ProposedTrajectory, RolloutBatch,
    TrajectoryHypothesis,
};
use ramp_core::rng::SeedStream;
use ramp_core::sim::{
    compute_metrics, desk_scenes, run_episode, with_crossing_obstacle, EpisodeResult, EpisodeSetup,
    EpisodeSummary, Method, Mode, ObstacleSpec, PairSpec, RunConfig, Scenario, Shape,
};

use common::{dense_csdf, oracle_frames, planar, rel_err, spatial3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            Vector3::new(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(-half..half),
            )
        })
        .collect()
}

fn central_diff(n: usize, h: f64, q: &DVector<f64>, f: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let mut a = q.clone();
            let mut b = q.clone();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        }),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

// 1. C-SDF against the dense distance matrix, zero tolerance.
fn csdf_exactness() -> Outcome {
    let params = CsdfParams::default();
    let chains = [
        spatial3(),
        KinematicChain::bundled("spatial7").unwrap(),
        KinematicChain::bundled("planar3").unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut exact = 0;
    let total = 1000;
    for i in 0..total {
        let chain = &chains[i % chains.len()];
        let n = rng.random_range(1..500);
        let pts = random_points(&mut rng, n, 1.0);
        let cloud = SceneCloud::from_points(&pts).unwrap();
        let q = chain.random_configuration(&mut rng, 0.0);
        let cps = chain.generate_control_points(&q, None).unwrap();
        let expect = dense_csdf(&cps.points, &pts, params.rho, params.r);
        if csdf(chain, &q, &cloud, &params, None).unwrap().value == expect {
            exact += 1;
        }
    }
    outcome(exact == total, format!("{exact}/{total} bit-exact"))
}

/// Gap between the best and second-best control/scene pair distances.
fn witness_margin(chain: &KinematicChain, q: &DVector<f64>, pts: &[Vector3<f64>]) -> f64 {
    let cps = chain.generate_control_points(q, None).unwrap();
    let mut d: Vec<f64> = cps
        .points
        .iter()
        .flat_map(|c| pts.iter().map(move |s| (c - s).norm()))
        .collect();
    d.sort_by(f64::total_cmp);
    d[1] - d[0]
}

fn oracle_h(chain: &KinematicChain, q: &DVector<f64>, spec: &ConstraintSpec) -> f64 {
    let m = oracle_frames(chain, q)[chain.ee_frame()];
    let col = match spec.ee_axis {
        EeAxis::X => 0,
        EeAxis::Y => 1,
        EeAxis::Z => 2,
    };
    let e = Vector3::new(m[0][col], m[1][col], m[2][col]);
    e.dot(&spec.world()).clamp(-1.0, 1.0).acos().powi(2)
}

// 2. Analytic derivatives against central differences at 100 smooth states each.
fn gradient_correctness() -> Outcome {
    let tol = 1e-4;
    let chain = KinematicChain::bundled("spatial7").unwrap();
    let dof = chain.dof();
    let params = CsdfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);

    let mut worst_grad: f64 = 0.0;
    let mut n = 0;
    while n < 100 {
        let pts = random_points(&mut rng, 40, 0.8);
        let cloud = SceneCloud::from_points(&pts).unwrap();
        let q = chain.random_configuration(&mut rng, 0.01);
        if witness_margin(&chain, &q, &pts) <= 1e-3 {
            continue;
        }
        let (g, _) = csdf_gradient(&chain, &q, &cloud, &params, None).unwrap();
        let fd = central_diff(dof, 1e-7, &q, |x| csdf(&chain, x, &cloud, &params, None).unwrap().value);
        let err = if fd.norm() < 1e-6 { g.norm() } else { rel_err(&g, &fd) };
        worst_grad = worst_grad.max(err);
        n += 1;
    }

    let mut worst_jac: f64 = 0.0;
    for _ in 0..100 {
        let q = chain.random_configuration(&mut rng, 0.01);
        let jacs = chain.control_point_jacobians(&q, None).unwrap();
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..dof {
            let mut a = q.clone();
            let mut b = q.clone();
            a[i] += h;
            b[i] -= h;
            let pa = chain.generate_control_points(&a, None).unwrap().points;
            let pb = chain.generate_control_points(&b, None).unwrap().points;
            for (k, jac) in jacs.iter().enumerate() {
                let col = (pa[k] - pb[k]) / (2.0 * h);
                num += (jac.column(i) - col).norm_squared();
                den += col.norm_squared();
            }
        }
        worst_jac = worst_jac.max(num.sqrt() / den.sqrt().max(1e-12));
    }

    let planar3 = KinematicChain::bundled("planar3").unwrap();
    let fparams = FollowerParams::default();
    let desk = SceneCloud::from_points(&[
        Vector3::new(0.45, 0.3, 0.0),
        Vector3::new(-0.2, 0.55, 0.0),
        Vector3::new(0.1, -0.6, 0.0),
    ])
    .unwrap();
    let mut worst_cmd: f64 = 0.0;
    let mut n = 0;
    while n < 100 {
        let q = planar3.random_configuration(&mut rng, 0.05);
        let target = planar3.random_configuration(&mut rng, 0.05);
        let res = csdf(&planar3, &q, &desk, &params, None).unwrap();
        if res.value <= 0.0 {
            continue;
        }
        // Skip states where the witness pair switches inside the stencil.
        let h = 1e-6;
        let stable = (0..3).all(|i| {
            [h, -h].iter().all(|dh| {
                let mut a = q.clone();
                a[i] += dh;
                csdf(&planar3, &a, &desk, &params, None).unwrap().witness_control == res.witness_control
            })
        });
        if !stable {
            continue;
        }
        let (grad, _) = csdf_gradient(&planar3, &q, &desk, &params, None).unwrap();
        let u = velocity_command(&q, &target, res.value, Some(&grad), &fparams);
        let fd = central_diff(3, h, &q, |x| {
            let c = csdf(&planar3, x, &desk, &params, None).unwrap().value;
            potential(x, &target, c, &fparams)
        });
        worst_cmd = worst_cmd.max(rel_err(&u, &(fd * -fparams.k)));
        n += 1;
    }

    let mut worst_dh: f64 = 0.0;
    let mut n = 0;
    while n < 100 {
        let spec = ConstraintSpec {
            active: true,
            ee_axis: if n % 2 == 0 { EeAxis::Z } else { EeAxis::X },
            world_axis: [0.0, 0.0, 1.0],
            dh_method: DhMethod::Analytic,
        };
        let q = chain.random_configuration(&mut rng, 0.05);
        let theta = oracle_h(&chain, &q, &spec).sqrt();
        if !(0.05..PI - 0.05).contains(&theta) {
            continue;
        }
        let fd = central_diff(dof, 1e-6, &q, |x| oracle_h(&chain, x, &spec));
        let a = rel_err(&constraint_gradient_analytic(&chain, &q, &spec).unwrap(), &fd);
        let b = rel_err(&constraint_gradient_fd(&chain, &q, &spec).unwrap(), &fd);
        worst_dh = worst_dh.max(a).max(b);
        n += 1;
    }

    let pass = [worst_grad, worst_jac, worst_cmd, worst_dh].iter().all(|e| *e <= tol);
    outcome(
        pass,
        format!(
            "max rel err: csdf grad {worst_grad:.1e}, jacobians {worst_jac:.1e}, command {worst_cmd:.1e}, Dh {worst_dh:.1e} (tol {tol:.0e})"
        ),
    )
}

fn random_batch(rng: &mut ChaCha8Rng, hyp: &TrajectoryHypothesis, rollouts: usize) -> RolloutBatch {
    let d = hyp.start().len();
    let h = hyp.horizon();
    let mut states = Vec::new();
    for _ in 0..rollouts {
        for _ in 0..=h {
            states.extend_from_slice(hyp.start().as_slice());
        }
    }
    RolloutBatch {
        rollouts,
        horizon: h,
        dof: d,
        displacements: (0..rollouts * h * d).map(|_| rng.random_range(-0.05..0.05)).collect(),
        states,
        costs: (0..rollouts).map(|_| rng.random_range(0.0..300.0)).collect(),
        weights: vec![0.0; rollouts],
        normalizer: 0.0,
        min_csdf: vec![f64::INFINITY; rollouts],
    }
}

// 3. Weight normalization, shift invariance, zero-covariance degeneracy and
// per-seed determinism over 50 randomized batches.
fn mppi_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cloud = SceneCloud::from_points(&[Vector3::new(0.3, 0.4, 0.0)]).unwrap();
    let (mut norm_ok, mut shift_ok, mut degen_ok, mut det_ok) = (0, 0, 0, 0);
    let batches = 50;
    for b in 0..batches {
        let dof = rng.random_range(2..8);
        let links: Vec<f64> = (0..dof).map(|_| rng.random_range(0.1..0.3)).collect();
        let chain = planar(&links, 1);
        let start = DVector::from_fn(dof, |_, _| rng.random_range(-1.0..1.0));
        let goal = DVector::from_fn(dof, |_, _| rng.random_range(-1.0..1.0));
        let params = MppiParams {
            rollouts: rng.random_range(5..200),
            temperature: rng.random_range(0.2..5.0),
            ..MppiParams::default()
        };
        let cov = params.covariance.resolve(dof).unwrap();
        let hyp = init_hypothesis(&start, &goal, params.spacing);

        let mut batch = random_batch(&mut rng, &hyp, params.rollouts);
        compute_weights(&hyp, &mut batch, &params, &cov);
        let w = batch.weights.clone();
        if (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9 {
            norm_ok += 1;
        }
        let shift = rng.random_range(-1e3..1e3);
        batch.costs.iter_mut().for_each(|c| *c += shift);
        compute_weights(&hyp, &mut batch, &params, &cov);
        if w.iter().zip(&batch.weights).all(|(a, c)| (a - c).abs() <= 1e-9) {
            shift_ok += 1;
        }

        let tiny = MppiParams {
            covariance: Covariance::Isotropic(1e-20),
            ..params.clone()
        };
        let tiny_cov = tiny.covariance.resolve(dof).unwrap();
        let mut sampled = sample_rollouts(&hyp, &tiny, &tiny_cov, &chain, &mut ChaCha8Rng::seed_from_u64(b));
        let samples_ok = (0..sampled.rollouts).all(|j| {
            (0..sampled.horizon).all(|t| (v(sampled.displacement(j, t)) - &hyp.displacements[t]).amax() <= 1e-8)
        });
        rollout_cost(&mut sampled, &cloud, &chain, &tiny, &CsdfParams::default(), &goal, None, false);
        let (posterior, _) = mppi_iterate(&hyp, &mut sampled, &tiny, &tiny_cov, &chain, &goal, 1, 0.0);
        let posterior_ok = posterior
            .iter()
            .zip(&hyp.displacements)
            .all(|(p, d)| (p - d).amax() <= 1e-8);
        if samples_ok && posterior_ok {
            degen_ok += 1;
        }

        let seeded = MppiParams { seed: b, ..params.clone() };
        let run = || {
            let mut r = ChaCha8Rng::seed_from_u64(seeded.seed);
            let mut s = sample_rollouts(&hyp, &seeded, &cov, &chain, &mut r);
            rollout_cost(&mut s, &cloud, &chain, &seeded, &CsdfParams::default(), &goal, None, false);
            let (post, traj) = mppi_iterate(&hyp, &mut s, &seeded, &cov, &chain, &goal, 1, 0.0);
            (s, post, traj)
        };
        if run() == run() {
            det_ok += 1;
        }
    }
    let pass = [norm_ok, shift_ok, degen_ok, det_ok].iter().all(|&c| c == batches);
    outcome(
        pass,
        format!(
            "normalized {norm_ok}/{batches}, shift-invariant {shift_ok}/{batches}, zero-covariance {degen_ok}/{batches}, deterministic {det_ok}/{batches}"
        ),
    )
}

fn dense_projection(wps: &[DVector<f64>], q: &DVector<f64>, step: f64) -> DVector<f64> {
    let mut best = wps[0].clone();
    let mut best_d = f64::INFINITY;
    for pair in wps.windows(2) {
        let samples = (((&pair[1] - &pair[0]).norm() / step).ceil() as usize).max(1);
        for k in 0..=samples {
            let p = &pair[0] + (&pair[1] - &pair[0]) * (k as f64 / samples as f64);
            let d = (q - &p).norm();
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
    }
    best
}

// 4. Shifting: projection against a dense oracle and on-trajectory subsets.
fn shifting_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let spacing = 0.1;
    let oracle_step = 1e-4;
    let (mut proj_ok, mut subset_ok) = (0, 0);
    let pairs = 200;
    for _ in 0..pairs {
        let dof = rng.random_range(2..8);
        let n = rng.random_range(2..8);
        let wps: Vec<DVector<f64>> =
            (0..n).map(|_| DVector::from_fn(dof, |_, _| rng.random_range(-1.0..1.0))).collect();
        let traj = ProposedTrajectory { waypoints: wps.clone(), generation: 1, created_at: 0.0 };

        let q = DVector::from_fn(dof, |_, _| rng.random_range(-1.5..1.5));
        let (_, _, closest) = closest_point_on_polyline(&wps, &q);
        let oracle = dense_projection(&wps, &q, oracle_step);
        let gap = (&q - &oracle).norm() - (&q - &closest).norm();
        let hyp = shift_hypothesis(&traj, &q, spacing);
        // The shifted hypothesis leaves q and passes through q_closest.
        let through = hyp.waypoints.iter().any(|w| (w - &closest).norm() <= spacing);
        if (-1e-12..=oracle_step).contains(&gap) && (&closest - &oracle).norm() <= spacing && through {
            proj_ok += 1;
        }

        let seg = rng.random_range(0..n - 1);
        let t: f64 = rng.random_range(0.0..1.0);
        let on = &wps[seg] + (&wps[seg + 1] - &wps[seg]) * t;
        let hyp = shift_hypothesis(&traj, &on, spacing);
        let hausdorff = hyp
            .waypoints
            .iter()
            .map(|p| (p - closest_point_on_polyline(&wps, p).2).norm())
            .fold(0.0, f64::max);
        let ends_at_goal = hyp.waypoints.last() == wps.last();
        let starts_at_q = hyp.waypoints[0] == on;
        if hausdorff <= spacing && ends_at_goal && starts_at_q {
            subset_ok += 1;
        }
    }
    outcome(
        proj_ok == pairs && subset_ok == pairs,
        format!("projection {proj_ok}/{pairs}, on-trajectory subset {subset_ok}/{pairs}"),
    )
}

fn desk_setups(scenes: &[Scenario], seeds: std::ops::Range<u64>) -> Vec<(EpisodeSetup, u64)> {
    let csdf = CsdfParams::default();
    scenes
        .iter()
        .flat_map(|s| seeds.clone().map(move |seed| (s, seed)))
        .map(|(s, seed)| (EpisodeSetup::new(s, &csdf, seed).unwrap(), seed))
        .collect()
}

fn summaries(results: &[EpisodeResult]) -> Vec<EpisodeSummary> {
    results.iter().map(|r| r.record.summary.clone()).collect()
}

// 5. Static desk benchmark: 5 scenes x 20 pairs.
fn static_benchmark() -> Outcome {
    let config = RunConfig::default();
    let setups = desk_setups(&desk_scenes(5, 7), 0..20);
    let ramp: Vec<EpisodeResult> = setups
        .iter()
        .map(|(s, seed)| run_episode(s, Method::Ramp, &config, *seed, Mode::Deterministic).unwrap())
        .collect();
    // RRT* keeps its wall-clock budget here: the criterion is about time.
    let rrt: Vec<EpisodeResult> = setups
        .iter()
        .map(|(s, seed)| run_episode(s, Method::RrtStar, &config, *seed, Mode::Deterministic).unwrap())
        .collect();
    let ramp_metrics = compute_metrics(&summaries(&ramp), None, Some(&summaries(&rrt))).unwrap();
    // Episodes that never produced a feasible trajectory count as infinitely slow.
    let ramp_first = median(
        ramp.iter()
            .map(|r| r.timing.first_feasible_seconds.unwrap_or(f64::INFINITY))
            .collect(),
    );
    let rrt_converged = median(rrt.iter().filter_map(|r| r.timing.converged_seconds).collect());
    let ratio = ramp_metrics.normalized_length.unwrap_or(f64::NAN);
    let success = ramp_metrics.success_rate;
    let pass = success >= 0.95 && ramp_first <= rrt_converged / 3.0 && (0.85..=1.35).contains(&ratio);
    outcome(
        pass,
        format!(
            "success {success:.2} (>= 0.95); median first feasible {ramp_first:.3} s vs RRT* converged {rrt_converged:.3} s (speedup {:.1}x, need >= 3x); length ratio {ratio:.3} (in [0.85, 1.35])",
            rrt_converged / ramp_first
        ),
    )
}

// 6. Dynamic benchmark: one crossing obstacle per episode, 50 episodes.
fn dynamic_benchmark() -> Outcome {
    let mut config = RunConfig::default();
    config.rrt.max_iterations = Some(BENCH_RRT_ITERATIONS);
    let scenes = desk_scenes(5, 7);
    let mut ramp = Vec::new();
    let mut rrt = Vec::new();
    for (setup, seed) in desk_setups(&scenes, 0..10) {
        let stream = SeedStream::new(seed).derive("scenario").derive(&setup.scenario.name);
        let dynamic = with_crossing_obstacle(
            &setup.scenario,
            &setup.chain,
            &setup.start,
            &setup.goal,
            &config.csdf,
            &Default::default(),
            setup.scenario.pairs.clearance,
            stream,
        )
        .unwrap();
        let setup = EpisodeSetup::new(&dynamic, &config.csdf, seed).unwrap();
        ramp.push(run_episode(&setup, Method::Ramp, &config, seed, Mode::Deterministic).unwrap());
        rrt.push(run_episode(&setup, Method::RrtStar, &config, seed, Mode::Deterministic).unwrap());
    }
    let r = compute_metrics(&summaries(&ramp), None, None).unwrap();
    let b = compute_metrics(&summaries(&rrt), None, None).unwrap();
    let pass = r.collision_free_rate >= 0.90
        && b.collision_free_rate < r.collision_free_rate
        && r.safety_cm_mean > b.safety_cm_mean;
    outcome(
        pass,
        format!(
            "{} episodes; collision-free RAMP {:.0}% vs RRT* {:.0}%; clearance RAMP {:.2} cm vs RRT* {:.2} cm",
            ramp.len(),
            100.0 * r.collision_free_rate,
            100.0 * b.collision_free_rate,
            r.safety_cm_mean,
            b.safety_cm_mean
        ),
    )
}

// 7. Closed-loop safety on static fixtures: C-SDF stays non-negative.
fn closed_loop_safety() -> Outcome {
    let config = RunConfig::default();
    let mut scenes = desk_scenes(5, 11);
    for s in &mut scenes {
        // 2000 ticks at dt = 0.01 s.
        s.timeout = 2000.0 * config.follower.dt;
    }
    let mut safe = 0;
    let mut worst = f64::INFINITY;
    let runs = 20;
    for k in 0..runs {
        let seed = 100 + k as u64;
        let setup = EpisodeSetup::new(&scenes[k % scenes.len()], &config.csdf, seed).unwrap();
        let rec = run_episode(&setup, Method::Ramp, &config, seed, Mode::Deterministic).unwrap().record;
        let min = rec.rows.iter().filter_map(|r| r.csdf).fold(f64::INFINITY, f64::min);
        worst = worst.min(min);
        if min >= 0.0 && !rec.summary.collision {
            safe += 1;
        }
    }
    outcome(safe == runs, format!("{safe}/{runs} runs with min C-SDF >= 0 (lowest {worst:.4} m)"))
}

/// Gradient descent on h from a random configuration until the constrained
/// axes are aligned.
fn aligned_configuration(chain: &KinematicChain, spec: &ConstraintSpec, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let mut q = chain.random_configuration(rng, 0.3);
        for _ in 0..5000 {
            if constraint_angle(chain, &q, spec).unwrap() < 1e-4 {
                return q;
            }
            let g = constraint_gradient_analytic(chain, &q, spec).unwrap();
            q = chain.clamp_to_joint_limits(&(&q - g * 0.1));
        }
    }
}

// 8. Orientation constraint: descent at every tick and terminal alignment.
fn constraint_handling() -> Outcome {
    let chain = KinematicChain::bundled("spatial7").unwrap();
    let spec = ConstraintSpec {
        active: true,
        ee_axis: EeAxis::Z,
        world_axis: [0.0, 0.0, -1.0],
        dh_method: DhMethod::Analytic,
    };
    let mut config = RunConfig::default();
    config.follower.constraint = spec.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let episodes = 5;
    let (mut descent_ok, mut terminal_ok) = (0, 0);
    let mut worst_dev: f64 = 0.0;
    let mut worst_dot = f64::NEG_INFINITY;
    for k in 0..episodes {
        let goal = aligned_configuration(&chain, &spec, &mut rng);
        let start = loop {
            let dq = DVector::from_fn(chain.dof(), |_, _| rng.random_range(-0.4..0.4));
            let q = chain.clamp_to_joint_limits(&(&goal + dq));
            let angle = constraint_angle(&chain, &q, &spec).unwrap().to_degrees();
            if (10.0..=60.0).contains(&angle) {
                break q;
            }
        };
        let scenario = Scenario {
            name: format!("constraint_{k}"),
            robot: "spatial7".into(),
            obstacles: vec![ObstacleSpec {
                id: 1,
                shape: Shape::Sphere { radius: 0.1 },
                center: [2.0, 2.0, 2.0],
                rpy: [0.0; 3],
                density: 2000.0,
            }],
            moving_obstacle: None,
            start: Some(start.iter().copied().collect()),
            goal: Some(goal.iter().copied().collect()),
            pairs: PairSpec::default(),
            timeout: 20.0,
            perception_period: 0.05,
            sampling_seed: k,
            collision_margin: 0.0,
            base_dir: None,
        };
        let setup = EpisodeSetup::new(&scenario, &config.csdf, k).unwrap();
        let rec = run_episode(&setup, Method::Ramp, &config, k, Mode::Deterministic).unwrap().record;
        let max_dot = rec.rows.iter().filter_map(|r| r.dh_dot_u).fold(f64::NEG_INFINITY, f64::max);
        worst_dot = worst_dot.max(max_dot);
        if max_dot <= 0.0 {
            descent_ok += 1;
        }
        let last = v(&rec.rows.last().unwrap().q);
        let dev = (constraint_angle(&chain, &last, &spec).unwrap() - constraint_angle(&chain, &goal, &spec).unwrap())
            .abs()
            .to_degrees();
        worst_dev = worst_dev.max(dev);
        if dev <= 2.0 {
            terminal_ok += 1;
        }
    }
    outcome(
        descent_ok == episodes && terminal_ok == episodes,
        format!(
            "Dh.u <= 0 in {descent_ok}/{episodes} episodes (max {worst_dot:.2e}); terminal deviation <= 2 deg in {terminal_ok}/{episodes} (worst {worst_dev:.3} deg)"
        ),
    )
}

// 9. Benchmark CSV body is identical across re-runs and thread counts.
fn bench_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    for mut s in desk_scenes(2, 7) {
        s.timeout = 2.0;
        fs::write(dir.path().join(format!("{}.json", s.name)), s.to_json()).unwrap();
    }
    let config_path = dir.path().join("bench.json");
    fs::write(
        &config_path,
        r#"{"scenarios": "desk_*.json", "methods": ["ramp", "greedy_mppi", "rrt_star"], "seeds": [0, 1, 2],
            "run": {"rrt": {"max_iterations": 500}}, "crossing": {}}"#,
    )
    .unwrap();
    let config = BenchmarkConfig::from_file(&config_path).unwrap();
    let runs: Vec<(usize, String)> = [1, 1, 2, 4]
        .iter()
        .map(|&threads| (threads, run_benchmark(&config, threads).unwrap().csv))
        .collect();
    let identical = runs.iter().all(|(_, csv)| *csv == runs[0].1);
    let rows = runs[0].1.lines().count() - 1;
    outcome(identical, format!("{rows} CSV rows; identical across threads 1, 1, 2, 4: {identical}"))
}

fn main() {
    let criteria: [(&str, f64, fn() -> Outcome); 9] = [
        ("C-SDF exactness", 30.0, csdf_exactness),
        ("gradient correctness", 60.0, gradient_correctness),
        ("MPPI algebra", 30.0, mppi_algebra),
        ("shifting contract", 30.0, shifting_contract),
        ("static benchmark", 1200.0, static_benchmark),
        ("dynamic benchmark", 1200.0, dynamic_benchmark),
        ("closed-loop safety", 300.0, closed_loop_safety),
        ("constraint handling", 300.0, constraint_handling),
        ("benchmark determinism", f64::INFINITY, bench_determinism),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let started = Instant::now();
        let out = run();
        let secs = started.elapsed().as_secs_f64();
        let in_time = secs < *budget;
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let limit = if budget.is_finite() { format!(" < {budget:.0} s") } else { String::new() };
        println!(
            "criterion {n} [{}] {name}: {} ({secs:.1} s{limit})",
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
