//! RRT* baseline planner using the C-SDF as its collision checker.

use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csdf::{is_collision_free, CsdfParams, SceneCloud};
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, KinematicChain};
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtParams {
    /// Wall-clock budget (seconds).
    pub max_time: f64,
    /// Optional iteration budget; when set the run is reproducible
    /// regardless of machine speed.
    pub max_iterations: Option<usize>,
    pub step_size: f64,
    pub goal_bias: f64,
    pub rewire_radius: f64,
    /// Edge sampling resolution (radians per sample).
    pub check_resolution: f64,
    pub seed: u64,
}

impl Default for RrtParams {
    fn default() -> Self {
        Self {
            max_time: 5.0,
            max_iterations: None,
            step_size: 0.3,
            goal_bias: 0.05,
            rewire_radius: 0.6,
            check_resolution: 0.02,
            seed: 0,
        }
    }
}

impl RrtParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.goal_bias) {
            Err(Error::invalid("goal bias must lie in [0, 1]"))
        } else if !(self.step_size > 0.0 && self.check_resolution > 0.0 && self.rewire_radius > 0.0) {
            Err(Error::invalid("step size, rewire radius and check resolution must be positive"))
        } else if !(self.max_time > 0.0) && self.max_iterations.is_none() {
            Err(Error::invalid("either a time or an iteration budget is required"))
        } else {
            Ok(())
        }
    }
}

/// Search tree with cost-to-come and child lists for cost propagation.
#[derive(Debug, Clone, Default)]
pub struct Tree {
    pub nodes: Vec<Configuration>,
    pub parents: Vec<Option<usize>>,
    pub costs: Vec<f64>,
    pub children: Vec<Vec<usize>>,
}

impl Tree {
    fn with_root(root: Configuration) -> Self {
        Self {
            nodes: vec![root],
            parents: vec![None],
            costs: vec![0.0],
            children: vec![Vec::new()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn add(&mut self, q: Configuration, parent: usize, cost: f64) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(q);
        self.parents.push(Some(parent));
        self.costs.push(cost);
        self.children.push(Vec::new());
        self.children[parent].push(idx);
        idx
    }

    fn reparent(&mut self, node: usize, parent: usize, cost: f64) {
        if let Some(old) = self.parents[node] {
            self.children[old].retain(|c| *c != node);
        }
        self.parents[node] = Some(parent);
        self.children[parent].push(node);
        let delta = cost - self.costs[node];
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            self.costs[n] += delta;
            stack.extend(self.children[n].iter().copied());
        }
    }

    /// Nodes from the root to `node`.
    pub fn path_to(&self, node: usize) -> Vec<Configuration> {
        let mut path = vec![self.nodes[node].clone()];
        let mut cur = node;
        while let Some(p) = self.parents[cur] {
            path.push(self.nodes[p].clone());
            cur = p;
        }
        path.reverse();
        path
    }

    /// Sum of edge lengths along the parent chain (independent of `costs`).
    pub fn chain_length(&self, node: usize) -> f64 {
        let mut len = 0.0;
        let mut cur = node;
        while let Some(p) = self.parents[cur] {
            len += (&self.nodes[cur] - &self.nodes[p]).norm();
            cur = p;
        }
        len
    }
}

/// One improvement of the best goal-path cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub iteration: usize,
    pub elapsed: f64,
    /// Collision-check samples evaluated so far.
    pub checks: u64,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct RrtResult {
    pub path: Option<Vec<Configuration>>,
    pub cost: f64,
    pub history: Vec<CostSample>,
    pub iterations: usize,
    pub checks: u64,
    pub elapsed: f64,
    pub tree: Tree,
}

impl RrtResult {
    /// First history entry within `fraction` of the final cost.
    pub fn converged_sample(&self, fraction: f64) -> Option<CostSample> {
        let final_cost = self.history.last()?.cost;
        self.history
            .iter()
            .find(|s| s.cost <= final_cost * (1.0 + fraction))
            .copied()
    }
}

pub fn path_length(path: &[Configuration]) -> f64 {
    path.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
}

struct Checker<'a> {
    chain: &'a KinematicChain,
    cloud: &'a SceneCloud,
    params: &'a CsdfParams,
    resolution: f64,
    scratch: Vec<Vector3<f64>>,
    checks: u64,
}

impl Checker<'_> {
    fn state_free(&mut self, q: &Configuration) -> bool {
        self.checks += 1;
        self.cloud.is_empty()
            || is_collision_free(self.chain, q.as_slice(), self.cloud, self.params, None, &mut self.scratch)
    }

    /// Samples `(a, b]` at the check resolution; `a` is assumed free.
    fn edge_free(&mut self, a: &Configuration, b: &Configuration) -> bool {
        let len = (b - a).norm();
        let n = ((len / self.resolution).ceil() as usize).max(1);
        // Check the far end first, then bisect-order interior samples so
        // blocked edges fail early.
        let mut order: Vec<usize> = Vec::with_capacity(n);
        order.push(n);
        let mut step = n.next_power_of_two();
        while step > 1 {
            let half = step / 2;
            let mut k = half;
            while k < n {
                if k % step != 0 {
                    order.push(k);
                }
                k += step;
            }
            step = half;
        }
        for k in order {
            let t = k as f64 / n as f64;
            if !self.state_free(&(a * (1.0 - t) + b * t)) {
                return false;
            }
        }
        true
    }
}

/// Whether every sample of the straight edge at `resolution` has C-SDF > 0.
pub fn edge_is_free(
    chain: &KinematicChain,
    cloud: &SceneCloud,
    params: &CsdfParams,
    a: &Configuration,
    b: &Configuration,
    resolution: f64,
) -> bool {
    let mut c = Checker {
        chain,
        cloud,
        params,
        resolution,
        scratch: Vec::new(),
        checks: 0,
    };
    c.state_free(a) && c.edge_free(a, b)
}

/// Anytime RRT* from `q_start` to `q_goal`.
pub fn rrt_star_plan(
    q_start: &Configuration,
    q_goal: &Configuration,
    cloud: &SceneCloud,
    chain: &KinematicChain,
    csdf_params: &CsdfParams,
    params: &RrtParams,
) -> Result<RrtResult> {
    params.validate()?;
    chain.check_dimension(q_start)?;
    chain.check_dimension(q_goal)?;
    let started = Instant::now();
    let mut checker = Checker {
        chain,
        cloud,
        params: csdf_params,
        resolution: params.check_resolution,
        scratch: Vec::new(),
        checks: 0,
    };
    if !checker.state_free(q_start) {
        return Err(Error::Infeasible("start configuration is in collision".into()));
    }
    if !checker.state_free(q_goal) {
        return Err(Error::Infeasible("goal configuration is in collision".into()));
    }
    let mut tree = Tree::with_root(q_start.clone());
    if q_start == q_goal {
        return Ok(RrtResult {
            path: Some(vec![q_start.clone()]),
            cost: 0.0,
            history: vec![CostSample {
                iteration: 0,
                elapsed: 0.0,
                checks: checker.checks,
                cost: 0.0,
            }],
            iterations: 0,
            checks: checker.checks,
            elapsed: started.elapsed().as_secs_f64(),
            tree,
        });
    }

    let mut rng = SeedStream::new(params.seed).derive("rrt_star").rng();
    let mut goal_node: Option<usize> = None;
    let mut history: Vec<CostSample> = Vec::new();
    let mut iterations = 0;
    let budget_left = |it: usize, started: &Instant| match params.max_iterations {
        Some(max) => it < max,
        None => started.elapsed().as_secs_f64() < params.max_time,
    };

    while budget_left(iterations, &started) {
        iterations += 1;
        let sample = if rng.random::<f64>() < params.goal_bias {
            q_goal.clone()
        } else {
            chain.random_configuration(&mut rng, 0.0)
        };
        let nearest = nearest_node(&tree, &sample);
        let from = &tree.nodes[nearest];
        let dist = (&sample - from).norm();
        if dist == 0.0 {
            continue;
        }
        let new_q = if dist > params.step_size {
            from + (&sample - from) * (params.step_size / dist)
        } else {
            sample
        };
        let is_goal = new_q == *q_goal;
        if is_goal && goal_node.is_some() {
            // Existing goal node: try to improve it through the near set.
            improve_node(&mut tree, goal_node.unwrap(), params.rewire_radius, &mut checker);
        } else {
            let near = near_nodes(&tree, &new_q, params.rewire_radius, nearest);
            // Lazy choose-parent: cheapest candidate whose edge is free.
            let mut candidates: Vec<(f64, usize)> = near
                .iter()
                .map(|&i| (tree.costs[i] + (&new_q - &tree.nodes[i]).norm(), i))
                .collect();
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut chosen = None;
            for (cost, i) in candidates {
                if checker.edge_free(&tree.nodes[i].clone(), &new_q) {
                    chosen = Some((cost, i));
                    break;
                }
            }
            let Some((cost, parent)) = chosen else {
                continue;
            };
            let new_idx = tree.add(new_q.clone(), parent, cost);
            // Rewire neighbours through the new node.
            for &i in &near {
                if i == parent {
                    continue;
                }
                let via = cost + (&new_q - &tree.nodes[i]).norm();
                if via < tree.costs[i] && !is_ancestor(&tree, i, new_idx) {
                    let target = tree.nodes[i].clone();
                    if checker.edge_free(&new_q, &target) {
                        tree.reparent(i, new_idx, via);
                    }
                }
            }
            if is_goal {
                goal_node = Some(new_idx);
            } else {
                let to_goal = (q_goal - &new_q).norm();
                if to_goal <= params.step_size {
                    let via = tree.costs[new_idx] + to_goal;
                    match goal_node {
                        None => {
                            if checker.edge_free(&new_q, q_goal) {
                                goal_node = Some(tree.add(q_goal.clone(), new_idx, via));
                            }
                        }
                        Some(g) if via < tree.costs[g] => {
                            if checker.edge_free(&new_q, q_goal) {
                                tree.reparent(g, new_idx, via);
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        if let Some(g) = goal_node {
            let c = tree.costs[g];
            if history.last().is_none_or(|s| c < s.cost) {
                history.push(CostSample {
                    iteration: iterations,
                    elapsed: started.elapsed().as_secs_f64(),
                    checks: checker.checks,
                    cost: c,
                });
            }
        }
    }

    let (path, cost) = match goal_node {
        Some(g) => (Some(tree.path_to(g)), tree.costs[g]),
        None => (None, f64::INFINITY),
    };
    Ok(RrtResult {
        path,
        cost,
        history,
        iterations,
        checks: checker.checks,
        elapsed: started.elapsed().as_secs_f64(),
        tree,
    })
}

fn nearest_node(tree: &Tree, q: &Configuration) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, n) in tree.nodes.iter().enumerate() {
        let d = dist_sq(n, q);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn dist_sq(a: &Configuration, b: &Configuration) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nodes within `radius` of `q`, always including `nearest`.
fn near_nodes(tree: &Tree, q: &Configuration, radius: f64, nearest: usize) -> Vec<usize> {
    let r2 = radius * radius;
    let mut out: Vec<usize> = tree
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| dist_sq(n, q) <= r2)
        .map(|(i, _)| i)
        .collect();
    if !out.contains(&nearest) {
        out.push(nearest);
    }
    out
}

fn is_ancestor(tree: &Tree, candidate: usize, node: usize) -> bool {
    let mut cur = Some(node);
    while let Some(c) = cur {
        if c == candidate {
            return true;
        }
        cur = tree.parents[c];
    }
    false
}

fn improve_node(tree: &mut Tree, node: usize, radius: f64, checker: &mut Checker<'_>) {
    let q = tree.nodes[node].clone();
    let near = near_nodes(tree, &q, radius, node);
    let mut best: Option<(f64, usize)> = None;
    for i in near {
        if i == node || is_ancestor(tree, node, i) {
            continue;
        }
        let via = tree.costs[i] + (&q - &tree.nodes[i]).norm();
        if via < tree.costs[node] && best.is_none_or(|(c, _)| via < c) {
            let from = tree.nodes[i].clone();
            if checker.edge_free(&from, &q) {
                best = Some((via, i));
            }
        }
    }
    if let Some((cost, parent)) = best {
        tree.reparent(node, parent, cost);
    }
}
