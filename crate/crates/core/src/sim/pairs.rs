use std::collections::VecDeque;

use super::scenario::PairSpec;
use crate::csdf::{evaluate_flat_batch, CsdfParams, SceneCloud};
use crate::error::{Error, Result};
use crate::kinematics::{self_collision_distance, Configuration, KinematicChain};
use crate::rng::SeedStream;

const MAX_ATTEMPTS: usize = 20_000;

/// Connected components of the free cells of a uniform joint-space grid.
#[derive(Debug, Clone)]
pub struct ConnectivityGrid {
    cells: usize,
    lower: Vec<f64>,
    step: Vec<f64>,
    /// Component label per cell; 0 marks a blocked cell.
    labels: Vec<u32>,
}

impl ConnectivityGrid {
    pub fn build(chain: &KinematicChain, cloud: &SceneCloud, csdf: &CsdfParams, cells: usize) -> Self {
        let dof = chain.dof();
        let lower: Vec<f64> = chain.lower_limits().iter().copied().collect();
        let upper = chain.upper_limits();
        let step: Vec<f64> = (0..dof).map(|i| (upper[i] - lower[i]) / cells as f64).collect();
        let total = cells.pow(dof as u32);
        let mut flat = Vec::with_capacity(total * dof);
        for idx in 0..total {
            let mut rem = idx;
            for i in 0..dof {
                flat.push(lower[i] + (rem % cells) as f64 * step[i] + 0.5 * step[i]);
                rem /= cells;
            }
        }
        let with_self = !chain.capsule_pairs().is_empty();
        let eval = evaluate_flat_batch(chain, &flat, cloud, csdf, None, with_self);
        let free: Vec<bool> = (0..total)
            .map(|k| eval.csdf.as_ref().is_none_or(|c| c[k] > 0.0) && eval.self_clearance[k] > 0.0)
            .collect();
        let mut labels = vec![0u32; total];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for seed in 0..total {
            if !free[seed] || labels[seed] != 0 {
                continue;
            }
            next += 1;
            labels[seed] = next;
            queue.push_back(seed);
            while let Some(c) = queue.pop_front() {
                let mut stride = 1;
                for _ in 0..dof {
                    let coord = (c / stride) % cells;
                    let mut neighbours = [None, None];
                    if coord > 0 {
                        neighbours[0] = Some(c - stride);
                    }
                    if coord + 1 < cells {
                        neighbours[1] = Some(c + stride);
                    }
                    for n in neighbours.into_iter().flatten() {
                        if free[n] && labels[n] == 0 {
                            labels[n] = next;
                            queue.push_back(n);
                        }
                    }
                    stride *= cells;
                }
            }
        }
        Self {
            cells,
            lower,
            step,
            labels,
        }
    }

    pub fn label(&self, q: &Configuration) -> u32 {
        let mut idx = 0;
        let mut stride = 1;
        for (i, v) in q.iter().enumerate() {
            let c = (((v - self.lower[i]) / self.step[i]).floor().max(0.0) as usize).min(self.cells - 1);
            idx += c * stride;
            stride *= self.cells;
        }
        self.labels[idx]
    }
}

/// Rejection sampler for collision-free start/goal pairs.
#[derive(Debug, Clone)]
pub struct PairSampler<'a> {
    chain: &'a KinematicChain,
    cloud: &'a SceneCloud,
    csdf: CsdfParams,
    spec: PairSpec,
    grid: Option<ConnectivityGrid>,
}

impl<'a> PairSampler<'a> {
    pub fn new(chain: &'a KinematicChain, cloud: &'a SceneCloud, csdf: CsdfParams, spec: PairSpec) -> Self {
        let grid = (spec.grid_resolution > 0 && chain.dof() <= 3)
            .then(|| ConnectivityGrid::build(chain, cloud, &csdf, spec.grid_resolution));
        Self {
            chain,
            cloud,
            csdf,
            spec,
            grid,
        }
    }

    pub fn config_ok(&self, q: &Configuration) -> bool {
        let free = self.cloud.is_empty()
            || crate::csdf::csdf(self.chain, q, self.cloud, &self.csdf, None)
                .is_ok_and(|r| r.value > self.spec.clearance);
        free && self_collision_distance(self.chain, q).is_ok_and(|d| d > self.spec.self_clearance)
    }

    /// Pair drawn from the `"pair"` stream of `seeds`.
    pub fn sample(&self, seeds: SeedStream) -> Result<(Configuration, Configuration)> {
        let mut rng = seeds.derive("pair").rng();
        for _ in 0..MAX_ATTEMPTS {
            let a = self.chain.random_configuration(&mut rng, self.spec.limit_margin);
            let b = self.chain.random_configuration(&mut rng, self.spec.limit_margin);
            if (&a - &b).norm() < self.spec.min_distance || !self.config_ok(&a) || !self.config_ok(&b) {
                continue;
            }
            if let Some(g) = &self.grid {
                let la = g.label(&a);
                if la == 0 || la != g.label(&b) {
                    continue;
                }
            }
            return Ok((a, b));
        }
        Err(Error::Infeasible(format!(
            "no valid start/goal pair after {MAX_ATTEMPTS} attempts"
        )))
    }
}
