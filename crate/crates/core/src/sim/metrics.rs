use serde::{Deserialize, Serialize};

use super::episode::{EpisodeSummary, Method};
use crate::error::{Error, Result};

/// Aggregate over the episodes of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub method: Method,
    pub episodes: usize,
    pub success_rate: f64,
    pub collision_free_rate: f64,
    pub planning_time_mean: Option<f64>,
    pub planning_time_std: Option<f64>,
    /// Mean of executed length divided by the paired baseline length, over
    /// pairs where both succeeded.
    pub normalized_length: Option<f64>,
    /// Mean and standard deviation of the episode-min clearance (centimeters).
    pub safety_cm_mean: f64,
    pub safety_cm_std: f64,
    /// Mean over episodes of the per-tick mean clearance (centimeters).
    pub safety_tick_mean_cm: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summarizes `records`. `planning_times` (one per record, `None` when no
/// feasible plan was found) feed the timing columns; `baseline` records are
/// paired with `records` by position for length normalization.
pub fn compute_metrics(
    records: &[EpisodeSummary],
    planning_times: Option<&[Option<f64>]>,
    baseline: Option<&[EpisodeSummary]>,
) -> Result<BenchmarkSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("no episodes to summarize"))?;
    let n = records.len() as f64;
    let successes = records.iter().filter(|r| r.success).count() as f64;
    let collision_free = records.iter().filter(|r| !r.collision).count() as f64;
    let (planning_time_mean, planning_time_std) = match planning_times {
        Some(times) => {
            let found: Vec<f64> = times.iter().flatten().copied().collect();
            if found.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&found);
                (Some(m), Some(s))
            }
        }
        None => (None, None),
    };
    let normalized_length = baseline.and_then(|base| {
        let ratios: Vec<f64> = records
            .iter()
            .zip(base)
            .filter(|(r, b)| r.success && b.success && b.executed_length > 0.0)
            .map(|(r, b)| r.executed_length / b.executed_length)
            .collect();
        (!ratios.is_empty()).then(|| mean_std(&ratios).0)
    });
    let mins: Vec<f64> = records.iter().map(|r| r.min_clearance * 100.0).collect();
    let (safety_cm_mean, safety_cm_std) = mean_std(&mins);
    let safety_tick_mean_cm = records.iter().map(|r| r.mean_clearance * 100.0).sum::<f64>() / n;
    Ok(BenchmarkSummary {
        method: first.method,
        episodes: records.len(),
        success_rate: successes / n,
        collision_free_rate: collision_free / n,
        planning_time_mean,
        planning_time_std,
        normalized_length,
        safety_cm_mean,
        safety_cm_std,
        safety_tick_mean_cm,
    })
}
