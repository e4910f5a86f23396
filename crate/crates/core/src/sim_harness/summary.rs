//! Converged-metric statistics over seeds.

use super::run::{PerfectSe, ResultRecord};

/// Mean and standard error of the per-seed values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            count: n,
        }
    }

    /// `self ≤ other` up to `k` combined standard errors.
    pub fn le_within(&self, other: &Estimate, k: f64) -> bool {
        self.mean <= other.mean + k * self.stderr.hypot(other.stderr)
    }
}

/// Per-seed mean of `metric` over the last `window` RSs of `user`.
pub fn converged_per_seed(
    records: &[ResultRecord],
    user: usize,
    window: usize,
    metric: impl Fn(&ResultRecord) -> Option<f64>,
) -> Vec<f64> {
    let last = records.iter().map(|r| r.rs_index).max().unwrap_or(0);
    let first = (last + 1).saturating_sub(window);
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .into_iter()
        .filter_map(|s| {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.seed == s && r.user == user && r.rs_index >= first)
                .filter_map(&metric)
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

pub fn converged(
    records: &[ResultRecord],
    user: usize,
    window: usize,
    metric: impl Fn(&ResultRecord) -> Option<f64>,
) -> Estimate {
    Estimate::from_samples(&converged_per_seed(records, user, window, metric))
}

pub fn converged_perfect(perfect: &[PerfectSe], window: usize, zf: bool) -> Estimate {
    let last = perfect.iter().map(|p| p.rs_index).max().unwrap_or(0);
    let first = (last + 1).saturating_sub(window);
    let mut seeds: Vec<u64> = perfect.iter().map(|p| p.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed: Vec<f64> = seeds
        .into_iter()
        .map(|s| {
            let v: Vec<f64> = perfect
                .iter()
                .filter(|p| p.seed == s && p.rs_index >= first)
                .map(|p| if zf { p.se_zf_sum } else { p.se_mf_sum })
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    Estimate::from_samples(&per_seed)
}
