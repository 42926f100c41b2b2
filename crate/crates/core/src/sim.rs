//! Shared simulation plumbing: run plans, replication statistics, and the
//! deterministic replication driver.
//!
//! Randomness: each replication owns one independent ChaCha8 stream
//! (`rand_chacha::ChaCha8Rng`, a counter-based generator with portable
//! output), seeded with `seed_from_u64(base_seed + r)` for replication `r`.
//! Replications may run concurrently; results are reduced in replication
//! order, so estimates are bitwise reproducible for any thread count. The
//! `MALSCHED_THREADS` environment variable caps the worker pool.

use once_cell::sync::Lazy;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::workload::SystemConfig;

/// Warmup fraction used when a plan does not set warmup explicitly.
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.2;

/// How long to run, how much to discard, and how many replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPlan {
    pub warmup_time: f64,
    pub measure_time: f64,
    pub replications: u32,
    pub base_seed: u64,
    /// Optional per-class levels; the engines report the time fraction each
    /// class spends at or above its level.
    pub tail_thresholds: Option<Vec<u64>>,
}

impl SimPlan {
    /// Plan with the default 20% warmup prepended to `measure_time`.
    pub fn new(measure_time: f64, replications: u32, base_seed: u64) -> SimPlan {
        SimPlan {
            warmup_time: DEFAULT_WARMUP_FRACTION * measure_time,
            measure_time,
            replications,
            base_seed,
            tail_thresholds: None,
        }
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        if !(self.warmup_time >= 0.0 && self.warmup_time.is_finite()) {
            return Err(Error::BadSpec("warmup_time must be finite and >= 0".into()));
        }
        if !(self.measure_time > 0.0 && self.measure_time.is_finite()) {
            return Err(Error::BadSpec("measure_time must be finite and > 0".into()));
        }
        if self.replications < 1 {
            return Err(Error::BadSpec("replications must be >= 1".into()));
        }
        if let Some(levels) = &self.tail_thresholds {
            config.check_dims(levels.len())?;
        }
        Ok(())
    }
}

/// A point estimate with its 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub half_width_95: f64,
}

/// Per-class statistics of one estimate.
#[derive(Debug, Clone)]
pub struct ClassEstimate {
    pub mean_n: Stat,
    pub mean_t: Stat,
    /// Time fraction with N_i at or above the requested threshold.
    pub tail_prob: Option<Stat>,
}

/// Replication-aggregated output of an engine.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub per_class: Vec<ClassEstimate>,
    /// Share-weighted aggregate mean response time, sum p_i T_i.
    pub aggregate_t: Stat,
    pub aggregate_n: Stat,
    pub replications: u32,
}

/// Raw per-replication output both engines produce.
#[derive(Debug, Clone)]
pub struct RepStats {
    /// Time-averaged number in system per class.
    pub mean_n: Vec<f64>,
    /// Mean response time per class (via Little in the count engine, direct
    /// in the per-job engine).
    pub mean_t: Vec<f64>,
    pub tail_frac: Option<Vec<f64>>,
}

/// Two-sided 95% Student-t critical value. Table through 30 degrees of
/// freedom, then the usual coarse steps down to the normal limit.
pub fn t_critical_95(df: u32) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[(df - 1) as usize],
        31..=40 => 2.021,
        41..=60 => 2.000,
        61..=120 => 1.980,
        _ => 1.960,
    }
}

/// Mean and 95% half-width of replication means.
pub fn t_stat(samples: &[f64]) -> Stat {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Stat { mean, half_width_95: f64::INFINITY };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let half = t_critical_95(n as u32 - 1) * (var / n as f64).sqrt();
    Stat { mean, half_width_95: half }
}

static POOL: Lazy<rayon::ThreadPool> = Lazy::new(|| {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MALSCHED_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                builder = builder.num_threads(n);
            }
        }
    }
    builder.build().expect("failed to build worker pool")
});

/// Run `plan.replications` independent replications of `run_one` (seeded
/// `base_seed + r`) and reduce them into an [`Estimate`] in replication
/// order.
pub fn replicate<F>(config: &SystemConfig, plan: &SimPlan, run_one: F) -> Result<Estimate>
where
    F: Fn(u64) -> Result<RepStats> + Sync,
{
    plan.validate(config)?;
    let seeds: Vec<u64> =
        (0..plan.replications).map(|r| plan.base_seed.wrapping_add(r as u64)).collect();
    let reps: Vec<Result<RepStats>> =
        POOL.install(|| seeds.par_iter().map(|&s| run_one(s)).collect());
    let mut stats = Vec::with_capacity(reps.len());
    for r in reps {
        stats.push(r?);
    }
    Ok(reduce(config, plan, &stats))
}

fn reduce(config: &SystemConfig, plan: &SimPlan, reps: &[RepStats]) -> Estimate {
    let ell = config.num_classes();
    let column = |get: &dyn Fn(&RepStats) -> f64| -> Stat {
        let samples: Vec<f64> = reps.iter().map(get).collect();
        t_stat(&samples)
    };
    let per_class = (0..ell)
        .map(|i| ClassEstimate {
            mean_n: column(&|r: &RepStats| r.mean_n[i]),
            mean_t: column(&|r: &RepStats| r.mean_t[i]),
            tail_prob: plan
                .tail_thresholds
                .as_ref()
                .map(|_| column(&|r: &RepStats| r.tail_frac.as_ref().expect("tail requested")[i])),
        })
        .collect();
    let aggregate_t = column(&|r: &RepStats| {
        config.classes.iter().zip(&r.mean_t).map(|(c, &t)| c.p * t).sum()
    });
    let aggregate_n = column(&|r: &RepStats| r.mean_n.iter().sum());
    Estimate { per_class, aggregate_t, aggregate_n, replications: plan.replications }
}
