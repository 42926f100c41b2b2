//! Per-job event engine: tracks individual jobs with hidden exponential
//! phases, measures response times directly, and supports hyperexponential
//! classes.
//!
//! At every event the class-level allocation is recomputed and handed out
//! within each class FCFS: the earliest arrival gets up to `c_i` servers,
//! then the next, until the class budget is spent. A job holding `m`
//! servers completes with hazard `m * phase_rate`.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::policy::{PolicySpec, PreparedPolicy};
use crate::sim::{replicate, Estimate, RepStats, SimPlan};
use crate::workload::{SizeDist, SystemConfig};

#[derive(Debug, Clone, Copy)]
struct Job {
    id: u64,
    arrival_time: f64,
    /// Completion rate per allocated server; drawn once at arrival for
    /// hyperexponential classes, equal to mu for exponential ones.
    phase_rate: f64,
}

/// One completed job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobRecord {
    pub id: u64,
    pub class: usize,
    pub arrival_time: f64,
    pub departure_time: f64,
    pub phase_rate: f64,
}

/// Counters and statistics from one replication.
#[derive(Debug, Clone)]
pub struct RunStats {
    /// Time-averaged counts and direct mean response times per class.
    pub rep: RepStats,
    pub arrivals: u64,
    pub departures: u64,
    /// Jobs still in system at the horizon; `arrivals = departures + this`.
    pub in_system_at_end: u64,
    /// Departures after warmup, the jobs behind `rep.mean_t`.
    pub measured_departures: u64,
}

fn draw_phase<R: Rng>(dist: &SizeDist, rng: &mut R) -> f64 {
    match dist {
        SizeDist::Exponential { rate } => *rate,
        SizeDist::HyperExp { branches } => {
            let mut u = rng.random::<f64>();
            for b in branches {
                if u < b.prob {
                    return b.rate;
                }
                u -= b.prob;
            }
            branches.last().expect("validated nonempty").rate
        }
    }
}

/// Sum of per-job hazards for the FCFS served prefix of one class, and
/// optionally the job index whose cumulative hazard first exceeds `pick`.
fn class_hazard(queue: &VecDeque<Job>, budget: u64, cap: u64, pick: Option<f64>) -> (f64, Option<usize>) {
    let mut left = budget;
    let mut total = 0.0;
    for (idx, job) in queue.iter().enumerate() {
        if left == 0 {
            break;
        }
        let m = left.min(cap);
        debug_assert!(m <= cap);
        left -= m;
        total += m as f64 * job.phase_rate;
        if let Some(p) = pick {
            if p < total {
                return (total, Some(idx));
            }
        }
    }
    (total, None)
}

/// One replication from the empty state. Response times are measured
/// directly over jobs departing after warmup; count averages start at the
/// warmup instant. Deterministic given the seed.
pub fn run(
    config: &SystemConfig,
    policy: &PolicySpec,
    plan: &SimPlan,
    seed: u64,
) -> Result<RunStats> {
    let (stats, _) = run_inner(config, policy, plan, seed, false)?;
    Ok(stats)
}

/// As [`run`], also returning a record per completed job.
pub fn run_with_records(
    config: &SystemConfig,
    policy: &PolicySpec,
    plan: &SimPlan,
    seed: u64,
) -> Result<(RunStats, Vec<JobRecord>)> {
    run_inner(config, policy, plan, seed, true)
}

fn run_inner(
    config: &SystemConfig,
    policy: &PolicySpec,
    plan: &SimPlan,
    seed: u64,
    keep_records: bool,
) -> Result<(RunStats, Vec<JobRecord>)> {
    plan.validate(config)?;
    if matches!(policy, PolicySpec::SingleFast { .. }) {
        return Err(Error::BadSpec(
            "single-fast policies run on the class-count engine".into(),
        ));
    }
    let prepared = PreparedPolicy::new(policy, config)?;
    let ell = config.num_classes();
    let caps: Vec<u64> = config.classes.iter().map(|c| c.c).collect();
    let lambdas: Vec<f64> = config.classes.iter().map(|c| c.lambda).collect();
    let arr_total: f64 = lambdas.iter().sum();
    let warmup = plan.warmup_time;
    let horizon = warmup + plan.measure_time;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<VecDeque<Job>> = vec![VecDeque::new(); ell];
    let mut counts = vec![0u64; ell];
    let mut alloc = vec![0u64; ell];
    let mut hazards = vec![0.0f64; ell];
    let mut occupancy = vec![0.0f64; ell];
    let mut tail_time = plan.tail_thresholds.as_ref().map(|_| vec![0.0f64; ell]);
    let mut t_sum = vec![0.0f64; ell];
    let mut t_count = vec![0u64; ell];
    let mut records = Vec::new();

    let mut t = 0.0f64;
    let mut next_id: u64 = 0;
    let mut arrivals: u64 = 0;
    let mut departures: u64 = 0;

    loop {
        prepared.allocate_into(&counts, &mut alloc);
        let mut dep_total = 0.0;
        for i in 0..ell {
            let (h, _) = class_hazard(&queues[i], alloc[i], caps[i], None);
            hazards[i] = h;
            dep_total += h;
        }
        let total = arr_total + dep_total;
        let dt = Exp::new(total).expect("positive rate").sample(&mut rng);
        let t_next = t + dt;

        let lo = t.max(warmup);
        let hi = t_next.min(horizon);
        if hi > lo {
            let w = hi - lo;
            for i in 0..ell {
                occupancy[i] += counts[i] as f64 * w;
            }
            if let (Some(tail), Some(levels)) = (tail_time.as_mut(), &plan.tail_thresholds) {
                for i in 0..ell {
                    if counts[i] >= levels[i] {
                        tail[i] += w;
                    }
                }
            }
        }
        if t_next >= horizon {
            break;
        }
        t = t_next;

        let mut u = rng.random::<f64>() * total;
        let mut event_class: Option<(usize, bool)> = None; // (class, is_arrival)
        for i in 0..ell {
            if u < lambdas[i] {
                event_class = Some((i, true));
                break;
            }
            u -= lambdas[i];
        }
        if event_class.is_none() {
            for i in 0..ell {
                if u < hazards[i] {
                    event_class = Some((i, false));
                    break;
                }
                u -= hazards[i];
            }
        }
        let (class, is_arrival) = event_class.unwrap_or_else(|| {
            // Round-off fallback: last class with positive hazard, else an
            // arrival to the last class.
            match (0..ell).rev().find(|&i| hazards[i] > 0.0) {
                Some(i) => (i, false),
                None => (ell - 1, true),
            }
        });

        if is_arrival {
            let phase_rate = draw_phase(&config.classes[class].size, &mut rng);
            queues[class].push_back(Job { id: next_id, arrival_time: t, phase_rate });
            next_id += 1;
            counts[class] += 1;
            arrivals += 1;
        } else {
            let pick = u.min(hazards[class] * (1.0 - 1e-15));
            let (_, idx) = class_hazard(&queues[class], alloc[class], caps[class], Some(pick));
            let idx = idx.unwrap_or(0);
            let job = queues[class].remove(idx).expect("picked job exists");
            counts[class] -= 1;
            departures += 1;
            if t > warmup {
                t_sum[class] += t - job.arrival_time;
                t_count[class] += 1;
            }
            if keep_records {
                records.push(JobRecord {
                    id: job.id,
                    class,
                    arrival_time: job.arrival_time,
                    departure_time: t,
                    phase_rate: job.phase_rate,
                });
            }
        }
    }

    let in_system_at_end: u64 = counts.iter().sum();
    debug_assert_eq!(arrivals, departures + in_system_at_end);

    let mean_n: Vec<f64> = occupancy.iter().map(|x| x / plan.measure_time).collect();
    let mean_t: Vec<f64> = t_sum
        .iter()
        .zip(&t_count)
        .map(|(&s, &c)| s / c as f64)
        .collect();
    let tail_frac = tail_time.map(|tt| tt.iter().map(|x| x / plan.measure_time).collect());
    let measured_departures = t_count.iter().sum();
    Ok((
        RunStats {
            rep: RepStats { mean_n, mean_t, tail_frac },
            arrivals,
            departures,
            in_system_at_end,
            measured_departures,
        },
        records,
    ))
}

/// Replicated estimate; per-class response times are the direct per-job
/// means, counts are time averages.
pub fn estimate(config: &SystemConfig, policy: &PolicySpec, plan: &SimPlan) -> Result<Estimate> {
    replicate(config, plan, |seed| run(config, policy, plan, seed).map(|s| s.rep))
}

/// Histogram of response times with fixed-width buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bucket_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Merge counts of another histogram with the same bucket width.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.bucket_width != other.bucket_width {
            return Err(Error::BadSpec("histogram bucket widths differ".into()));
        }
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Bucket the response times of completed jobs: bucket `j` counts records
/// with `T` in `[j w, (j+1) w)`.
pub fn response_time_histogram(records: &[JobRecord], bucket_width: f64) -> Result<Histogram> {
    if !(bucket_width > 0.0 && bucket_width.is_finite()) {
        return Err(Error::BadSpec("bucket width must be > 0".into()));
    }
    let mut counts = Vec::new();
    for r in records {
        let t = r.departure_time - r.arrival_time;
        debug_assert!(t > 0.0);
        let idx = (t / bucket_width).floor() as usize;
        if idx >= counts.len() {
            counts.resize(idx + 1, 0);
        }
        counts[idx] += 1;
    }
    Ok(Histogram { bucket_width, counts })
}
