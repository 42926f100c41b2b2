//! Class-count CTMC engine: exponential-race simulation of the per-class
//! job counts under a policy. Exponential classes only; hyperexponential
//! workloads route to the per-job event engine.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::policy::{PolicySpec, PreparedPolicy};
use crate::sim::{replicate, Estimate, RepStats, SimPlan};
use crate::workload::SystemConfig;

/// Arrival and per-class departure rates out of state `n`. The total
/// outflow is `sum lambda_i + sum mu_i a_i(n)` (or `k mu_j` for the
/// single-fast systems).
pub fn transition_rates(
    config: &SystemConfig,
    policy: &PolicySpec,
    n: &[u64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    config.check_dims(n.len())?;
    let prepared = PreparedPolicy::new(policy, config)?;
    let mut engine = Engine::new(config, prepared);
    engine.counts.copy_from_slice(n);
    engine.refresh_rates();
    Ok((engine.lambdas.clone(), engine.dep_rates.clone()))
}

struct Engine<'a> {
    config: &'a SystemConfig,
    prepared: PreparedPolicy,
    lambdas: Vec<f64>,
    mus: Vec<f64>,
    counts: Vec<u64>,
    alloc: Vec<u64>,
    dep_rates: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SystemConfig, prepared: PreparedPolicy) -> Engine<'a> {
        let ell = config.num_classes();
        Engine {
            config,
            prepared,
            lambdas: config.classes.iter().map(|c| c.lambda).collect(),
            mus: config.classes.iter().map(|c| c.mu).collect(),
            counts: vec![0; ell],
            alloc: vec![0; ell],
            dep_rates: vec![0.0; ell],
        }
    }

    fn refresh_rates(&mut self) {
        if self.prepared.is_single_fast() {
            self.alloc.fill(0);
            self.dep_rates.fill(0.0);
            if let Some((class, rate)) = self.prepared.single_fast_pick(&self.counts, &self.mus) {
                self.alloc[class] = self.config.k;
                self.dep_rates[class] = rate;
            }
        } else {
            self.prepared.allocate_into(&self.counts, &mut self.alloc);
            for i in 0..self.dep_rates.len() {
                self.dep_rates[i] = self.alloc[i] as f64 * self.mus[i];
            }
        }
    }
}

/// One replication from the empty state: time-averaged per-class counts
/// (and tail fractions) over `(warmup, warmup + measure]`. Deterministic
/// given the seed.
pub fn simulate_once(
    config: &SystemConfig,
    policy: &PolicySpec,
    plan: &SimPlan,
    seed: u64,
) -> Result<RepStats> {
    simulate_once_traced(config, policy, plan, seed, None::<&mut Vec<u8>>)
}

/// As [`simulate_once`], writing a `time,n_1..n_ell,a_1..a_ell` CSV row per
/// piecewise-constant segment when `trace` is given.
pub fn simulate_once_traced<W: Write>(
    config: &SystemConfig,
    policy: &PolicySpec,
    plan: &SimPlan,
    seed: u64,
    mut trace: Option<&mut W>,
) -> Result<RepStats> {
    for (i, c) in config.classes.iter().enumerate() {
        if !c.size.is_exponential() {
            return Err(Error::HyperExpUnsupported(i));
        }
    }
    plan.validate(config)?;
    let prepared = PreparedPolicy::new(policy, config)?;
    let mut engine = Engine::new(config, prepared);
    let ell = config.num_classes();
    let warmup = plan.warmup_time;
    let horizon = warmup + plan.measure_time;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0f64;
    let mut occupancy = vec![0.0f64; ell];
    let mut tail_time = plan.tail_thresholds.as_ref().map(|_| vec![0.0f64; ell]);
    let mut events_after_warmup: u64 = 0;

    engine.refresh_rates();
    if let Some(w) = trace.as_deref_mut() {
        write_trace_row(w, t, &engine.counts, &engine.alloc)?;
    }
    loop {
        let dep_total: f64 = engine.dep_rates.iter().sum();
        let arr_total: f64 = engine.lambdas.iter().sum();
        let total = arr_total + dep_total;
        let dt = Exp::new(total).expect("positive rate").sample(&mut rng);
        let t_next = t + dt;

        let lo = t.max(warmup);
        let hi = t_next.min(horizon);
        if hi > lo {
            let w = hi - lo;
            for i in 0..ell {
                occupancy[i] += engine.counts[i] as f64 * w;
            }
            if let (Some(tail), Some(levels)) = (tail_time.as_mut(), &plan.tail_thresholds) {
                for i in 0..ell {
                    if engine.counts[i] >= levels[i] {
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
        let mut applied = false;
        for i in 0..ell {
            if u < engine.lambdas[i] {
                engine.counts[i] += 1;
                applied = true;
                break;
            }
            u -= engine.lambdas[i];
        }
        if !applied {
            for i in 0..ell {
                if u < engine.dep_rates[i] {
                    debug_assert!(engine.counts[i] > 0);
                    engine.counts[i] -= 1;
                    applied = true;
                    break;
                }
                u -= engine.dep_rates[i];
            }
        }
        if !applied {
            // Round-off pushed u past the last positive rate; take the last
            // event with positive rate.
            let i = (0..ell).rev().find(|&i| engine.dep_rates[i] > 0.0);
            match i {
                Some(i) => engine.counts[i] -= 1,
                None => engine.counts[ell - 1] += 1,
            }
        }
        if t > warmup {
            events_after_warmup += 1;
        }
        engine.refresh_rates();
        if let Some(w) = trace.as_deref_mut() {
            write_trace_row(w, t, &engine.counts, &engine.alloc)?;
        }
    }
    if events_after_warmup == 0 {
        return Err(Error::NumericalHorizonTooSmall);
    }

    let mean_n: Vec<f64> = occupancy.iter().map(|x| x / plan.measure_time).collect();
    let mean_t: Vec<f64> = mean_n
        .iter()
        .zip(&config.classes)
        .map(|(&en, c)| en / c.lambda)
        .collect();
    let tail_frac =
        tail_time.map(|tt| tt.iter().map(|x| x / plan.measure_time).collect());
    Ok(RepStats { mean_n, mean_t, tail_frac })
}

fn write_trace_row<W: Write>(w: &mut W, t: f64, n: &[u64], a: &[u64]) -> Result<()> {
    write!(w, "{t}")?;
    for v in n {
        write!(w, ",{v}")?;
    }
    for v in a {
        write!(w, ",{v}")?;
    }
    writeln!(w)?;
    Ok(())
}

/// Replicated estimate with 95% confidence half-widths; response times via
/// Little's law per class.
pub fn estimate(config: &SystemConfig, policy: &PolicySpec, plan: &SimPlan) -> Result<Estimate> {
    replicate(config, plan, |seed| simulate_once(config, policy, plan, seed))
}
