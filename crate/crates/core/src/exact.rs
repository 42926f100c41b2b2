//! Exact oracles: stationary distribution of the truncated class-count
//! chain, closed-form preemptive-priority response times for the speed-k
//! single-server systems, and analytic bounds.

use crate::error::{Error, Result};
use crate::policy::{PolicySpec, PreparedPolicy};
use crate::workload::SystemConfig;

/// Rectangular truncation of the class-count chain: every class capped at
/// `cap` jobs, arrivals blocked at the boundary.
#[derive(Debug, Clone, Copy)]
pub struct TruncationSpec {
    pub cap: u64,
    /// Maximum stationary mass allowed on the capped boundary.
    pub boundary_tolerance: f64,
}

impl TruncationSpec {
    pub fn new(cap: u64) -> Self {
        TruncationSpec { cap, boundary_tolerance: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cap < 1 {
            return Err(Error::BadSpec("truncation cap must be >= 1".into()));
        }
        if !(self.boundary_tolerance > 0.0 && self.boundary_tolerance < 1.0) {
            return Err(Error::BadSpec("boundary tolerance must be in (0, 1)".into()));
        }
        Ok(())
    }
}

const MAX_STATES: u64 = 10_000_000;
const RESIDUAL_TOL: f64 = 1e-10;
/// Largest state count handled by the dense direct solve.
const DENSE_LIMIT: u64 = 1024;
const MAX_SWEEPS: u64 = 400_000;

/// Stationary solution of the truncated chain.
#[derive(Debug, Clone)]
pub struct ExactResult {
    pub per_class_n: Vec<f64>,
    pub per_class_t: Vec<f64>,
    pub aggregate_n: f64,
    /// Share-weighted mean response time, sum p_i T_i.
    pub aggregate_t: f64,
    /// Stationary mass on states with any class at the cap.
    pub boundary_mass: f64,
    /// Max-norm of pi Q at the returned solution.
    pub residual: f64,
    /// Gauss-Seidel sweeps used (0 for the dense direct path).
    pub sweeps: u64,
    pub cap: u64,
    pi: Vec<f64>,
}

impl ExactResult {
    /// States with stationary mass above `threshold`, as (counts, prob).
    pub fn states_above(&self, threshold: f64) -> Vec<(Vec<u64>, f64)> {
        let ell = self.per_class_n.len();
        let mut out = Vec::new();
        let mut n = vec![0u64; ell];
        for &p in &self.pi {
            if p > threshold {
                out.push((n.clone(), p));
            }
            advance(&mut n, self.cap);
        }
        out
    }
}

fn advance(n: &mut [u64], cap: u64) {
    for v in n.iter_mut() {
        if *v < cap {
            *v += 1;
            return;
        }
        *v = 0;
    }
}

/// Transition-rate view of the truncated chain for one policy.
struct Chain<'a> {
    config: &'a SystemConfig,
    policy: PreparedPolicy,
    cap: u64,
    strides: Vec<usize>,
    lambdas: Vec<f64>,
    mus: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(config: &'a SystemConfig, policy: &PolicySpec, cap: u64) -> Result<Chain<'a>> {
        Ok(Chain {
            config,
            policy: PreparedPolicy::new(policy, config)?,
            cap,
            strides: {
                let ell = config.num_classes();
                let mut s = Vec::with_capacity(ell);
                let mut acc = 1usize;
                for _ in 0..ell {
                    s.push(acc);
                    acc *= (cap + 1) as usize;
                }
                s
            },
            lambdas: config.classes.iter().map(|c| c.lambda).collect(),
            mus: config.classes.iter().map(|c| c.mu).collect(),
        })
    }

    fn num_states(&self) -> usize {
        (self.cap as usize + 1).pow(self.config.num_classes() as u32)
    }

    /// Per-class departure rates from state `n` into `out`.
    fn departure_rates(&self, n: &[u64], alloc_buf: &mut [u64], out: &mut [f64]) {
        if self.policy.is_single_fast() {
            out.fill(0.0);
            if let Some((class, rate)) = self.policy.single_fast_pick(n, &self.mus) {
                out[class] = rate;
            }
        } else {
            self.policy.allocate_into(n, alloc_buf);
            for (o, (&a, &mu)) in out.iter_mut().zip(alloc_buf.iter().zip(&self.mus)) {
                *o = a as f64 * mu;
            }
        }
    }

    /// Total outflow rate from `n` (blocked arrivals excluded).
    fn out_rate(&self, n: &[u64], deps: &[f64]) -> f64 {
        let mut rate: f64 = deps.iter().sum();
        for (i, &ni) in n.iter().enumerate() {
            if ni < self.cap {
                rate += self.lambdas[i];
            }
        }
        rate
    }
}

/// Solve the stationary distribution of the truncated class-count chain
/// under a policy, to max-norm residual 1e-10.
///
/// All classes must be exponential. Dense LU is used for small spaces,
/// Gauss-Seidel sweeps with normalization otherwise; both paths verify the
/// same residual contract.
pub fn stationary_truncated(
    config: &SystemConfig,
    policy: &PolicySpec,
    trunc: TruncationSpec,
) -> Result<ExactResult> {
    trunc.validate()?;
    for (i, c) in config.classes.iter().enumerate() {
        if !c.size.is_exponential() {
            return Err(Error::HyperExpUnsupported(i));
        }
    }
    let ell = config.num_classes() as u32;
    let states = (trunc.cap + 1).checked_pow(ell).filter(|&s| s <= MAX_STATES);
    let states = match states {
        Some(s) => s,
        None => {
            return Err(Error::StateSpaceTooLarge {
                states: (trunc.cap + 1).saturating_pow(ell),
                limit: MAX_STATES,
            })
        }
    };

    let chain = Chain::new(config, policy, trunc.cap)?;
    let (pi, sweeps) = if states <= DENSE_LIMIT {
        (solve_dense(&chain)?, 0)
    } else {
        solve_gauss_seidel(&chain)?
    };
    let residual = residual_inf(&chain, &pi);
    if residual > RESIDUAL_TOL {
        return Err(Error::SolverStalled { residual, sweeps });
    }
    summarize(config, pi, trunc, residual, sweeps)
}

fn summarize(
    config: &SystemConfig,
    pi: Vec<f64>,
    trunc: TruncationSpec,
    residual: f64,
    sweeps: u64,
) -> Result<ExactResult> {
    let ell = config.num_classes();
    let mut per_class_n = vec![0.0; ell];
    let mut boundary_mass = 0.0;
    let mut n = vec![0u64; ell];
    for &p in &pi {
        for i in 0..ell {
            per_class_n[i] += p * n[i] as f64;
        }
        if n.iter().any(|&ni| ni == trunc.cap) {
            boundary_mass += p;
        }
        advance(&mut n, trunc.cap);
    }
    if boundary_mass > trunc.boundary_tolerance {
        return Err(Error::TruncationInsufficient {
            boundary_mass,
            tolerance: trunc.boundary_tolerance,
        });
    }
    let per_class_t: Vec<f64> = per_class_n
        .iter()
        .zip(&config.classes)
        .map(|(&en, c)| en / c.lambda)
        .collect();
    let aggregate_n = per_class_n.iter().sum();
    let aggregate_t = config
        .classes
        .iter()
        .zip(&per_class_t)
        .map(|(c, &t)| c.p * t)
        .sum();
    Ok(ExactResult {
        per_class_n,
        per_class_t,
        aggregate_n,
        aggregate_t,
        boundary_mass,
        residual,
        sweeps,
        cap: trunc.cap,
        pi,
    })
}

fn residual_inf(chain: &Chain, pi: &[f64]) -> f64 {
    let ell = chain.config.num_classes();
    let cap = chain.cap;
    let mut alloc_buf = vec![0u64; ell];
    let mut deps = vec![0.0; ell];
    let mut nbr = vec![0u64; ell];
    let mut n = vec![0u64; ell];
    let mut worst = 0.0f64;
    for (s, &p) in pi.iter().enumerate() {
        chain.departure_rates(&n, &mut alloc_buf, &mut deps);
        let out = chain.out_rate(&n, &deps);
        let mut inflow = 0.0;
        for i in 0..ell {
            if n[i] >= 1 {
                inflow += chain.lambdas[i] * pi[s - chain.strides[i]];
            }
            if n[i] < cap {
                nbr.copy_from_slice(&n);
                nbr[i] += 1;
                let mut nbr_deps = [0.0f64; 8];
                chain.departure_rates(&nbr, &mut alloc_buf, &mut nbr_deps[..ell]);
                inflow += nbr_deps[i] * pi[s + chain.strides[i]];
            }
        }
        worst = worst.max((inflow - p * out).abs());
        advance(&mut n, cap);
    }
    worst
}

fn solve_dense(chain: &Chain) -> Result<Vec<f64>> {
    let s_count = chain.num_states();
    let ell = chain.config.num_classes();
    let cap = chain.cap;
    // a holds Q^T with the last balance row replaced by normalization.
    let mut a = vec![0.0f64; s_count * s_count];
    let mut alloc_buf = vec![0u64; ell];
    let mut deps = vec![0.0; ell];
    let mut n = vec![0u64; ell];
    for s in 0..s_count {
        chain.departure_rates(&n, &mut alloc_buf, &mut deps);
        for i in 0..ell {
            if n[i] < cap {
                let t = s + chain.strides[i];
                a[t * s_count + s] += chain.lambdas[i];
                a[s * s_count + s] -= chain.lambdas[i];
            }
            if n[i] >= 1 && deps[i] > 0.0 {
                let t = s - chain.strides[i];
                a[t * s_count + s] += deps[i];
                a[s * s_count + s] -= deps[i];
            }
        }
        advance(&mut n, cap);
    }
    let last = s_count - 1;
    for s in 0..s_count {
        a[last * s_count + s] = 1.0;
    }
    let mut b = vec![0.0f64; s_count];
    b[last] = 1.0;
    lu_solve_in_place(&mut a, &mut b, s_count)?;
    // Clip tiny negative round-off and renormalize.
    let mut total = 0.0;
    for x in b.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-9 {
                return Err(Error::SolverStalled { residual: -*x, sweeps: 0 });
            }
            *x = 0.0;
        }
        total += *x;
    }
    for x in b.iter_mut() {
        *x /= total;
    }
    Ok(b)
}

/// In-place LU with partial pivoting; solves `a x = b`, result in `b`.
fn lu_solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Err(Error::SolverStalled { residual: f64::INFINITY, sweeps: 0 });
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for j in (col + 1)..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut x = b[col];
        for j in (col + 1)..n {
            x -= a[col * n + j] * b[j];
        }
        b[col] = x / a[col * n + col];
    }
    Ok(())
}

/// Per-state transition tables for the truncated chain. Rates depend only
/// on the state, so they are built once and reused every sweep.
struct RateTables {
    /// Departure rates, `ell` entries per state.
    dep: Vec<f64>,
    /// Total outflow per state.
    out: Vec<f64>,
}

fn build_tables(chain: &Chain) -> RateTables {
    let s_count = chain.num_states();
    let ell = chain.config.num_classes();
    let mut dep = vec![0.0f64; s_count * ell];
    let mut out = vec![0.0f64; s_count];
    let mut alloc_buf = vec![0u64; ell];
    let mut n = vec![0u64; ell];
    for s in 0..s_count {
        let row = &mut dep[s * ell..(s + 1) * ell];
        chain.departure_rates(&n, &mut alloc_buf, row);
        out[s] = chain.out_rate(&n, row);
        advance(&mut n, chain.cap);
    }
    RateTables { dep, out }
}

fn solve_gauss_seidel(chain: &Chain) -> Result<(Vec<f64>, u64)> {
    let s_count = chain.num_states();
    let ell = chain.config.num_classes();
    let cap = chain.cap;
    let tables = build_tables(chain);
    let mut pi = vec![1.0 / s_count as f64; s_count];

    // Successive over-relaxation around the Gauss-Seidel update; omega is
    // raised while convergence is slow and dropped back to plain GS if the
    // residual ever grows.
    let mut omega = 1.0f64;
    let mut last_res = f64::INFINITY;
    let mut sweeps = 0u64;
    loop {
        // One forward and one backward sweep per round.
        for direction in 0..2 {
            let mut n = vec![0u64; ell];
            if direction == 1 {
                n.fill(cap);
            }
            for step in 0..s_count {
                let s = if direction == 0 { step } else { s_count - 1 - step };
                let mut inflow = 0.0;
                for i in 0..ell {
                    let stride = chain.strides[i];
                    if n[i] >= 1 {
                        inflow += chain.lambdas[i] * pi[s - stride];
                    }
                    if n[i] < cap {
                        let up = s + stride;
                        inflow += tables.dep[up * ell + i] * pi[up];
                    }
                }
                let gs = inflow / tables.out[s];
                pi[s] = (pi[s] + omega * (gs - pi[s])).max(0.0);
                if direction == 0 {
                    advance(&mut n, cap);
                } else {
                    retreat(&mut n, cap);
                }
            }
            sweeps += 1;
        }
        let total: f64 = pi.iter().sum();
        for x in pi.iter_mut() {
            *x /= total;
        }
        if sweeps % 16 == 0 || sweeps >= MAX_SWEEPS {
            let res = residual_tables(chain, &tables, &pi);
            if res <= RESIDUAL_TOL {
                return Ok((pi, sweeps));
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::SolverStalled { residual: res, sweeps });
            }
            if res > last_res {
                omega = 1.0;
            } else if res > last_res * 0.01 && omega < 1.9 {
                omega = (omega + 0.15).min(1.9);
            }
            last_res = res;
        }
    }
}

fn residual_tables(chain: &Chain, tables: &RateTables, pi: &[f64]) -> f64 {
    let ell = chain.config.num_classes();
    let cap = chain.cap;
    let mut n = vec![0u64; ell];
    let mut worst = 0.0f64;
    for (s, &p) in pi.iter().enumerate() {
        let mut inflow = 0.0;
        for i in 0..ell {
            let stride = chain.strides[i];
            if n[i] >= 1 {
                inflow += chain.lambdas[i] * pi[s - stride];
            }
            if n[i] < cap {
                let up = s + stride;
                inflow += tables.dep[up * ell + i] * pi[up];
            }
        }
        worst = worst.max((inflow - p * tables.out[s]).abs());
        advance(&mut n, cap);
    }
    worst
}

fn retreat(n: &mut [u64], cap: u64) {
    for v in n.iter_mut() {
        if *v > 0 {
            *v -= 1;
            return;
        }
        *v = cap;
    }
}

/// Exact response times of the preemptive-resume priority M/M/1 running at
/// speed k, per class and aggregate.
#[derive(Debug, Clone)]
pub struct PriorityQueueResult {
    /// Priority order used (class indices, highest priority first).
    pub order: Vec<usize>,
    /// Cumulative loads sigma_i in priority order; the last equals rho.
    pub sigma: Vec<f64>,
    /// Mean response time per class, in the config's class indexing.
    pub per_class_t: Vec<f64>,
    pub per_class_n: Vec<f64>,
    pub aggregate_t: f64,
    pub aggregate_n: f64,
}

/// Closed-form preemptive-resume priority response times for a single
/// speed-k server: with classes taken in `order`,
/// `E[T_(i)] = (1/(k mu_(i)))/(1 - sigma_(i-1))
///           + (sum_(j<=i) lambda_(j)/(k mu_(j))^2) / ((1 - sigma_(i-1))(1 - sigma_(i)))`.
pub fn priority_mm1_speed_k(
    config: &SystemConfig,
    order: &[usize],
) -> Result<PriorityQueueResult> {
    if config.rho >= 1.0 {
        return Err(Error::UnstableSystem { rho: config.rho });
    }
    if !config.all_exponential() {
        return Err(Error::BadSpec(
            "priority formulas require exponential classes".into(),
        ));
    }
    let ell = config.num_classes();
    if order.len() != ell {
        return Err(Error::DimensionMismatch { expected: ell, got: order.len() });
    }
    let k = config.k as f64;
    let mut sigma = Vec::with_capacity(ell);
    let mut per_class_t = vec![0.0; ell];
    let mut sigma_prev = 0.0;
    let mut resid = 0.0; // sum_(j<=i) lambda_j / (k mu_j)^2
    for &cls in order {
        let c = &config.classes[cls];
        let sigma_i = sigma_prev + c.rho;
        resid += c.lambda / (k * c.mu).powi(2);
        per_class_t[cls] =
            (1.0 / (k * c.mu)) / (1.0 - sigma_prev) + resid / ((1.0 - sigma_prev) * (1.0 - sigma_i));
        sigma.push(sigma_i);
        sigma_prev = sigma_i;
    }
    let per_class_n: Vec<f64> = per_class_t
        .iter()
        .zip(&config.classes)
        .map(|(&t, c)| c.lambda * t)
        .collect();
    let aggregate_t = config
        .classes
        .iter()
        .zip(&per_class_t)
        .map(|(c, &t)| c.p * t)
        .sum();
    let aggregate_n = per_class_n.iter().sum();
    Ok(PriorityQueueResult { order: order.to_vec(), sigma, per_class_t, per_class_n, aggregate_t, aggregate_n })
}

/// Upper bound on the mean response time of the more-parallelizable class
/// under THRESH with threshold `tau`, for two-class systems:
/// `2 tau / (k mu_2 rho_2) + 4 / (k mu_2 rho_2 (1 - rho_2))`.
pub fn thresh_t2_bound(config: &SystemConfig, tau: f64) -> Result<f64> {
    if config.num_classes() != 2 {
        return Err(Error::WrongClassCount { expected: 2, got: config.num_classes() });
    }
    let c2 = &config.classes[1];
    if !(c2.rho > 0.0 && c2.rho < 1.0) {
        return Err(Error::InfeasibleLoad(format!("rho_2 = {} not in (0, 1)", c2.rho)));
    }
    let k = config.k as f64;
    Ok(2.0 * tau / (k * c2.mu * c2.rho) + 4.0 / (k * c2.mu * c2.rho * (1.0 - c2.rho)))
}

/// Jobs of class `i` needed to occupy its load share plus an equal slice of
/// the spare capacity: `ceil((rho_i k + alpha/ell) / c_i)`.
pub fn beta_threshold(config: &SystemConfig, class: usize) -> u64 {
    let c = &config.classes[class];
    let ell = config.num_classes() as f64;
    let x = (c.rho * config.k as f64 + config.alpha / ell) / c.c as f64;
    ceil_eps(x)
}

/// Ceiling with a small slack so values that are integral up to floating
/// round-off do not get bumped to the next integer.
fn ceil_eps(x: f64) -> u64 {
    (x - 1e-9).ceil().max(0.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{SingleFastOrder, TauRule};
    use crate::workload::{resolve_config, ClassSpec, ParallelismRule, ScalingRegime, SizeDist};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn one_class(k: u64, rate: f64, rule: ParallelismRule, rho: f64) -> SystemConfig {
        resolve_config(
            k,
            &[ClassSpec { size: SizeDist::Exponential { rate }, p: 1.0, parallelism: rule }],
            ScalingRegime::FixedRho { rho },
        )
        .unwrap()
    }

    fn classes_2(
        k: u64,
        mus: [f64; 2],
        ps: [f64; 2],
        rules: [ParallelismRule; 2],
        rho: f64,
    ) -> SystemConfig {
        let classes: Vec<ClassSpec> = mus
            .iter()
            .zip(ps)
            .zip(rules)
            .map(|((&rate, p), parallelism)| ClassSpec {
                size: SizeDist::Exponential { rate },
                p,
                parallelism,
            })
            .collect();
        resolve_config(k, &classes, ScalingRegime::FixedRho { rho }).unwrap()
    }

    /// Erlang-C mean number in system for M/M/k, used as an independent
    /// check on the truncated solver.
    fn erlang_c_mean_n(k: u64, lambda: f64, mu: f64) -> f64 {
        let a = lambda / mu;
        let rho = a / k as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..k {
            term *= a / j as f64;
            sum += term;
        }
        term *= a / k as f64;
        let tail = term / (1.0 - rho);
        let p_wait = tail / (sum + tail);
        p_wait * rho / (1.0 - rho) + a
    }

    #[test]
    fn mm1_at_speed_k() {
        // One fully parallelizable class collapses to M/M/1 at speed k.
        let cfg = one_class(3, 1.0, ParallelismRule::Full, 0.5);
        let res = stationary_truncated(&cfg, &PolicySpec::Lpf, TruncationSpec::new(80)).unwrap();
        assert!(close(res.aggregate_n, 1.0, 1e-6), "E[N] = {}", res.aggregate_n);
        assert!(res.residual <= 1e-10);
    }

    #[test]
    fn mmk_erlang_c() {
        let cfg = one_class(2, 1.0, ParallelismRule::Const { m: 1 }, 0.5);
        assert!(close(cfg.lambda_total, 1.0, 1e-12));
        let res = stationary_truncated(&cfg, &PolicySpec::Lpf, TruncationSpec::new(80)).unwrap();
        assert!(close(res.aggregate_n, 4.0 / 3.0, 1e-6), "E[N] = {}", res.aggregate_n);
        assert!(close(res.aggregate_n, erlang_c_mean_n(2, 1.0, 1.0), 1e-6));
    }

    #[test]
    fn mmk_erlang_c_larger() {
        let cfg = one_class(4, 0.5, ParallelismRule::Const { m: 1 }, 0.7);
        let res = stationary_truncated(&cfg, &PolicySpec::Lpf, TruncationSpec::new(120)).unwrap();
        let want = erlang_c_mean_n(4, cfg.lambda_total, 0.5);
        assert!(close(res.aggregate_n, want, 1e-6), "{} vs {want}", res.aggregate_n);
    }

    #[test]
    fn dense_and_iterative_paths_agree() {
        let cfg = classes_2(
            2,
            [1.0, 1.0],
            [0.5, 0.5],
            [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
            0.5,
        );
        // cap 31 -> 1024 states (dense), cap 60 -> 3721 states (Gauss-Seidel).
        let dense =
            stationary_truncated(&cfg, &PolicySpec::Lpf, TruncationSpec::new(31)).unwrap();
        let gs = stationary_truncated(&cfg, &PolicySpec::Lpf, TruncationSpec::new(60)).unwrap();
        for i in 0..2 {
            assert!(
                close(dense.per_class_n[i], gs.per_class_n[i], 1e-7),
                "class {i}: {} vs {}",
                dense.per_class_n[i],
                gs.per_class_n[i]
            );
        }
    }

    #[test]
    fn pi_is_a_distribution() {
        let cfg = classes_2(
            2,
            [1.0, 2.0],
            [0.5, 0.5],
            [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
            0.6,
        );
        for policy in [
            PolicySpec::Lpf,
            PolicySpec::Serpt,
            PolicySpec::Thresh { tau: TauRule::Fixed { t: 10 } },
            PolicySpec::SingleFast { order: SingleFastOrder::CMu },
        ] {
            let res = stationary_truncated(&cfg, &policy, TruncationSpec::new(60)).unwrap();
            let total: f64 = res.states_above(-1.0).iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() <= 1e-12, "{policy}: total {total}");
            assert!(res.states_above(-1.0).iter().all(|&(_, p)| p >= 0.0));
            assert!(res.residual <= 1e-10, "{policy}: residual {}", res.residual);
        }
    }

    #[test]
    fn truncation_insufficient_reported() {
        let cfg = one_class(1, 1.0, ParallelismRule::Const { m: 1 }, 0.9);
        let err =
            stationary_truncated(&cfg, &PolicySpec::Lpf, TruncationSpec::new(20)).unwrap_err();
        assert!(matches!(err, Error::TruncationInsufficient { .. }), "{err:?}");
    }

    #[test]
    fn state_space_guard() {
        let cfg = classes_2(
            2,
            [1.0, 1.0],
            [0.5, 0.5],
            [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
            0.5,
        );
        let err =
            stationary_truncated(&cfg, &PolicySpec::Lpf, TruncationSpec::new(5000)).unwrap_err();
        assert!(matches!(err, Error::StateSpaceTooLarge { .. }));
    }

    #[test]
    fn priority_formula_single_class_mm1() {
        let cfg = one_class(1, 1.0, ParallelismRule::Const { m: 1 }, 0.5);
        let res = priority_mm1_speed_k(&cfg, &[0]).unwrap();
        assert!(close(res.per_class_t[0], 2.0, 1e-12), "1/(mu - lambda) = 2");
        assert!(close(res.sigma[0], 0.5, 1e-12));
    }

    #[test]
    fn priority_formula_two_class_example() {
        // mu = (2, 1), lambda = (0.5, 0.25) at k = 1, cmu order.
        let cfg = classes_2(
            1,
            [2.0, 1.0],
            [2.0 / 3.0, 1.0 / 3.0],
            [ParallelismRule::Const { m: 1 }, ParallelismRule::Const { m: 1 }],
            0.5,
        );
        assert!(close(cfg.classes[0].lambda, 0.5, 1e-12));
        assert!(close(cfg.classes[1].lambda, 0.25, 1e-12));
        let res = priority_mm1_speed_k(&cfg, &[0, 1]).unwrap();
        assert!(close(res.per_class_t[0], 2.0 / 3.0, 1e-12), "{}", res.per_class_t[0]);
        assert!(close(res.per_class_t[1], 7.0 / 3.0, 1e-12), "{}", res.per_class_t[1]);
    }

    #[test]
    fn priority_formula_matches_truncated_chain() {
        // The derived-values protocol: verify the formula against the
        // speed-k single-server chain before trusting it anywhere else.
        for rho in [0.3, 0.6, 0.9] {
            let cfg = classes_2(
                4,
                [2.0, 1.0],
                [0.5, 0.5],
                [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
                rho,
            );
            let order = crate::policy::priority_order(
                &PolicySpec::SingleFast { order: SingleFastOrder::CMu },
                &cfg,
            )
            .unwrap();
            let formula = priority_mm1_speed_k(&cfg, &order).unwrap();
            let cap = if rho > 0.8 { 250 } else { 120 };
            let chain = stationary_truncated(
                &cfg,
                &PolicySpec::SingleFast { order: SingleFastOrder::CMu },
                TruncationSpec::new(cap),
            )
            .unwrap();
            for i in 0..2 {
                assert!(
                    close(formula.per_class_n[i], chain.per_class_n[i], 1e-4),
                    "rho={rho} class {i}: formula {} chain {}",
                    formula.per_class_n[i],
                    chain.per_class_n[i]
                );
            }
        }
    }

    #[test]
    fn priority_formula_monotone_in_rho() {
        let mut prev = 0.0;
        for rho in [0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99] {
            let cfg = classes_2(
                4,
                [2.0, 1.0],
                [0.5, 0.5],
                [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
                rho,
            );
            let order = vec![0, 1];
            let res = priority_mm1_speed_k(&cfg, &order).unwrap();
            assert!(res.aggregate_t > prev, "E[T] not increasing at rho={rho}");
            prev = res.aggregate_t;
        }
    }

    #[test]
    fn priority_formula_heavy_traffic_scaling() {
        // E[T] should scale like 1/(1 - rho): the 0.99 over 0.98 ratio is
        // near 2.
        let at = |rho: f64| {
            let cfg = classes_2(
                4,
                [2.0, 1.0],
                [0.5, 0.5],
                [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
                rho,
            );
            priority_mm1_speed_k(&cfg, &[0, 1]).unwrap().aggregate_t
        };
        let ratio = at(0.99) / at(0.98);
        assert!((ratio - 2.0).abs() <= 0.2, "ratio {ratio}");
    }

    #[test]
    fn thresh_bound_values() {
        // k=10, mu_2=1, rho_2=0.5, tau=20 -> 9.6.
        let cfg = classes_2(
            10,
            [1.0, 1.0],
            [1.0 / 6.0, 5.0 / 6.0],
            [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
            0.6,
        );
        assert!(close(cfg.classes[1].rho, 0.5, 1e-12));
        let bound = thresh_t2_bound(&cfg, 20.0).unwrap();
        assert!(close(bound, 9.6, 1e-12), "{bound}");
        // tau -> 0 leaves only the second term.
        let base = thresh_t2_bound(&cfg, 0.0).unwrap();
        assert!(close(base, 1.6, 1e-12), "{base}");
        // The bound diverges as rho_2 -> 1: the pole term dominates.
        let at_rho2 = |p2: f64, rho: f64| {
            let cfg = classes_2(
                10,
                [1.0, 1.0],
                [1.0 - p2, p2],
                [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
                rho,
            );
            thresh_t2_bound(&cfg, 20.0).unwrap()
        };
        let mid = at_rho2(0.91, 0.99); // rho_2 ~ 0.90
        let near = at_rho2(0.991, 0.999); // rho_2 ~ 0.99
        assert!(mid < near, "{mid} {near}");
        assert!(near > 40.0, "pole term 4/(k mu rho_2 (1-rho_2)) ~ 40: {near}");

        let three = crate::workload::fig_classes();
        let cfg3 = resolve_config(64, &three, ScalingRegime::FixedRho { rho: 0.5 }).unwrap();
        assert!(matches!(
            thresh_t2_bound(&cfg3, 20.0),
            Err(Error::WrongClassCount { .. })
        ));
    }

    #[test]
    fn beta_threshold_values() {
        // k=100, rho_i=0.2, alpha=20, ell=2: beta = ceil(30/c).
        let cfg = classes_2(
            100,
            [1.0, 1.0],
            [0.25, 0.75],
            [ParallelismRule::Const { m: 1 }, ParallelismRule::Const { m: 4 }],
            0.8,
        );
        assert!(close(cfg.classes[0].rho, 0.2, 1e-12));
        assert!(close(cfg.alpha, 20.0, 1e-12));
        assert_eq!(beta_threshold(&cfg, 0), 30);
        // Same numbers with c=4 on the second class: ceil((60 + 10)/4).
        assert!(close(cfg.classes[1].rho, 0.6, 1e-12));
        assert_eq!(beta_threshold(&cfg, 1), 18);

        let full = classes_2(
            100,
            [1.0, 1.0],
            [0.25, 0.75],
            [ParallelismRule::Const { m: 1 }, ParallelismRule::Full],
            0.8,
        );
        assert!(beta_threshold(&full, 1) <= 2, "c=k collapses beta to a small constant");
    }
}
