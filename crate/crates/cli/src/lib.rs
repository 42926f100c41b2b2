//! Command implementations behind the `malsched` binary: config and sweep
//! file parsing, report assembly, and the fixed CSV schema.
//!
//! CSV schema (fixed column order):
//! `k,policy,rho,alpha,class,mean_T,ci_T,mean_N,ci_N,bound_service,bound_cmu,tail_prob`
//! with one row per class (labelled `1..ell`) and an aggregate row labelled
//! `all` per (k, policy) point. Failed sweep points produce a row labelled
//! `error` with empty statistics. Reports are a pure function of the inputs
//! and the seed.

use std::fmt::Write as _;
use std::io::Write;

use serde::Deserialize;

use malsched_core::error::{Error, Result};
use malsched_core::exact::{
    beta_threshold, priority_mm1_speed_k, stationary_truncated, thresh_t2_bound, TruncationSpec,
};
use malsched_core::policy::{priority_order, PolicySpec, SingleFastOrder, TauRule};
use malsched_core::sim::{Estimate, SimPlan, Stat, DEFAULT_WARMUP_FRACTION};
use malsched_core::workload::{
    lpf_service_lower_bound, resolve_config, ClassSpec, ConfigFile, ScalingRegime, SystemConfig,
};
use malsched_core::{ctmc, event};

pub const CSV_HEADER: &str =
    "k,policy,rho,alpha,class,mean_T,ci_T,mean_N,ci_N,bound_service,bound_cmu,tail_prob";

/// Which simulation engine a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    Ctmc,
    Event,
}

impl std::str::FromStr for EngineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<EngineKind> {
        match s {
            "ctmc" => Ok(EngineKind::Ctmc),
            "event" => Ok(EngineKind::Event),
            other => Err(Error::BadSpec(format!("unknown engine {other:?}"))),
        }
    }
}

/// Tail-threshold request in plans: drift thresholds or explicit levels.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TailSpec {
    /// The string `"beta"`: per-class drift thresholds `beta_i`.
    Named(String),
    Levels(Vec<u64>),
}

impl TailSpec {
    pub fn parse(s: &str) -> Result<TailSpec> {
        if s == "beta" {
            return Ok(TailSpec::Named("beta".into()));
        }
        let levels: std::result::Result<Vec<u64>, _> =
            s.split(',').map(|p| p.trim().parse()).collect();
        match levels {
            Ok(v) if !v.is_empty() => Ok(TailSpec::Levels(v)),
            _ => Err(Error::BadSpec(format!("bad tail spec {s:?}; want 'beta' or levels"))),
        }
    }

    fn resolve(&self, config: &SystemConfig) -> Result<Vec<u64>> {
        match self {
            TailSpec::Named(name) if name == "beta" => {
                Ok((0..config.num_classes()).map(|i| beta_threshold(config, i)).collect())
            }
            TailSpec::Named(other) => Err(Error::BadSpec(format!("unknown tail spec {other:?}"))),
            TailSpec::Levels(levels) => {
                config.check_dims(levels.len())?;
                Ok(levels.clone())
            }
        }
    }
}

/// `[plan]` table of sweep files and the plan flags of `simulate`/`heavy`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub measure_time: f64,
    #[serde(default)]
    pub warmup_time: Option<f64>,
    pub replications: u32,
    pub base_seed: u64,
    #[serde(default)]
    pub tail: Option<TailSpec>,
}

impl PlanSpec {
    pub fn resolve(&self, config: &SystemConfig) -> Result<SimPlan> {
        let plan = SimPlan {
            warmup_time: self
                .warmup_time
                .unwrap_or(DEFAULT_WARMUP_FRACTION * self.measure_time),
            measure_time: self.measure_time,
            replications: self.replications,
            base_seed: self.base_seed,
            tail_thresholds: match &self.tail {
                Some(t) => Some(t.resolve(config)?),
                None => None,
            },
        };
        plan.validate(config)?;
        Ok(plan)
    }
}

/// A sweep recipe: k grid, policies, regime, classes, plan, engine.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default)]
    pub engine: EngineKind,
    pub k: Vec<u64>,
    pub policies: Vec<String>,
    pub regime: ScalingRegime,
    pub plan: PlanSpec,
    #[serde(rename = "class")]
    pub classes: Vec<ClassSpec>,
}

impl SweepFile {
    pub fn parse(text: &str) -> Result<SweepFile> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// One CSV row: a class of one (k, policy) point, or its aggregate.
#[derive(Debug, Clone, Default)]
pub struct ClassRow {
    pub label: String,
    pub mean_t: Option<Stat>,
    pub mean_n: Option<Stat>,
    pub bound_service: Option<f64>,
    pub bound_cmu: Option<f64>,
    pub tail_prob: Option<f64>,
}

/// All rows of one (k, policy) point.
#[derive(Debug, Clone)]
pub struct PointReport {
    pub k: u64,
    pub policy: String,
    pub rho: f64,
    pub alpha: f64,
    pub rows: Vec<ClassRow>,
    pub error: Option<String>,
}

/// Report of a whole command run, in deterministic row order.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub points: Vec<PointReport>,
}

impl RunReport {
    pub fn succeeded_points(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_none()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            if p.error.is_some() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},error,,,,,,,",
                    p.k,
                    csv_field(&p.policy),
                    fmt_f64(p.rho),
                    fmt_f64(p.alpha)
                );
                continue;
            }
            for row in &p.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    p.k,
                    csv_field(&p.policy),
                    fmt_f64(p.rho),
                    fmt_f64(p.alpha),
                    row.label,
                    opt_stat_mean(&row.mean_t),
                    opt_stat_hw(&row.mean_t),
                    opt_stat_mean(&row.mean_n),
                    opt_stat_hw(&row.mean_n),
                    opt_f64(&row.bound_service),
                    opt_f64(&row.bound_cmu),
                    opt_f64(&row.tail_prob),
                );
            }
        }
        out
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn opt_f64(v: &Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_stat_mean(v: &Option<Stat>) -> String {
    v.map(|s| fmt_f64(s.mean)).unwrap_or_default()
}

fn opt_stat_hw(v: &Option<Stat>) -> String {
    v.map(|s| fmt_f64(s.half_width_95)).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Analytic columns attached to every report row: the per-class service-time
/// floor and the speed-k cmu-system response times.
struct BoundColumns {
    service: Vec<f64>,
    service_agg: f64,
    cmu: Option<Vec<f64>>,
    cmu_agg: Option<f64>,
}

fn bound_columns(config: &SystemConfig) -> BoundColumns {
    let (service, service_agg) = lpf_service_lower_bound(config);
    let cmu_policy = PolicySpec::SingleFast { order: SingleFastOrder::CMu };
    let cmu = priority_order(&cmu_policy, config)
        .and_then(|order| priority_mm1_speed_k(config, &order))
        .ok();
    let (cmu, cmu_agg) = match cmu {
        Some(r) => (Some(r.per_class_t), Some(r.aggregate_t)),
        None => (None, None),
    };
    BoundColumns { service, service_agg, cmu, cmu_agg }
}

fn rows_from_estimate(config: &SystemConfig, est: &Estimate) -> Vec<ClassRow> {
    let bounds = bound_columns(config);
    let mut rows = Vec::with_capacity(config.num_classes() + 1);
    for (i, cls) in est.per_class.iter().enumerate() {
        rows.push(ClassRow {
            label: (i + 1).to_string(),
            mean_t: Some(cls.mean_t),
            mean_n: Some(cls.mean_n),
            bound_service: Some(bounds.service[i]),
            bound_cmu: bounds.cmu.as_ref().map(|c| c[i]),
            tail_prob: cls.tail_prob.map(|s| s.mean),
        });
    }
    rows.push(ClassRow {
        label: "all".into(),
        mean_t: Some(est.aggregate_t),
        mean_n: Some(est.aggregate_n),
        bound_service: Some(bounds.service_agg),
        bound_cmu: bounds.cmu_agg,
        tail_prob: None,
    });
    rows
}

/// (rho, alpha) implied by a regime at `k`, also for infeasible points.
pub fn regime_values(regime: ScalingRegime, k: u64) -> (f64, f64) {
    match regime {
        ScalingRegime::PowerLawAlpha { a, b } => {
            let alpha = a * (k as f64).powf(b);
            (1.0 - alpha / k as f64, alpha)
        }
        ScalingRegime::FixedRho { rho } => (rho, k as f64 * (1.0 - rho)),
    }
}

fn run_estimate(
    engine: EngineKind,
    config: &SystemConfig,
    policy: &PolicySpec,
    plan: &SimPlan,
) -> Result<Estimate> {
    match engine {
        EngineKind::Ctmc => ctmc::estimate(config, policy, plan),
        EngineKind::Event => event::estimate(config, policy, plan),
    }
}

fn point(
    engine: EngineKind,
    config: &SystemConfig,
    policy: &PolicySpec,
    plan: &SimPlan,
) -> Result<PointReport> {
    let est = run_estimate(engine, config, policy, plan)?;
    Ok(PointReport {
        k: config.k,
        policy: policy.to_string(),
        rho: config.rho,
        alpha: config.alpha,
        rows: rows_from_estimate(config, &est),
        error: None,
    })
}

/// One simulation run of one policy on one config.
pub fn cmd_simulate(
    file: &ConfigFile,
    policy: &PolicySpec,
    plan_spec: &PlanSpec,
    engine: EngineKind,
) -> Result<RunReport> {
    let config = file.resolve()?;
    let plan = plan_spec.resolve(&config)?;
    let p = point(engine, &config, policy, &plan)?;
    Ok(RunReport { points: vec![p] })
}

/// Run every (k, policy) pair of a sweep recipe. Per-point failures become
/// error rows; the command only fails outright when nothing succeeded.
pub fn cmd_sweep(sweep: &SweepFile) -> Result<RunReport> {
    if sweep.k.is_empty() {
        return Err(Error::BadSpec("sweep needs at least one k".into()));
    }
    if sweep.policies.is_empty() {
        return Err(Error::BadSpec("sweep needs at least one policy".into()));
    }
    let policies: Vec<PolicySpec> = sweep
        .policies
        .iter()
        .map(|s| PolicySpec::parse(s))
        .collect::<Result<_>>()?;
    let mut report = RunReport::default();
    for &k in &sweep.k {
        let resolved = resolve_config(k, &sweep.classes, sweep.regime);
        for policy in &policies {
            let (rho, alpha) = regime_values(sweep.regime, k);
            let outcome = resolved.as_ref().map_err(|e| e.to_string()).and_then(|config| {
                let plan = sweep.plan.resolve(config).map_err(|e| e.to_string())?;
                point(sweep.engine, config, policy, &plan).map_err(|e| e.to_string())
            });
            report.points.push(match outcome {
                Ok(p) => p,
                Err(msg) => {
                    eprintln!("point k={k} policy={policy} failed: {msg}");
                    PointReport {
                        k,
                        policy: policy.to_string(),
                        rho,
                        alpha,
                        rows: Vec::new(),
                        error: Some(msg),
                    }
                }
            });
        }
    }
    Ok(report)
}

/// Fixed-k sweep over a list of loads: rows per (rho, policy), with the
/// analytic cmu columns alongside.
pub fn cmd_heavy(
    file: &ConfigFile,
    rhos: &[f64],
    policies: &[PolicySpec],
    plan_spec: &PlanSpec,
    engine: EngineKind,
) -> Result<RunReport> {
    if rhos.is_empty() {
        return Err(Error::BadSpec("heavy needs at least one rho".into()));
    }
    if policies.is_empty() {
        return Err(Error::BadSpec("heavy needs at least one policy".into()));
    }
    let mut report = RunReport::default();
    for &rho in rhos {
        let regime = ScalingRegime::FixedRho { rho };
        let resolved = resolve_config(file.k, &file.classes, regime);
        for policy in policies {
            let outcome = resolved.as_ref().map_err(|e| e.to_string()).and_then(|config| {
                let plan = plan_spec.resolve(config).map_err(|e| e.to_string())?;
                point(engine, config, policy, &plan).map_err(|e| e.to_string())
            });
            report.points.push(match outcome {
                Ok(p) => p,
                Err(msg) => {
                    eprintln!("point rho={rho} policy={policy} failed: {msg}");
                    PointReport {
                        k: file.k,
                        policy: policy.to_string(),
                        rho,
                        alpha: file.k as f64 * (1.0 - rho),
                        rows: Vec::new(),
                        error: Some(msg),
                    }
                }
            });
        }
    }
    Ok(report)
}

/// Exact stationary solve of the truncated chain; optionally dumps the
/// distribution as `n_1..n_ell,prob` rows for states above 1e-12 mass.
pub fn cmd_oracle(
    file: &ConfigFile,
    policy: &PolicySpec,
    cap: u64,
    boundary_tolerance: Option<f64>,
    dist_out: Option<&mut dyn Write>,
) -> Result<RunReport> {
    let config = file.resolve()?;
    let mut trunc = TruncationSpec::new(cap);
    if let Some(tol) = boundary_tolerance {
        trunc.boundary_tolerance = tol;
    }
    let exact = stationary_truncated(&config, policy, trunc)?;
    if let Some(w) = dist_out {
        for (state, prob) in exact.states_above(1e-12) {
            let mut line = String::new();
            for v in &state {
                let _ = write!(line, "{v},");
            }
            let _ = writeln!(line, "{prob}");
            w.write_all(line.as_bytes())?;
        }
    }
    let bounds = bound_columns(&config);
    let mut rows = Vec::new();
    for i in 0..config.num_classes() {
        rows.push(ClassRow {
            label: (i + 1).to_string(),
            mean_t: Some(Stat { mean: exact.per_class_t[i], half_width_95: 0.0 }),
            mean_n: Some(Stat { mean: exact.per_class_n[i], half_width_95: 0.0 }),
            bound_service: Some(bounds.service[i]),
            bound_cmu: bounds.cmu.as_ref().map(|c| c[i]),
            tail_prob: None,
        });
    }
    rows.push(ClassRow {
        label: "all".into(),
        mean_t: Some(Stat { mean: exact.aggregate_t, half_width_95: 0.0 }),
        mean_n: Some(Stat { mean: exact.aggregate_n, half_width_95: 0.0 }),
        bound_service: Some(bounds.service_agg),
        bound_cmu: bounds.cmu_agg,
        tail_prob: None,
    });
    Ok(RunReport {
        points: vec![PointReport {
            k: config.k,
            policy: policy.to_string(),
            rho: config.rho,
            alpha: config.alpha,
            rows,
            error: None,
        }],
    })
}

/// Analytic bound evaluation: service-time floors, cmu response times, and
/// (for two-class configs with a tau) the THRESH class-2 bound appended as
/// an extra `thresh_t2` row in the mean_T column.
pub fn cmd_bounds(file: &ConfigFile, tau: Option<TauRule>) -> Result<RunReport> {
    let config = file.resolve()?;
    let bounds = bound_columns(&config);
    let mut rows = Vec::new();
    for i in 0..config.num_classes() {
        rows.push(ClassRow {
            label: (i + 1).to_string(),
            bound_service: Some(bounds.service[i]),
            bound_cmu: bounds.cmu.as_ref().map(|c| c[i]),
            ..ClassRow::default()
        });
    }
    rows.push(ClassRow {
        label: "all".into(),
        bound_service: Some(bounds.service_agg),
        bound_cmu: bounds.cmu_agg,
        ..ClassRow::default()
    });
    if let Some(tau) = tau {
        let tau_value = tau.eval(config.k) as f64;
        let bound = thresh_t2_bound(&config, tau_value)?;
        rows.push(ClassRow {
            label: "thresh_t2".into(),
            mean_t: Some(Stat { mean: bound, half_width_95: 0.0 }),
            ..ClassRow::default()
        });
    }
    Ok(RunReport {
        points: vec![PointReport {
            k: config.k,
            policy: "bounds".into(),
            rho: config.rho,
            alpha: config.alpha,
            rows,
            error: None,
        }],
    })
}

/// Process exit code for an error, per the documented contract:
/// 2 config/infeasible, 3 engine failure, 4 truncation failure.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::BadSpec(_)
        | Error::InfeasibleLoad(_)
        | Error::NotAPriorityPolicy(_)
        | Error::DimensionMismatch { .. }
        | Error::UnstableSystem { .. }
        | Error::WrongClassCount { .. }
        | Error::Parse(_)
        | Error::Io(_) => 2,
        Error::HyperExpUnsupported(_)
        | Error::NumericalHorizonTooSmall
        | Error::SolverStalled { .. }
        | Error::Engine(_) => 3,
        Error::TruncationInsufficient { .. } | Error::StateSpaceTooLarge { .. } => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CLASS: &str = r#"
        k = 2
        [regime]
        type = "fixed_rho"
        rho = 0.6
        [[class]]
        p = 0.5
        dist = { type = "exponential", rate = 1.0 }
        parallelism = { type = "const", m = 1 }
        [[class]]
        p = 0.5
        dist = { type = "exponential", rate = 1.0 }
        parallelism = { type = "full" }
    "#;

    fn plan() -> PlanSpec {
        PlanSpec {
            measure_time: 200.0,
            warmup_time: None,
            replications: 2,
            base_seed: 7,
            tail: None,
        }
    }

    fn plan_spec() -> PlanSpec {
        PlanSpec {
            measure_time: 100.0,
            warmup_time: Some(10.0),
            replications: 2,
            base_seed: 3,
            tail: None,
        }
    }

    fn two_classes() -> Vec<ClassSpec> {
        ConfigFile::parse(TWO_CLASS).unwrap().classes
    }

    #[test]
    fn simulate_report_shape() {
        let file = ConfigFile::parse(TWO_CLASS).unwrap();
        let report =
            cmd_simulate(&file, &PolicySpec::Lpf, &plan(), EngineKind::Ctmc).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 3, "2 class rows + aggregate");
        assert!(lines[1].starts_with("2,lpf,0.6,"));
        assert!(lines[3].contains(",all,"));
    }

    #[test]
    fn simulate_deterministic_bytes() {
        let file = ConfigFile::parse(TWO_CLASS).unwrap();
        let a = cmd_simulate(&file, &PolicySpec::Lpf, &plan(), EngineKind::Event)
            .unwrap()
            .to_csv();
        let b = cmd_simulate(&file, &PolicySpec::Lpf, &plan(), EngineKind::Event)
            .unwrap()
            .to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_error_rows_and_success_count() {
        let sweep = SweepFile {
            engine: EngineKind::Ctmc,
            k: vec![32, 16],
            policies: vec!["lpf".into()],
            // alpha = 2 k^0.75: feasible at k=32 (26.9 < 32), equal to k at 16.
            regime: ScalingRegime::PowerLawAlpha { a: 2.0, b: 0.75 },
            plan: plan_spec(),
            classes: two_classes(),
        };
        let report = cmd_sweep(&sweep).unwrap();
        assert_eq!(report.points.len(), 2);
        assert_eq!(report.succeeded_points(), 1);
        let csv = report.to_csv();
        assert!(csv.lines().any(|l| l.starts_with("16,lpf,0,16,error")), "{csv}");
    }

    #[test]
    fn heavy_bad_rho_row_proceeds() {
        let file = ConfigFile::parse(TWO_CLASS).unwrap();
        let report = cmd_heavy(
            &file,
            &[0.5, 1.0],
            &[PolicySpec::Serpt],
            &plan_spec(),
            EngineKind::Ctmc,
        )
        .unwrap();
        assert_eq!(report.points.len(), 2);
        assert_eq!(report.succeeded_points(), 1);
        assert!(report.points[1].error.is_some());
    }

    #[test]
    fn bounds_fig_values() {
        let text = r#"
            k = 256
            [regime]
            type = "power_law_alpha"
            a = 2.0
            b = 0.75
            [[class]]
            p = 0.25
            dist = { type = "exponential", rate = 0.2 }
            parallelism = { type = "const", m = 1 }
            [[class]]
            p = 0.25
            dist = { type = "exponential", rate = 0.05 }
            parallelism = { type = "const", m = 4 }
            [[class]]
            p = 0.25
            dist = { type = "exponential", rate = 0.3 }
            parallelism = { type = "log2" }
            [[class]]
            p = 0.25
            dist = { type = "exponential", rate = 0.1 }
            parallelism = { type = "full" }
        "#;
        let file = ConfigFile::parse(text).unwrap();
        let report = cmd_bounds(&file, None).unwrap();
        let rows = &report.points[0].rows;
        let service: Vec<f64> = rows[..4].iter().map(|r| r.bound_service.unwrap()).collect();
        assert_eq!(service, vec![5.0, 5.0, 1.0 / 2.4, 0.0390625]);
        let agg = rows[4].bound_service.unwrap();
        assert!((agg - 2.6139322916666667).abs() < 1e-12, "{agg}");
    }

    #[test]
    fn oracle_matches_library_example() {
        let file = ConfigFile::parse(TWO_CLASS).unwrap();
        let report = cmd_oracle(&file, &PolicySpec::Lpf, 60, None, None).unwrap();
        let rows = &report.points[0].rows;
        // Same numbers the exact-solver unit tests pin down.
        let n0 = rows[0].mean_n.unwrap().mean;
        let n1 = rows[1].mean_n.unwrap().mean;
        assert!((n0 - 0.6593406593).abs() < 1e-6, "{n0}");
        assert!((n1 - 1.0341210788).abs() < 1e-6, "{n1}");
    }

    #[test]
    fn oracle_cap_too_small_is_truncation_error() {
        let file = ConfigFile::parse(TWO_CLASS).unwrap();
        let err = cmd_oracle(&file, &PolicySpec::Lpf, 4, None, None).unwrap_err();
        assert_eq!(exit_code_for(&err), 4);
    }

    #[test]
    fn csv_quotes_policy_names_with_commas() {
        let file = ConfigFile::parse(TWO_CLASS).unwrap();
        let policy = PolicySpec::parse("prio:2,1").unwrap();
        let report = cmd_simulate(&file, &policy, &plan(), EngineKind::Ctmc).unwrap();
        let csv = report.to_csv();
        assert!(csv.contains("\"prio:2,1\""), "{csv}");
        // Quoted field leaves the column count intact.
        let cols = CSV_HEADER.split(',').count();
        for line in csv.lines().skip(1) {
            let mut in_quotes = false;
            let mut count = 1;
            for ch in line.chars() {
                match ch {
                    '"' => in_quotes = !in_quotes,
                    ',' if !in_quotes => count += 1,
                    _ => {}
                }
            }
            assert_eq!(count, cols, "{line}");
        }
    }

    #[test]
    fn sweep_rejects_empty_k() {
        let sweep = SweepFile {
            engine: EngineKind::Ctmc,
            k: vec![],
            policies: vec!["lpf".into()],
            regime: ScalingRegime::FixedRho { rho: 0.5 },
            plan: plan_spec(),
            classes: two_classes(),
        };
        let err = cmd_sweep(&sweep).unwrap_err();
        assert_eq!(exit_code_for(&err), 2);
    }

    #[test]
    fn report_rows_satisfy_alpha_identity() {
        let sweep = SweepFile {
            engine: EngineKind::Ctmc,
            k: vec![2, 8],
            policies: vec!["lpf".into(), "serpt".into()],
            regime: ScalingRegime::FixedRho { rho: 0.6 },
            plan: plan_spec(),
            classes: two_classes(),
        };
        let report = cmd_sweep(&sweep).unwrap();
        for p in &report.points {
            let want = p.k as f64 * (1.0 - p.rho);
            assert!(
                (p.alpha - want).abs() <= 1e-9 * want.max(1.0),
                "alpha {} vs k(1-rho) {want}",
                p.alpha
            );
        }
    }

    #[test]
    fn simulate_matches_oracle_within_ci() {
        let file = ConfigFile::parse(TWO_CLASS).unwrap();
        let plan = PlanSpec {
            measure_time: 30_000.0,
            warmup_time: None,
            replications: 6,
            base_seed: 19,
            tail: None,
        };
        let sim = cmd_simulate(&file, &PolicySpec::Lpf, &plan, EngineKind::Ctmc).unwrap();
        let oracle = cmd_oracle(&file, &PolicySpec::Lpf, 60, None, None).unwrap();
        let sim_all = sim.points[0].rows.last().unwrap().mean_t.unwrap();
        let exact_all = oracle.points[0].rows.last().unwrap().mean_t.unwrap().mean;
        assert!(
            (sim_all.mean - exact_all).abs() <= sim_all.half_width_95,
            "sim {} +- {} vs exact {exact_all}",
            sim_all.mean,
            sim_all.half_width_95
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code_for(&Error::BadSpec("x".into())), 2);
        assert_eq!(exit_code_for(&Error::InfeasibleLoad("x".into())), 2);
        assert_eq!(exit_code_for(&Error::NumericalHorizonTooSmall), 3);
        assert_eq!(
            exit_code_for(&Error::TruncationInsufficient { boundary_mass: 1e-3, tolerance: 1e-8 }),
            4
        );
        assert_eq!(
            exit_code_for(&Error::StateSpaceTooLarge { states: 1 << 40, limit: 10_000_000 }),
            4
        );
    }
}
