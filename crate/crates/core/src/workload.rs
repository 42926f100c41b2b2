//! Job classes, scaling regimes, and resolution of (k, regime, classes)
//! into a validated system instance.

use serde::Deserialize;

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// Job size distribution of one class. `mean()` is the expected size on a
/// single speed-1 server; the class completion rate parameter is `1/mean()`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SizeDist {
    Exponential { rate: f64 },
    #[serde(rename = "hyperexp")]
    HyperExp { branches: Vec<Branch> },
}

/// One branch of a hyperexponential: with probability `prob` the job is
/// exponential with `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Branch {
    pub prob: f64,
    pub rate: f64,
}

impl SizeDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            SizeDist::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::BadSpec(format!("exponential rate {rate} must be > 0")));
                }
            }
            SizeDist::HyperExp { branches } => {
                if branches.is_empty() {
                    return Err(Error::BadSpec("hyperexp needs at least one branch".into()));
                }
                let mut total = 0.0;
                for b in branches {
                    if !(b.prob.is_finite() && b.prob > 0.0) {
                        return Err(Error::BadSpec(format!("branch prob {} must be > 0", b.prob)));
                    }
                    if !(b.rate.is_finite() && b.rate > 0.0) {
                        return Err(Error::BadSpec(format!("branch rate {} must be > 0", b.rate)));
                    }
                    total += b.prob;
                }
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::BadSpec(format!(
                        "hyperexp branch probabilities sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            SizeDist::Exponential { rate } => 1.0 / rate,
            SizeDist::HyperExp { branches } => branches.iter().map(|b| b.prob / b.rate).sum(),
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, SizeDist::Exponential { .. })
    }
}

/// How a class's parallelizability level scales with the number of servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParallelismRule {
    Const { m: u64 },
    Log2,
    Full,
}

impl ParallelismRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            ParallelismRule::Const { m } if *m < 1 => {
                Err(Error::BadSpec("constant parallelism level must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Evaluate a parallelism rule at `k` servers. Always in `1..=k` and
/// non-decreasing in `k`.
pub fn c_of(rule: ParallelismRule, k: u64) -> u64 {
    debug_assert!(k >= 1);
    match rule {
        ParallelismRule::Const { m } => m.min(k),
        ParallelismRule::Log2 => u64::from(k.ilog2()).max(1),
        ParallelismRule::Full => k,
    }
}

/// One job class before resolution: size distribution, arrival share, and
/// parallelism rule.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ClassSpec {
    #[serde(rename = "dist")]
    pub size: SizeDist,
    pub p: f64,
    pub parallelism: ParallelismRule,
}

impl ClassSpec {
    pub fn validate(&self) -> Result<()> {
        self.size.validate()?;
        self.parallelism.validate()?;
        if !(self.p.is_finite() && self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::BadSpec(format!("class share p = {} not in (0, 1]", self.p)));
        }
        Ok(())
    }
}

/// Arrival-rate scaling: either spare capacity `alpha(k) = a * k^b`, or a
/// fixed load independent of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalingRegime {
    PowerLawAlpha { a: f64, b: f64 },
    FixedRho { rho: f64 },
}

/// One class after resolution at a concrete `k`.
#[derive(Debug, Clone)]
pub struct ResolvedClass {
    pub size: SizeDist,
    pub parallelism: ParallelismRule,
    /// Arrival share; shares sum to 1.
    pub p: f64,
    /// Class completion rate parameter, 1 / mean size.
    pub mu: f64,
    /// Parallelizability level c_i(k).
    pub c: u64,
    /// Class arrival rate p_i * lambda_total.
    pub lambda: f64,
    /// Class load lambda_i / (k mu_i).
    pub rho: f64,
}

/// A fully resolved, validated instance: `k` servers plus per-class rates,
/// with classes sorted by ascending parallelizability.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub k: u64,
    pub classes: Vec<ResolvedClass>,
    pub lambda_total: f64,
    pub rho: f64,
    pub alpha: f64,
}

impl SystemConfig {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn all_exponential(&self) -> bool {
        self.classes.iter().all(|c| c.size.is_exponential())
    }

    /// First class index in error position if a state vector has wrong length.
    pub fn check_dims(&self, len: usize) -> Result<()> {
        if len != self.classes.len() {
            return Err(Error::DimensionMismatch { expected: self.classes.len(), got: len });
        }
        Ok(())
    }
}

/// Resolve `(k, classes, regime)` into a concrete instance.
///
/// Classes are re-sorted by ascending `c_i(k)` (stable in the original
/// order). `lambda_total` comes from `rho = (lambda/k) * sum p_i/mu_i`.
pub fn resolve_config(
    k: u64,
    classes: &[ClassSpec],
    regime: ScalingRegime,
) -> Result<SystemConfig> {
    if k < 1 {
        return Err(Error::BadSpec("k must be >= 1".into()));
    }
    if classes.is_empty() {
        return Err(Error::BadSpec("need at least one class".into()));
    }
    let mut p_total = 0.0;
    for c in classes {
        c.validate()?;
        p_total += c.p;
    }
    if (p_total - 1.0).abs() > PROB_TOL {
        return Err(Error::BadSpec(format!("class shares sum to {p_total}, expected 1")));
    }

    let (rho, alpha) = match regime {
        ScalingRegime::PowerLawAlpha { a, b } => {
            if !(a.is_finite() && a > 0.0 && b.is_finite()) {
                return Err(Error::BadSpec(format!("power-law alpha needs a > 0, got a={a} b={b}")));
            }
            let alpha = a * (k as f64).powf(b);
            let rho = 1.0 - alpha / k as f64;
            (rho, alpha)
        }
        ScalingRegime::FixedRho { rho } => (rho, k as f64 * (1.0 - rho)),
    };
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InfeasibleLoad(format!(
            "k={k} gives rho={rho}, alpha={alpha}; need 0 < rho < 1"
        )));
    }

    // lambda = rho * k / sum_i p_i / mu_i
    let mean_size: f64 = classes.iter().map(|c| c.p * c.size.mean()).sum();
    let lambda_total = rho * k as f64 / mean_size;

    let mut resolved: Vec<ResolvedClass> = classes
        .iter()
        .map(|spec| {
            let mu = 1.0 / spec.size.mean();
            let lambda = spec.p * lambda_total;
            ResolvedClass {
                size: spec.size.clone(),
                parallelism: spec.parallelism,
                p: spec.p,
                mu,
                c: c_of(spec.parallelism, k),
                lambda,
                rho: lambda / (k as f64 * mu),
            }
        })
        .collect();
    // Canonical ordering: ascending c, ties by original position (stable sort).
    resolved.sort_by_key(|c| c.c);

    let config = SystemConfig { k, classes: resolved, lambda_total, rho, alpha };
    let rho_sum: f64 = config.classes.iter().map(|c| c.rho).sum();
    debug_assert!((rho_sum - rho).abs() <= 1e-9 * rho.max(1.0));
    debug_assert!((k as f64 * (1.0 - rho) - alpha).abs() <= 1e-9 * alpha.max(1.0));
    Ok(config)
}

/// Asymptotic per-class service-time floor `1/(c_i mu_i)` and the share-
/// weighted aggregate. This is the "lower bound" curve for light-load sweeps.
pub fn lpf_service_lower_bound(config: &SystemConfig) -> (Vec<f64>, f64) {
    let per_class: Vec<f64> =
        config.classes.iter().map(|c| 1.0 / (c.c as f64 * c.mu)).collect();
    let aggregate = config
        .classes
        .iter()
        .zip(&per_class)
        .map(|(c, t)| c.p * t)
        .sum();
    (per_class, aggregate)
}

/// Structured config file: `k`, a `[regime]` table, and repeated `[[class]]`
/// blocks. See the README for the key schema.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub k: u64,
    pub regime: ScalingRegime,
    #[serde(rename = "class")]
    pub classes: Vec<ClassSpec>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn resolve(&self) -> Result<SystemConfig> {
        resolve_config(self.k, &self.classes, self.regime)
    }
}

/// The four-class mix used by the bundled sweep recipes: c rules
/// (1, 4, log2 k, k) with completion rates (.2, .05, .3, .1) and equal shares.
pub fn fig_classes() -> Vec<ClassSpec> {
    let rates = [0.2, 0.05, 0.3, 0.1];
    let rules = [
        ParallelismRule::Const { m: 1 },
        ParallelismRule::Const { m: 4 },
        ParallelismRule::Log2,
        ParallelismRule::Full,
    ];
    rates
        .iter()
        .zip(rules)
        .map(|(&rate, parallelism)| ClassSpec {
            size: SizeDist::Exponential { rate },
            p: 0.25,
            parallelism,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn c_of_examples() {
        assert_eq!(c_of(ParallelismRule::Log2, 256), 8);
        assert_eq!(c_of(ParallelismRule::Full, 64), 64);
        assert_eq!(c_of(ParallelismRule::Const { m: 4 }, 2), 2);
        assert_eq!(c_of(ParallelismRule::Log2, 1), 1);
    }

    #[test]
    fn c_of_monotone_and_bounded() {
        for rule in [
            ParallelismRule::Const { m: 7 },
            ParallelismRule::Log2,
            ParallelismRule::Full,
        ] {
            let mut prev = 0;
            for k in 1..=2048 {
                let c = c_of(rule, k);
                assert!(c >= 1 && c <= k, "c_of out of range at k={k}");
                assert!(c >= prev, "c_of not monotone at k={k}");
                prev = c;
            }
        }
    }

    #[test]
    fn resolve_fig_classes_at_256() {
        let cfg = resolve_config(
            256,
            &fig_classes(),
            ScalingRegime::PowerLawAlpha { a: 2.0, b: 0.75 },
        )
        .unwrap();
        assert_eq!(cfg.alpha, 128.0);
        assert_eq!(cfg.rho, 0.5);
        let cs: Vec<u64> = cfg.classes.iter().map(|c| c.c).collect();
        assert_eq!(cs, vec![1, 4, 8, 256]);
        let mus: Vec<f64> = cfg.classes.iter().map(|c| c.mu).collect();
        assert!(close(mus[0], 0.2, 1e-12));
        assert!(close(mus[1], 0.05, 1e-12));
        let rho_sum: f64 = cfg.classes.iter().map(|c| c.rho).sum();
        assert!(close(rho_sum, 0.5, 1e-12));
    }

    #[test]
    fn resolve_single_class_m_m_1() {
        let classes = vec![ClassSpec {
            size: SizeDist::Exponential { rate: 1.0 },
            p: 1.0,
            parallelism: ParallelismRule::Const { m: 1 },
        }];
        let cfg = resolve_config(1, &classes, ScalingRegime::FixedRho { rho: 0.5 }).unwrap();
        assert!(close(cfg.lambda_total, 0.5, 1e-12));
        assert!(close(cfg.rho, 0.5, 1e-12));
        assert!(close(cfg.alpha, 0.5, 1e-12));
    }

    #[test]
    fn resolve_infeasible_when_alpha_hits_k() {
        let err = resolve_config(
            16,
            &fig_classes(),
            ScalingRegime::PowerLawAlpha { a: 2.0, b: 0.75 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InfeasibleLoad(_)), "got {err:?}");
    }

    #[test]
    fn bad_shares_rejected() {
        let mut classes = fig_classes();
        classes[0].p = 0.3;
        let err =
            resolve_config(64, &classes, ScalingRegime::FixedRho { rho: 0.5 }).unwrap_err();
        assert!(matches!(err, Error::BadSpec(_)));
    }

    #[test]
    fn lower_bound_fig_classes() {
        let cfg = resolve_config(
            256,
            &fig_classes(),
            ScalingRegime::PowerLawAlpha { a: 2.0, b: 0.75 },
        )
        .unwrap();
        let (per_class, agg) = lpf_service_lower_bound(&cfg);
        assert!(close(per_class[0], 5.0, 1e-12));
        assert!(close(per_class[1], 5.0, 1e-12));
        assert!(close(per_class[2], 1.0 / 2.4, 1e-12));
        assert!(close(per_class[3], 0.0390625, 1e-12));
        assert!(close(agg, 0.25 * (5.0 + 5.0 + 1.0 / 2.4 + 0.0390625), 1e-12));
    }

    #[test]
    fn lower_bound_trivial_cases() {
        let one = |rule, k, rate| {
            let cfg = resolve_config(
                k,
                &[ClassSpec {
                    size: SizeDist::Exponential { rate },
                    p: 1.0,
                    parallelism: rule,
                }],
                ScalingRegime::FixedRho { rho: 0.5 },
            )
            .unwrap();
            lpf_service_lower_bound(&cfg).1
        };
        assert!(close(one(ParallelismRule::Full, 10, 1.0), 0.1, 1e-12));
        assert!(close(one(ParallelismRule::Const { m: 1 }, 10, 2.0), 0.5, 1e-12));
    }

    #[test]
    fn rho_increasing_in_k_for_sublinear_alpha() {
        let mut prev = 0.0;
        for k in [32u64, 64, 128, 256, 512, 1024] {
            let cfg = resolve_config(
                k,
                &fig_classes(),
                ScalingRegime::PowerLawAlpha { a: 2.0, b: 0.75 },
            )
            .unwrap();
            assert!(cfg.rho > prev, "rho not increasing at k={k}");
            prev = cfg.rho;
        }
    }

    #[test]
    fn resolution_sort_is_order_insensitive() {
        let classes = fig_classes();
        let mut shuffled = classes.clone();
        shuffled.swap(0, 3);
        shuffled.swap(1, 2);
        let a = resolve_config(64, &classes, ScalingRegime::FixedRho { rho: 0.5 }).unwrap();
        let b = resolve_config(64, &shuffled, ScalingRegime::FixedRho { rho: 0.5 }).unwrap();
        let key = |cfg: &SystemConfig| -> Vec<(u64, u64)> {
            cfg.classes.iter().map(|c| (c.c, c.mu.to_bits())).collect()
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn hyperexp_mean_and_validation() {
        let d = SizeDist::HyperExp {
            branches: vec![
                Branch { prob: 0.5, rate: 0.5 },
                Branch { prob: 0.5, rate: 2.0 },
            ],
        };
        d.validate().unwrap();
        assert!(close(d.mean(), 0.5 / 0.5 + 0.5 / 2.0, 1e-12));

        let bad = SizeDist::HyperExp {
            branches: vec![
                Branch { prob: 0.6, rate: 1.0 },
                Branch { prob: 0.5, rate: 1.0 },
            ],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_file_round_trip() {
        let text = r#"
            k = 256

            [regime]
            type = "power_law_alpha"
            a = 2.0
            b = 0.75

            [[class]]
            p = 0.5
            dist = { type = "exponential", rate = 0.2 }
            parallelism = { type = "const", m = 1 }

            [[class]]
            p = 0.5
            dist = { type = "hyperexp", branches = [ { prob = 0.5, rate = 0.5 }, { prob = 0.5, rate = 2.0 } ] }
            parallelism = { type = "full" }
        "#;
        let file = ConfigFile::parse(text).unwrap();
        let cfg = file.resolve().unwrap();
        assert_eq!(cfg.k, 256);
        assert_eq!(cfg.classes[1].c, 256);
        assert!(!cfg.all_exponential());
    }

    #[test]
    fn parse_error_reports_location() {
        let err = ConfigFile::parse("k = \"not a number\"\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line") || msg.contains('k'), "unhelpful parse error: {msg}");
    }
}
