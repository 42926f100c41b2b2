//! Scheduling policies: map per-class job counts to a feasible per-class
//! server allocation, plus the priority orders for the single-fast-server
//! comparison systems.

use std::fmt;

use crate::error::{Error, Result};
use crate::workload::SystemConfig;

/// Per-class job counts, the full observable state for class-level policies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateCounts(pub Vec<u64>);

/// Per-class server assignment. Always feasible: `sum a_i <= k`,
/// `a_i <= n_i * c_i`, and work-conserving.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation(pub Vec<u64>);

/// Threshold rule for THRESH, evaluated at a concrete `k`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TauRule {
    /// tau = ceil(k ln k), clamped to >= 1.
    #[default]
    KLogK,
    /// tau = ceil(m k).
    Multiple { m: f64 },
    /// tau fixed, independent of k.
    Fixed { t: u64 },
}

impl TauRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            TauRule::Multiple { m } if !(m.is_finite() && *m > 0.0) => {
                Err(Error::BadSpec(format!("tau multiple {m} must be > 0")))
            }
            TauRule::Fixed { t } if *t < 1 => {
                Err(Error::BadSpec("fixed tau must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, k: u64) -> u64 {
        let tau = match self {
            TauRule::KLogK => (k as f64 * (k as f64).ln()).ceil() as u64,
            TauRule::Multiple { m } => (m * k as f64).ceil() as u64,
            TauRule::Fixed { t } => *t,
        };
        tau.max(1)
    }

    /// Parse the CLI tau syntax: `klogk`, `<m>k` (e.g. `1.5k`), or a plain
    /// integer.
    pub fn parse(s: &str) -> Result<TauRule> {
        let rule = parse_tau(s.trim())?;
        rule.validate()?;
        Ok(rule)
    }
}

/// Priority source for the single-fast-server engine.
#[derive(Debug, Clone, PartialEq)]
pub enum SingleFastOrder {
    /// Descending mu: the speed-k lower-bound system.
    CMu,
    /// Ascending c: the least-parallelizable-first comparison system.
    Lpf1,
    Explicit(Vec<usize>),
}

/// A scheduling policy over the k-server system (or its single-fast-server
/// comparison variant).
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Strict preemptive priority to the least parallelizable classes.
    Lpf,
    /// Strict preemptive priority to the classes with the smallest expected
    /// remaining size 1/mu_i.
    Serpt,
    /// LPF while the total job count is <= tau(k), SERPT above it.
    Thresh { tau: TauRule },
    /// Greedy fill in an explicit class order.
    FixedPriority { order: Vec<usize> },
    /// One server of speed k serving the highest-priority nonempty class.
    SingleFast { order: SingleFastOrder },
}

impl PolicySpec {
    /// Parse the CLI/config policy syntax:
    /// `lpf | serpt | thresh[:tau=...] | prio:<comma order> | cmu | lpf1`.
    /// Priority orders are 1-based in the string form. Tau accepts `klogk`,
    /// `<m>k` (e.g. `1.5k`), or a plain integer.
    pub fn parse(s: &str) -> Result<PolicySpec> {
        let s = s.trim();
        match s {
            "lpf" => return Ok(PolicySpec::Lpf),
            "serpt" => return Ok(PolicySpec::Serpt),
            "thresh" => return Ok(PolicySpec::Thresh { tau: TauRule::default() }),
            "cmu" => return Ok(PolicySpec::SingleFast { order: SingleFastOrder::CMu }),
            "lpf1" => return Ok(PolicySpec::SingleFast { order: SingleFastOrder::Lpf1 }),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("thresh:tau=") {
            let tau = parse_tau(rest)?;
            tau.validate()?;
            return Ok(PolicySpec::Thresh { tau });
        }
        if let Some(rest) = s.strip_prefix("prio:") {
            let mut order = Vec::new();
            for part in rest.split(',') {
                let idx: usize = part
                    .trim()
                    .parse()
                    .map_err(|_| Error::BadSpec(format!("bad priority index {part:?}")))?;
                if idx == 0 {
                    return Err(Error::BadSpec("priority indices are 1-based".into()));
                }
                order.push(idx - 1);
            }
            return Ok(PolicySpec::FixedPriority { order });
        }
        Err(Error::BadSpec(format!("unknown policy {s:?}")))
    }
}

fn parse_tau(s: &str) -> Result<TauRule> {
    if s == "klogk" {
        return Ok(TauRule::KLogK);
    }
    if let Some(m) = s.strip_suffix('k') {
        let m: f64 = m
            .parse()
            .map_err(|_| Error::BadSpec(format!("bad tau multiple {s:?}")))?;
        return Ok(TauRule::Multiple { m });
    }
    let t: u64 = s
        .parse()
        .map_err(|_| Error::BadSpec(format!("bad tau {s:?}")))?;
    Ok(TauRule::Fixed { t })
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Lpf => write!(f, "lpf"),
            PolicySpec::Serpt => write!(f, "serpt"),
            PolicySpec::Thresh { tau } => match tau {
                TauRule::KLogK => write!(f, "thresh:tau=klogk"),
                TauRule::Multiple { m } => write!(f, "thresh:tau={m}k"),
                TauRule::Fixed { t } => write!(f, "thresh:tau={t}"),
            },
            PolicySpec::FixedPriority { order } => {
                write!(f, "prio:")?;
                for (i, idx) in order.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{}", idx + 1)?;
                }
                Ok(())
            }
            PolicySpec::SingleFast { order } => match order {
                SingleFastOrder::CMu => write!(f, "cmu"),
                SingleFastOrder::Lpf1 => write!(f, "lpf1"),
                SingleFastOrder::Explicit(order) => {
                    write!(f, "fast:")?;
                    for (i, idx) in order.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{}", idx + 1)?;
                    }
                    Ok(())
                }
            },
        }
    }
}

fn lpf_order(config: &SystemConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..config.num_classes()).collect();
    order.sort_by_key(|&i| config.classes[i].c);
    order
}

fn serpt_order(config: &SystemConfig) -> Vec<usize> {
    // Ascending expected remaining size 1/mu, i.e. descending mu; ties by
    // ascending class index (stable sort).
    let mut order: Vec<usize> = (0..config.num_classes()).collect();
    order.sort_by(|&a, &b| {
        config.classes[b]
            .mu
            .partial_cmp(&config.classes[a].mu)
            .expect("mu is finite")
    });
    order
}

fn check_permutation(order: &[usize], num_classes: usize) -> Result<()> {
    if order.len() != num_classes {
        return Err(Error::DimensionMismatch { expected: num_classes, got: order.len() });
    }
    let mut seen = vec![false; num_classes];
    for &i in order {
        if i >= num_classes || seen[i] {
            return Err(Error::BadSpec(format!("order {order:?} is not a permutation")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Static priority order of a policy over a config's classes.
///
/// THRESH has no static order (it is state-dependent) and returns
/// `NotAPriorityPolicy`.
pub fn priority_order(policy: &PolicySpec, config: &SystemConfig) -> Result<Vec<usize>> {
    match policy {
        PolicySpec::Lpf => Ok(lpf_order(config)),
        PolicySpec::Serpt => Ok(serpt_order(config)),
        PolicySpec::Thresh { .. } => Err(Error::NotAPriorityPolicy("thresh".into())),
        PolicySpec::FixedPriority { order } => {
            check_permutation(order, config.num_classes())?;
            Ok(order.clone())
        }
        PolicySpec::SingleFast { order } => match order {
            SingleFastOrder::CMu => Ok(serpt_order(config)),
            SingleFastOrder::Lpf1 => Ok(lpf_order(config)),
            SingleFastOrder::Explicit(order) => {
                check_permutation(order, config.num_classes())?;
                Ok(order.clone())
            }
        },
    }
}

/// A policy compiled against one config: orders and thresholds precomputed
/// so engines can allocate in O(number of classes) per event.
#[derive(Debug, Clone)]
pub struct PreparedPolicy {
    spec: PolicySpec,
    k: u64,
    caps: Vec<u64>,
    kind: PreparedKind,
}

#[derive(Debug, Clone)]
enum PreparedKind {
    Greedy { order: Vec<usize> },
    Thresh { lpf: Vec<usize>, serpt: Vec<usize>, tau: u64 },
    SingleFast { order: Vec<usize> },
}

impl PreparedPolicy {
    pub fn new(policy: &PolicySpec, config: &SystemConfig) -> Result<PreparedPolicy> {
        let kind = match policy {
            PolicySpec::Lpf | PolicySpec::Serpt | PolicySpec::FixedPriority { .. } => {
                PreparedKind::Greedy { order: priority_order(policy, config)? }
            }
            PolicySpec::Thresh { tau } => {
                tau.validate()?;
                PreparedKind::Thresh {
                    lpf: lpf_order(config),
                    serpt: serpt_order(config),
                    tau: tau.eval(config.k),
                }
            }
            PolicySpec::SingleFast { .. } => {
                PreparedKind::SingleFast { order: priority_order(policy, config)? }
            }
        };
        Ok(PreparedPolicy {
            spec: policy.clone(),
            k: config.k,
            caps: config.classes.iter().map(|c| c.c).collect(),
            kind,
        })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn is_single_fast(&self) -> bool {
        matches!(self.kind, PreparedKind::SingleFast { .. })
    }

    /// Threshold value tau(k) when this is a THRESH policy.
    pub fn tau(&self) -> Option<u64> {
        match &self.kind {
            PreparedKind::Thresh { tau, .. } => Some(*tau),
            _ => None,
        }
    }

    /// Greedy fill of `k` servers in priority order; `out` must have one slot
    /// per class. Panics if called on a single-fast policy.
    pub fn allocate_into(&self, counts: &[u64], out: &mut [u64]) {
        debug_assert_eq!(counts.len(), self.caps.len());
        debug_assert_eq!(out.len(), self.caps.len());
        let order = match &self.kind {
            PreparedKind::Greedy { order } => order,
            PreparedKind::Thresh { lpf, serpt, tau } => {
                let total: u64 = counts.iter().sum();
                if total <= *tau {
                    lpf
                } else {
                    serpt
                }
            }
            PreparedKind::SingleFast { .. } => {
                panic!("allocate_into on a single-fast policy")
            }
        };
        out.fill(0);
        let mut budget = self.k;
        for &i in order {
            let want = counts[i].saturating_mul(self.caps[i]);
            let got = want.min(budget);
            out[i] = got;
            budget -= got;
            if budget == 0 {
                break;
            }
        }
    }

    /// Single-fast-server decision: the highest-priority nonempty class and
    /// its speed-k completion rate, or `None` when the system is empty.
    pub fn single_fast_pick(&self, counts: &[u64], mus: &[f64]) -> Option<(usize, f64)> {
        let order = match &self.kind {
            PreparedKind::SingleFast { order } => order,
            _ => panic!("single_fast_pick on a k-server policy"),
        };
        for &i in order {
            if counts[i] > 0 {
                return Some((i, self.k as f64 * mus[i]));
            }
        }
        None
    }
}

/// Allocate servers for one state under a policy.
pub fn allocate(
    policy: &PolicySpec,
    state: &StateCounts,
    config: &SystemConfig,
) -> Result<Allocation> {
    config.check_dims(state.0.len())?;
    if matches!(policy, PolicySpec::SingleFast { .. }) {
        return Err(Error::BadSpec(
            "single-fast policies allocate via single_fast_rate, not allocate".into(),
        ));
    }
    let prepared = PreparedPolicy::new(policy, config)?;
    let mut out = vec![0u64; state.0.len()];
    prepared.allocate_into(&state.0, &mut out);
    Ok(Allocation(out))
}

/// Class served by a single-fast-server policy in a given state, with its
/// completion rate `k * mu_j`; `None` (rate 0) when all classes are empty.
pub fn single_fast_rate(
    policy: &PolicySpec,
    state: &StateCounts,
    config: &SystemConfig,
) -> Result<(Option<usize>, f64)> {
    config.check_dims(state.0.len())?;
    if !matches!(policy, PolicySpec::SingleFast { .. }) {
        return Err(Error::BadSpec(format!("{policy} is not a single-fast policy")));
    }
    let prepared = PreparedPolicy::new(policy, config)?;
    let mus: Vec<f64> = config.classes.iter().map(|c| c.mu).collect();
    Ok(match prepared.single_fast_pick(&state.0, &mus) {
        Some((class, rate)) => (Some(class), rate),
        None => (None, 0.0),
    })
}
