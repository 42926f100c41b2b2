use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use malsched::{
    cmd_bounds, cmd_heavy, cmd_oracle, cmd_simulate, cmd_sweep, exit_code_for, EngineKind,
    PlanSpec, RunReport, SweepFile, TailSpec,
};
use malsched_core::error::{Error, Result};
use malsched_core::policy::{PolicySpec, TauRule};
use malsched_core::workload::ConfigFile;
use malsched_core::{ctmc, event};

/// Simulation and exact analysis of multiclass malleable-job scheduling.
#[derive(Parser)]
#[command(name = "malsched", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PlanFlags {
    /// Measurement window length in simulated time units.
    #[arg(long = "time", default_value_t = 2000.0)]
    measure_time: f64,
    /// Warmup length; defaults to 20% of the measurement window.
    #[arg(long = "warmup")]
    warmup_time: Option<f64>,
    /// Independent replications.
    #[arg(long = "reps", default_value_t = 8)]
    replications: u32,
    /// Base seed; replication r uses seed + r.
    #[arg(long = "seed", default_value_t = 0)]
    seed: u64,
    /// Tail thresholds: `beta` or a comma list of per-class levels.
    #[arg(long = "tail")]
    tail: Option<String>,
}

impl PlanFlags {
    fn to_spec(&self) -> Result<PlanSpec> {
        Ok(PlanSpec {
            measure_time: self.measure_time,
            warmup_time: self.warmup_time,
            replications: self.replications,
            base_seed: self.seed,
            tail: match &self.tail {
                Some(s) => Some(TailSpec::parse(s)?),
                None => None,
            },
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy on one config and print a report row.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// lpf | serpt | thresh[:tau=...] | prio:<comma order> | cmu | lpf1
        #[arg(long)]
        policy: String,
        #[arg(long, default_value = "ctmc")]
        engine: String,
        #[command(flatten)]
        plan: PlanFlags,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a `time,n_1..,a_1..` trajectory CSV of the first
        /// replication (ctmc engine).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write an `id,class,arrival,departure,phase_rate` job trace of the
        /// first replication (event engine).
        #[arg(long = "job-trace")]
        job_trace: Option<PathBuf>,
    },
    /// Run a sweep recipe: every (k, policy) pair of the file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed-k load sweep: rows per (rho, policy).
    Heavy {
        #[arg(long)]
        config: PathBuf,
        /// Comma list of loads, e.g. 0.9,0.95,0.99.
        #[arg(long)]
        rho: String,
        /// Repeatable policy flag.
        #[arg(long = "policy", required = true)]
        policies: Vec<String>,
        #[arg(long, default_value = "ctmc")]
        engine: String,
        #[command(flatten)]
        plan: PlanFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact truncated-chain solve of one policy on one config.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: String,
        /// Per-class truncation cap.
        #[arg(long)]
        cap: u64,
        /// Maximum stationary mass allowed on the truncation boundary.
        #[arg(long = "boundary-tol")]
        boundary_tol: Option<f64>,
        /// Dump the stationary distribution (`n_1..n_ell,prob`) to a file.
        #[arg(long = "dist-out")]
        dist_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate analytic bounds for a config.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        /// THRESH threshold (two-class configs): klogk, <m>k, or an integer.
        #[arg(long)]
        tau: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_config(path: &PathBuf) -> Result<ConfigFile> {
    ConfigFile::parse(&fs::read_to_string(path)?)
}

fn write_report(report: &RunReport, out: Option<&PathBuf>) -> Result<()> {
    let csv = report.to_csv();
    match out {
        Some(path) => fs::write(path, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, policy, engine, plan, out, trace, job_trace } => {
            let file = read_config(&config)?;
            let policy = PolicySpec::parse(&policy)?;
            let engine: EngineKind = engine.parse()?;
            let spec = plan.to_spec()?;
            let report = cmd_simulate(&file, &policy, &spec, engine)?;
            if let Some(path) = trace {
                let cfg = file.resolve()?;
                let sim_plan = spec.resolve(&cfg)?;
                let mut w = Vec::new();
                ctmc::simulate_once_traced(&cfg, &policy, &sim_plan, sim_plan.base_seed, Some(&mut w))?;
                fs::write(path, w)?;
            }
            if let Some(path) = job_trace {
                let cfg = file.resolve()?;
                let sim_plan = spec.resolve(&cfg)?;
                let (_, records) =
                    event::run_with_records(&cfg, &policy, &sim_plan, sim_plan.base_seed)?;
                let mut w = String::from("id,class,arrival,departure,phase_rate\n");
                for r in records {
                    w.push_str(&format!(
                        "{},{},{},{},{}\n",
                        r.id,
                        r.class + 1,
                        r.arrival_time,
                        r.departure_time,
                        r.phase_rate
                    ));
                }
                fs::write(path, w)?;
            }
            write_report(&report, out.as_ref())
        }
        Command::Sweep { config, out } => {
            let sweep = SweepFile::parse(&fs::read_to_string(&config)?)?;
            let report = cmd_sweep(&sweep)?;
            write_report(&report, out.as_ref())?;
            if report.succeeded_points() == 0 {
                return Err(Error::Engine("every sweep point failed".into()));
            }
            Ok(())
        }
        Command::Heavy { config, rho, policies, engine, plan, out } => {
            let file = read_config(&config)?;
            let rhos: Vec<f64> = rho
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::BadSpec(format!("bad rho {p:?}")))
                })
                .collect::<Result<_>>()?;
            let policies: Vec<PolicySpec> = policies
                .iter()
                .map(|s| PolicySpec::parse(s))
                .collect::<Result<_>>()?;
            let engine: EngineKind = engine.parse()?;
            let report = cmd_heavy(&file, &rhos, &policies, &plan.to_spec()?, engine)?;
            write_report(&report, out.as_ref())?;
            if report.succeeded_points() == 0 {
                return Err(Error::Engine("every heavy point failed".into()));
            }
            Ok(())
        }
        Command::Oracle { config, policy, cap, boundary_tol, dist_out, out } => {
            let file = read_config(&config)?;
            let policy = PolicySpec::parse(&policy)?;
            let report = match dist_out {
                Some(path) => {
                    let mut buf: Vec<u8> = Vec::new();
                    let report = cmd_oracle(&file, &policy, cap, boundary_tol, Some(&mut buf))?;
                    fs::write(path, buf)?;
                    report
                }
                None => cmd_oracle(&file, &policy, cap, boundary_tol, None)?,
            };
            write_report(&report, out.as_ref())
        }
        Command::Bounds { config, tau, out } => {
            let file = read_config(&config)?;
            let tau = match tau {
                Some(s) => Some(TauRule::parse(&s)?),
                None => None,
            };
            let report = cmd_bounds(&file, tau)?;
            write_report(&report, out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
