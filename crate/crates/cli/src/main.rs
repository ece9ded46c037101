//! `ncl`: run consensus and distributed-optimization experiments from JSON configs.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ncl::harness::{run_experiment, ExperimentConfig, ExperimentOutput, RunOptions, Scenario};
use ncl::Error;

#[derive(Parser)]
#[command(name = "ncl", version, about = "Nonlinear consensus and distributed optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate a consensus operator without an objective.
    Consensus(Common),
    /// Run one optimizer configuration for every seed.
    Optimize(Common),
    /// Run every operator in the config for every seed.
    Sweep(Common),
    /// Regenerate figure 3 (gap) or 4 (deviation) as median curves.
    Reproduce {
        #[command(flatten)]
        common: Common,
        /// Which figure; defaults to the config's scenario, else 3.
        #[arg(long, value_enum)]
        figure: Option<Figure>,
    },
    /// Run the built-in self-check suite.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; the config's seed list is shifted to start here.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "ncl-out")]
    out: PathBuf,
    /// Reuse run records whose config hash matches.
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    #[value(name = "3")]
    Three,
    #[value(name = "4")]
    Four,
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(common: &Common) -> Result<ExperimentConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_base_seed(seed);
    }
    Ok(cfg)
}

fn pick_scenario(cfg: &mut ExperimentConfig, wanted: &[Scenario], default: Scenario) -> Result<(), String> {
    match cfg.scenario {
        Some(s) if wanted.contains(&s) => Ok(()),
        Some(s) => Err(format!("config scenario {s:?} does not match this subcommand")),
        None => {
            cfg.scenario = Some(default);
            Ok(())
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Json(_)
            | Error::Parameter(_)
            | Error::Topology(_)
            | Error::Disconnected { .. }
            | Error::SelfLoop(_)
            | Error::NodeOutOfRange { .. }
            | Error::SupportViolation { .. }
    )
}

fn report(out: &ExperimentOutput) {
    if let Some(v) = &out.validation {
        for c in &v.checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if let Some(t) = &out.t_epsilon {
        for c in &t.comparisons {
            println!(
                "T_eps eps={} p={}: median T1={:?} Tp={:?} linear slower: {}",
                c.eps, c.p, c.median_t1, c.median_tp, c.linear_slower
            );
        }
    }
    if !out.records.is_empty() {
        println!("{} runs ({} resumed)", out.records.len(), out.resumed);
    }
    println!("{} files written", out.files.len());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, wanted, default): (&Common, Vec<Scenario>, Scenario) = match &cli.command {
        Command::Consensus(c) => (c, vec![Scenario::PureConsensus], Scenario::PureConsensus),
        Command::Optimize(c) => (c, vec![Scenario::Optimize], Scenario::Optimize),
        Command::Sweep(c) => (c, vec![Scenario::Sweep], Scenario::Sweep),
        Command::Validate(c) => (c, vec![Scenario::Validate], Scenario::Validate),
        Command::Reproduce { common, figure } => {
            let (wanted, default) = match figure {
                Some(Figure::Three) => (vec![Scenario::ReproduceFig3], Scenario::ReproduceFig3),
                Some(Figure::Four) => (vec![Scenario::ReproduceFig4], Scenario::ReproduceFig4),
                None => (vec![Scenario::ReproduceFig3, Scenario::ReproduceFig4], Scenario::ReproduceFig3),
            };
            (common, wanted, default)
        }
    };
    let mut cfg = match load(common) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(msg) = pick_scenario(&mut cfg, &wanted, default) {
        eprintln!("config error: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Err(e) = cfg.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let opts = RunOptions {
        out: common.out.clone(),
        resume: common.resume,
    };
    match run_experiment(&cfg, &opts) {
        Ok(out) => {
            report(&out);
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("validation failed");
                ExitCode::from(EXIT_FAILED)
            }
        }
        Err(e) if is_config_error(&e) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
