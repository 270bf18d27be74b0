//! Command-line benchmark runner: single episodes, grid sweeps, ablation
//! families, and the subspace-rate report, emitting CSV or JSON.

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spsc::harness::{
    calibrate_detector, grid_json_string, rate_csv_string, results_csv_string,
    results_json_string, run_ablation, run_episode, run_grid, subspace_rate_report,
    trace_csv_string, AblationKind, ExperimentConfig, MethodKind, CALIBRATION_RUNS,
};
use spsc::rng::{derive_seed, label_hash};
use spsc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "spsc",
    version,
    about = "Benchmark runner for piecewise-stationary low-rank bandit policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; omitted keys fall back to the synthetic
    /// benchmark defaults.
    #[arg(long)]
    config: Option<String>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<String>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Override the number of replicate seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Desk-quick mode: 3 seeds, horizon capped at 2000.
    #[arg(long)]
    quick: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single episode of one method and emit its result row.
    Run {
        #[command(flatten)]
        common: Common,
        /// Method: spsc, adaptive, linucb, sw_linucb, d_linucb,
        /// restart_linucb, oracle_linucb, lowoful, voful, lr_reward.
        #[arg(long, default_value = "spsc")]
        method: String,
        /// Replicate seed label.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the cumulative costed-regret series as t,value rows.
        #[arg(long)]
        trace_out: Option<String>,
    },
    /// Sweep the configured (d, r) grid with every configured method.
    Grid {
        #[command(flatten)]
        common: Common,
    },
    /// Run one ablation family: variance, coupling, coverage, probe_rate,
    /// rank_misspec, oracle_quality, or small_d.
    Ablate {
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Report subspace-error decay against probe count.
    Rate {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if common.quick {
        cfg = cfg.quick();
    }
    if let Some(seeds) = common.seeds {
        cfg.seeds = seeds;
    }
    Ok(cfg)
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(common: &Common, method: &str, seed: u64, trace_out: Option<&str>) -> Result<()> {
    let cfg = load_config(common)?;
    let method: MethodKind = method.parse()?;
    let pol = cfg.spsc_cfg();
    let mut det = cfg.detector_cfg();
    if method == MethodKind::Adaptive && det.threshold_b.is_none() {
        det.threshold_b = Some(calibrate_detector(
            &cfg.env_spec(0),
            &pol,
            &det,
            CALIBRATION_RUNS,
            cfg.base_seed,
        )?);
    }
    let env_seed = derive_seed(
        cfg.base_seed,
        &[
            label_hash(&cfg.experiment),
            cfg.d as u64,
            cfg.r as u64,
            cfg.segments as u64,
            cfg.horizon as u64,
            seed,
        ],
    );
    let spec = cfg.env_spec(env_seed);
    let policy_seed = derive_seed(env_seed, &[label_hash(method.as_str()), 1]);
    let out = run_episode(
        &cfg.experiment,
        &spec,
        &pol,
        &det,
        method,
        seed,
        policy_seed,
        None,
        cfg.discount,
        cfg.restart_every
            .unwrap_or_else(|| (cfg.horizon / cfg.segments).max(1)),
    )?;
    if let Some(path) = trace_out {
        std::fs::write(path, trace_csv_string(&out.trace)).map_err(|e| Error::io(path, e))?;
    }
    let rows = vec![out.result];
    match common.format {
        Format::Csv => emit(common, &results_csv_string(&rows)?),
        Format::Json => emit(common, &results_json_string(&rows)?),
    }
}

fn cmd_grid(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let output = run_grid(&cfg)?;
    match common.format {
        Format::Csv => emit(common, &results_csv_string(&output.results)?),
        Format::Json => emit(common, &grid_json_string(&output)?),
    }
}

fn cmd_ablate(common: &Common, kind: &str) -> Result<()> {
    let cfg = load_config(common)?;
    let kind: AblationKind = kind.parse()?;
    let rows = run_ablation(kind, &cfg)?;
    match common.format {
        Format::Csv => emit(common, &results_csv_string(&rows)?),
        Format::Json => emit(common, &results_json_string(&rows)?),
    }
}

fn cmd_rate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let report = subspace_rate_report(&cfg)?;
    match common.format {
        Format::Csv => emit(common, &rate_csv_string(&report)),
        Format::Json => emit(
            common,
            &serde_json::to_string_pretty(&report).map_err(|e| Error::Serde(e.to_string()))?,
        ),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Run {
            common,
            method,
            seed,
            trace_out,
        } => cmd_run(common, method, *seed, trace_out.as_deref()),
        Command::Grid { common } => cmd_grid(common),
        Command::Ablate { kind, common } => cmd_ablate(common, kind),
        Command::Rate { common } => cmd_rate(common),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
