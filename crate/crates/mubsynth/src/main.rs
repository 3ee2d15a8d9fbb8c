//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration problem, 3 unwritable output,
//! 4 unreadable/incompatible solution file. Every command is deterministic
//! given its inputs and seeds; diagnostics go to stderr so stdout and all
//! output files are stable byte for byte.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use mubsynth::config::OptimizeRunConfig;
use mubsynth::core::mub::{self, TransferSet};
use mubsynth::core::optimize::{eom_sharing_report, leakage};
use mubsynth::core::qkd::{self, PerturbationConfig, QberWeighting};
use mubsynth::core::{chipscan, Error as CoreError};
use mubsynth::{report, run, solution_file, IoLayerError};

#[derive(Parser)]
#[command(
    name = "mubsynth",
    about = "Synthesize and stress-test mutually unbiased bases for time-bin qudits",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a MUB phase configuration and write a solution file.
    Optimize(OptimizeArgs),
    /// Compute probability tables and basis states for a solution.
    Evaluate(EvaluateArgs),
    /// Monte-Carlo phase-error sweep: QBER and secret-key fraction vs sigma.
    Qkd(QkdArgs),
    /// MUB error as a function of retained FBG chips.
    Chipscan(ChipscanArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    /// TOML run configuration (device + optimizer sections).
    #[arg(long)]
    config: PathBuf,
    /// Output solution file.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for restarts (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Per-restart progress on stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Solution file to evaluate.
    #[arg(long)]
    solution: PathBuf,
    /// Output directory for probabilities.csv and states.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct QkdArgs {
    /// Solution file to perturb.
    #[arg(long)]
    solution: PathBuf,
    /// Comma-separated noise levels in radians, e.g. "0,0.05,0.1".
    #[arg(long)]
    sigmas: String,
    /// Monte-Carlo trials per noise level.
    #[arg(long, default_value_t = 1000)]
    trials: u32,
    /// RNG seed for the perturbation streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Weight matched-basis statistics by detection probability.
    #[arg(long)]
    weighted_qber: bool,
    /// Also dump every per-trial QBER/SKF pair next to the CSV.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct ChipscanArgs {
    /// Solution file to truncate.
    #[arg(long)]
    solution: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Qkd(args) => cmd_qkd(args),
        Command::Chipscan(args) => cmd_chipscan(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}

fn cmd_optimize(args: OptimizeArgs) -> mubsynth::Result<()> {
    let config = OptimizeRunConfig::load(&args.config)?;
    let spec = config.device.to_spec()?;
    let mut optimizer = config.optimizer_config();
    if let Some(seed) = args.seed {
        optimizer.rng_seed = seed;
    }

    let started = std::time::Instant::now();
    let mut solution = run::optimize_parallel(&spec, &optimizer, args.workers, args.verbose)?;
    solution.set_wall_time(started.elapsed().as_secs_f64());

    solution_file::write(&args.out, &solution)?;

    let transfer = TransferSet::from_solution(&solution)?;
    let meta = solution.metadata();
    println!("achieved_mse = {}", solution.achieved_mse());
    println!("leakage = {}", leakage(&transfer));
    println!(
        "restarts = {} (best {}, converged {})",
        meta.restarts, meta.best_restart, meta.converged
    );
    println!("iterations = {}", meta.iterations);
    let sharing = eom_sharing_report(&solution);
    for (cell, distance) in sharing.iter().enumerate() {
        println!("eom_pattern_spread[cell {cell}] = {distance}");
    }
    eprintln!("wall time: {:.1} s", meta.wall_time_s);
    eprintln!("solution written to {}", args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> mubsynth::Result<()> {
    let solution = solution_file::read(&args.solution)?;
    let transfer = TransferSet::from_solution(&solution)?;
    let states = mub::basis_states(&transfer)?;
    let tables = mub::probability_tables(&transfer, &states)?;

    std::fs::create_dir_all(&args.out).map_err(|e| IoLayerError::Output {
        path: args.out.display().to_string(),
        reason: e.to_string(),
    })?;
    report::write_probability_csv(&args.out.join("probabilities.csv"), &tables)?;
    report::write_states_csv(&args.out.join("states.csv"), &states)?;

    let quality = mub::table_quality(&tables);
    println!("epsilon_mse = {}", solution.achieved_mse());
    println!("leakage = {}", leakage(&transfer));
    println!("min_matched_conditional = {}", quality.min_matched);
    println!(
        "max_mismatch_deviation = {}",
        quality.max_mismatch_deviation
    );
    println!(
        "detection_range = [{}, {}]",
        quality.min_detection, quality.max_detection
    );
    println!("undefined_conditionals = {}", quality.undefined);
    if args.verbose {
        eprintln!("tables written to {}", args.out.display());
    }
    Ok(())
}

fn parse_sigmas(text: &str) -> mubsynth::Result<Vec<f64>> {
    let sigmas: Vec<f64> = text
        .split(',')
        .map(|part| part.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| IoLayerError::Config(format!("bad sigma list: {e}")))?;
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(IoLayerError::Config(
            "sigma list must be non-empty, finite, and >= 0".into(),
        ));
    }
    Ok(sigmas)
}

fn cmd_qkd(args: QkdArgs) -> mubsynth::Result<()> {
    let solution = solution_file::read(&args.solution)?;
    let sigmas = parse_sigmas(&args.sigmas)?;
    let config = PerturbationConfig {
        trials: args.trials,
        rng_seed: args.seed,
        weighting: if args.weighted_qber {
            QberWeighting::DetectionWeighted
        } else {
            QberWeighting::Unweighted
        },
    };
    config.validate().map_err(reclassify_config)?;
    let source = args
        .solution
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.solution.display().to_string());

    let (report_data, trials) = qkd::monte_carlo_with_trials(&solution, &sigmas, &config, source)
        .map_err(reclassify_config)?;
    report::write_qkd_csv(&args.out, &report_data)?;
    if args.verbose {
        let dump = args.out.with_extension("trials.toml");
        report::write_trials_toml(&dump, &report_data, &trials)?;
        eprintln!("per-trial dump written to {}", dump.display());
    }
    if !report_data.usable() {
        eprintln!(
            "warning: more than 1% of trials failed at some sigma; solution flagged unusable"
        );
    }
    println!("qber_weighting = {:?}", config.weighting);
    for s in &report_data.per_sigma {
        println!(
            "sigma {}: qber {} +- {}, skf {} +- {} ({} trials, {} failed)",
            s.sigma, s.qber_mean, s.qber_std, s.skf_mean, s.skf_std, s.trials, s.failed_trials
        );
    }
    Ok(())
}

fn cmd_chipscan(args: ChipscanArgs) -> mubsynth::Result<()> {
    let solution = solution_file::read(&args.solution)?;
    let sweep = chipscan::chip_sweep(&solution).map_err(reclassify_config)?;
    report::write_chipscan_csv(&args.out, &sweep)?;
    println!("full_mse = {}", sweep.full_mse);
    let floor = sweep.full_mse.max(1e-300);
    let settled = sweep
        .chip_counts
        .iter()
        .zip(&sweep.mse)
        .find(|(_, &mse)| (mse - sweep.full_mse).abs() / floor < 0.1)
        .map(|(&k, _)| k);
    match settled {
        Some(k) => println!("within_10_percent_of_floor_at_K = {k}"),
        None => println!("within_10_percent_of_floor_at_K = never"),
    }
    if args.verbose {
        eprintln!("sweep written to {}", args.out.display());
    }
    Ok(())
}

/// Numeric errors arriving at the CLI boundary are argument problems.
fn reclassify_config(error: CoreError) -> IoLayerError {
    IoLayerError::Config(error.to_string())
}
