use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irscr::harness::{emit_results, run_experiment, validate_solution, ExperimentConfig, RunMode, SolutionFile};
use irscr::Error;

#[derive(Parser)]
#[command(name = "irscr", version, about = "Robust precoding and IRS phase design simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory (overrides the config)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// worker threads (overrides the config)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Monte Carlo samples per certificate (overrides the config)
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every grid point and also write one solution file per solved record
    Run { config: PathBuf },
    /// Run every grid point and write records, summary and plot data
    Sweep { config: PathBuf },
    /// Run only the feasibility checkers
    Feasibility { config: PathBuf },
    /// Re-check the certificates of a solution file
    Validate { solution: PathBuf },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

fn load(cli: &Cli, path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(m) = cli.mc_samples {
        cfg.mc_samples = m;
        cfg.wc_samples = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(cli: &Cli, path: &PathBuf, mode: RunMode, save: bool) -> Result<u8, Error> {
    let mut cfg = load(cli, path)?;
    cfg.save_solutions |= save;
    let result = run_experiment(&cfg, mode)?;
    let paths = emit_results(&result, &cfg, &cfg.out_dir)?;
    println!("records: {}", paths.records.display());
    println!("summary: {}", paths.summary.display());
    println!("plot:    {}", paths.plot.display());
    if !paths.solutions.is_empty() {
        println!("solutions: {}", paths.solutions.len());
    }
    for p in &result.summary.points {
        for s in &p.schemes {
            println!(
                "point {:>3} {:<14} feasibility {:.3} mean power {}",
                p.point,
                s.scheme.name(),
                s.feasibility_rate,
                s.mean_power_dbm.map_or("-".into(), |v| format!("{v:.3} dBm"))
            );
        }
    }
    if result.summary.certificate_failures > 0 {
        eprintln!("{} records failed their certificates", result.summary.certificate_failures);
        return Ok(EXIT_ASSERTION);
    }
    Ok(0)
}

fn validate(cli: &Cli, path: &PathBuf) -> Result<u8, Error> {
    let text = std::fs::read_to_string(path)?;
    let file: SolutionFile = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let samples = cli.mc_samples.unwrap_or(10_000);
    let cert = match validate_solution(&file, samples, cli.seed.unwrap_or(0)) {
        Ok(c) => c,
        Err(Error::Config(msg)) => {
            eprintln!("{msg}");
            return Ok(EXIT_ASSERTION);
        }
        Err(e) => return Err(e),
    };
    println!("{}", serde_json::to_string_pretty(&cert).map_err(|e| Error::Config(e.to_string()))?);
    Ok(if cert.passed { 0 } else { EXIT_ASSERTION })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => experiment(&cli, config, RunMode::Full, true),
        Command::Sweep { config } => experiment(&cli, config, RunMode::Full, false),
        Command::Feasibility { config } => experiment(&cli, config, RunMode::FeasibilityOnly, false),
        Command::Validate { solution } => validate(&cli, solution),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
