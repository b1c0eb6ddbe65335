//! Command-line front end: campaigns, single trials, the orthogonal oracle
//! and the solver self-test.
//!
//! Exit codes: 0 success, 1 config error, 2 campaign-level failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdrp::campaign::{
    load_config, oracle_horizon, run_campaign, run_point, trial_channels, write_results, Algorithm, CampaignConfig,
};
use fdrp::conic;
use fdrp::fdrp::run_fdrp_traced;
use fdrp::oracle::brute_force_orthogonal;
use fdrp::Error;

#[derive(Parser)]
#[command(name = "fdrp", version, about = "Multiuser MISO-OFDM multistage resource programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of a campaign and write result tables.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm on one seed and print its record as JSON.
    Solve {
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = parse_algorithm)]
        algo: Algorithm,
        /// Index into the sweep list.
        #[arg(long, default_value_t = 0)]
        sweep_index: usize,
        /// Per-iteration trace file (fdrp only).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Exhaustive orthogonal optimum for every seed of a campaign.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Known-answer checks of the conic backend.
    Selftest {
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::parse(s).ok_or_else(|| format!("unknown algorithm `{s}` (fdrp, urp, grp, oracle)"))
}

enum Failure {
    Config(String),
    Campaign(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } => Failure::Config(e.to_string()),
            Error::Io { .. } => Failure::Config(e.to_string()),
            other => Failure::Campaign(other.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<CampaignConfig, Failure> {
    Ok(load_config(path)?)
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let records = run_campaign(&cfg);
            let files = write_results(&records, &dir).map_err(|e| Failure::Campaign(e.to_string()))?;
            let ok = records.iter().filter(|r| r.succeeded()).count();
            eprintln!("{ok}/{} trials succeeded", records.len());
            for f in files {
                emit(format_args!("{}", f.display()));
            }
            if ok == 0 && !records.is_empty() {
                return Err(Failure::Campaign("every trial failed".into()));
            }
            Ok(())
        }
        Command::Solve {
            config,
            seed,
            algo,
            sweep_index,
            trace,
        } => {
            let mut cfg = load(&config)?;
            if sweep_index >= cfg.sweep.len() {
                return Err(Failure::Config(format!(
                    "sweep index {sweep_index} out of range (sweep has {} values)",
                    cfg.sweep.len()
                )));
            }
            if let (Some(path), Algorithm::Fdrp) = (&trace, algo) {
                let (sys, h) = trial_channels(&cfg, seed, sweep_index)?;
                run_fdrp_traced(&h, &sys, Some(path))?;
            }
            cfg.algorithms = vec![algo];
            let record = run_point(&cfg, seed, sweep_index).remove(0);
            emit(format_args!("{}", serde_json::to_string(&record).expect("record serializes")));
            match &record.error {
                None => Ok(()),
                Some(e) => Err(Failure::Campaign(e.clone())),
            }
        }
        Command::Oracle { config, horizon } => {
            let mut cfg = load(&config)?;
            if horizon.is_some() {
                cfg.oracle_horizon = horizon;
            }
            for &seed in &cfg.seeds {
                for i in 0..cfg.sweep.len() {
                    let (sys, h) = trial_channels(&cfg, seed, i)?;
                    let t = oracle_horizon(&cfg, &sys);
                    let out = brute_force_orthogonal(&h, &sys, t, cfg.oracle_pattern_cap)?;
                    let line = serde_json::json!({
                        "seed": seed,
                        "sweep_value": cfg.sweep.values()[i],
                        "horizon": t,
                        "patterns": out.patterns,
                        "solves": out.solves,
                        "value": out.value(),
                        "completion_times": out.best.as_ref().map(|b| b.completion_times.clone()),
                        "owner": out.best.as_ref().map(|b| b.pattern.owner.clone()),
                        "slack": out.best.as_ref().map(|b| b.slack),
                    });
                    emit(format_args!("{line}"));
                }
            }
            Ok(())
        }
        Command::Selftest { tol } => {
            let cases = conic::self_test(tol);
            let mut ok = true;
            for c in &cases {
                emit(format_args!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
                ok &= c.passed;
            }
            if ok {
                Ok(())
            } else {
                Err(Failure::Campaign("self-test failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Campaign(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Writes one line to stdout; a closed pipe (e.g. `| head`) ends the process quietly.
fn emit(line: std::fmt::Arguments) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed writing to stdout: {e}");
    }
}
