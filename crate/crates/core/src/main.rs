use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use decoykit::cli::{self, Config, SweepSpec};
use decoykit::optimize::SearchOptions;
use decoykit::{Error, Result};

#[derive(Parser)]
#[command(name = "decoykit", version, about = "Finite-statistics key rates for decoy-state BB84")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Relative intensity uncertainty U applied to nonvacuum levels.
    #[arg(long)]
    intensity_uncertainty: Option<f64>,
    /// Distinguishability preset (`four-laser` or `none`).
    #[arg(long)]
    q_preset: Option<String>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Search {
    /// Number of intensity levels (1 to 4).
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 400)]
    max_evals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Search {
    fn options(&self) -> SearchOptions {
        SearchOptions {
            starts: self.starts,
            max_evals: self.max_evals,
            seed: self.seed,
            ..SearchOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Key length and rate for a measured or simulated tally.
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tally: PathBuf,
    },
    /// Simulate a session and write its tally.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write expected counts instead of a random draw.
        #[arg(long)]
        expected: bool,
    },
    /// Search for the protocol with the highest rate.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        search: Search,
    },
    /// Rate against one parameter, as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        vary: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 11)]
        points: usize,
        /// Space points logarithmically.
        #[arg(long)]
        log: bool,
        /// Re-optimize the protocol at every point.
        #[arg(long)]
        optimize: bool,
        #[command(flatten)]
        search: Search,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Optimized rate against fiber length for each detector preset, as CSV.
    Detectors {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        from_km: f64,
        #[arg(long, default_value_t = 200.0)]
        to_km: f64,
        #[arg(long, default_value_t = 10.0)]
        step_km: f64,
        #[command(flatten)]
        search: Search,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load(common: &Common) -> Result<Config> {
    let mut cfg = Config::parse(&read(&common.config)?).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", common.config.display()),
        },
        other => other,
    })?;
    if let Some(u) = common.intensity_uncertainty {
        cfg.intensity_uncertainty = u;
    }
    if let Some(q) = &common.q_preset {
        cfg.q_preset = Some(q.clone());
    }
    Ok(cfg)
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => Ok(std::fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Rate { common, tally } => {
            let cfg = load(&common)?;
            let tally = cli::parse_tally(&read(&tally)?)?;
            let (text, code) = cli::cmd_rate(&cfg, &tally)?;
            emit(&common, &text)?;
            Ok(code)
        }
        Command::Simulate { common, seed, expected } => {
            let cfg = load(&common)?;
            emit(&common, &cli::cmd_simulate(&cfg, seed, expected)?)?;
            Ok(0)
        }
        Command::Optimize { common, search } => {
            let cfg = load(&common)?;
            let (text, rate) = cli::cmd_optimize(&cfg, search.levels, &search.options())?;
            emit(&common, &text)?;
            Ok(if rate > 0.0 { 0 } else { 2 })
        }
        Command::Sweep {
            common,
            vary,
            from,
            to,
            points,
            log,
            optimize,
            search,
            jobs,
        } => {
            let cfg = load(&common)?;
            let spec = SweepSpec {
                param: vary,
                from,
                to,
                points,
                log,
                optimize: optimize.then(|| (search.levels, search.options())),
            };
            emit(&common, &cli::cmd_sweep(&cfg, &spec, jobs.max(1))?)?;
            Ok(0)
        }
        Command::Detectors {
            common,
            from_km,
            to_km,
            step_km,
            search,
            jobs,
        } => {
            let cfg = load(&common)?;
            if !(step_km > 0.0) || to_km < from_km {
                return Err(Error::Domain("need from_km ≤ to_km and step_km > 0".into()));
            }
            let n = ((to_km - from_km) / step_km + 1e-9).floor() as usize + 1;
            let distances: Vec<f64> = (0..n).map(|i| from_km + i as f64 * step_km).collect();
            emit(&common, &cli::cmd_detectors(&cfg, &distances, &search.options(), jobs.max(1))?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
