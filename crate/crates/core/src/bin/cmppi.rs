use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cmppi::harness::{
    export_run, initial_value_slice, run_batch, run_episode, write_batch, write_value_slice, ExperimentConfig,
    ExportFormat, SliceParams,
};
use cmppi::planner::Algorithm;
use cmppi::Error;

#[derive(Parser)]
#[command(name = "cmppi", version, about = "Clustered MPPI experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Baseline,
    Clustered,
    DcMppi,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Baseline => Algorithm::Baseline,
            AlgorithmArg::Clustered => Algorithm::Clustered,
            AlgorithmArg::DcMppi => Algorithm::DcMppi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ExportFormat::Csv,
            FormatArg::Json => ExportFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its result and full log.
    Run {
        /// JSON experiment config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config algorithm.
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        /// Output directory for result.json and log.json.
        #[arg(long, default_value = "run-out")]
        out: PathBuf,
    },
    /// Run seeds seed..seed+runs for every configured algorithm.
    Batch {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config run count.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value = "batch-out")]
        out_dir: PathBuf,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Export plot tables from a log written by `run`.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Defaults to the directory holding the log.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Cost and value over constant turning-rate deviations at the first step.
    ValueSlice {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long, allow_negative_numbers = true)]
        deviation_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        deviation_max: Option<f64>,
        #[arg(long)]
        deviation_steps: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Output file; the table goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: Option<&Path>) -> cmppi::Result<ExperimentConfig> {
    match config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> cmppi::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn execute(command: Command) -> cmppi::Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            algorithm,
            out,
        } => {
            let mut config = load(config.as_deref())?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(a) = algorithm {
                config.algorithm = a.into();
            }
            let run = run_episode(&config, config.algorithm, config.seed, true)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("result.json"), &run.result)?;
            if let Some(log) = &run.log {
                write_json(&out.join("log.json"), log)?;
            }
            println!(
                "{} seed {}: {:?} after {} steps",
                run.result.algorithm, run.result.seed, run.result.outcome, run.result.steps
            );
            Ok(())
        }
        Command::Batch {
            config,
            runs,
            out_dir,
            threads,
        } => {
            let mut config = load(config.as_deref())?;
            if let Some(runs) = runs {
                config.runs = runs;
            }
            if threads == Some(0) {
                return Err(Error::Config("--threads must be positive".into()));
            }
            let report = run_batch(&config, threads)?;
            write_batch(&report, &out_dir)?;
            for (s, t) in report.stats.per_algorithm.iter().zip(&report.stats.timing) {
                println!(
                    "{}: {} runs, {} collisions, {} timeouts, {:.1}% failure, {:.2} ms/step",
                    s.algorithm, s.runs, s.collisions, s.timeouts, s.failure_pct, t.mean_step_ms
                );
            }
            Ok(())
        }
        Command::Export { log, format, out_dir } => {
            let dir = out_dir.unwrap_or_else(|| log.parent().map(Path::to_path_buf).unwrap_or_default());
            for path in export_run(&log, format.into(), &dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::ValueSlice {
            config,
            seed,
            algorithm,
            deviation_min,
            deviation_max,
            deviation_steps,
            format,
            out,
        } => {
            let config = load(config.as_deref())?;
            let slice = SliceParams {
                min: deviation_min.unwrap_or(config.value_slice.min),
                max: deviation_max.unwrap_or(config.value_slice.max),
                steps: deviation_steps.unwrap_or(config.value_slice.steps),
            };
            let algorithm = algorithm.map_or(config.algorithm, Algorithm::from);
            let rows = initial_value_slice(&config, algorithm, seed.unwrap_or(config.seed), &slice)?;
            match out {
                Some(path) => write_value_slice(&rows, format.into(), fs::File::create(path)?),
                None => write_value_slice(&rows, format.into(), std::io::stdout().lock()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
