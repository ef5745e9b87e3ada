use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::Algorithm;

use super::config::ExperimentConfig;
use super::episode::{run_episode, EpisodeResult, EpisodeTiming, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmStats {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    /// Episodes that ended with an error note (counted as timeouts).
    pub errors: usize,
    /// Collisions plus timeouts, in percent of runs.
    pub failure_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub algorithm: Algorithm,
    pub mean_step_ms: f64,
    pub mean_forecast_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub seed: u64,
    pub runs: usize,
    pub per_algorithm: Vec<AlgorithmStats>,
    #[serde(skip)]
    pub timing: Vec<TimingStats>,
}

impl AggregateStats {
    pub fn get(&self, algorithm: Algorithm) -> Option<&AlgorithmStats> {
        self.per_algorithm.iter().find(|s| s.algorithm == algorithm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub stats: AggregateStats,
    /// Ordered by seed, then by algorithm position in the config.
    pub episodes: Vec<EpisodeResult>,
}

fn summarize(algorithm: Algorithm, episodes: &[&EpisodeResult]) -> (AlgorithmStats, TimingStats) {
    let count = |o: Outcome| episodes.iter().filter(|e| e.outcome == o).count();
    let runs = episodes.len();
    let collisions = count(Outcome::Collided);
    let timeouts = count(Outcome::Timeout);
    let mean = |f: fn(&EpisodeTiming) -> f64| {
        let timed: Vec<f64> = episodes.iter().filter(|e| e.steps > 0).map(|e| f(&e.timing)).collect();
        if timed.is_empty() {
            0.0
        } else {
            timed.iter().sum::<f64>() / timed.len() as f64
        }
    };
    (
        AlgorithmStats {
            algorithm,
            runs,
            successes: count(Outcome::ReachedGoal),
            collisions,
            timeouts,
            errors: episodes.iter().filter(|e| e.error.is_some()).count(),
            failure_pct: 100.0 * (collisions + timeouts) as f64 / runs.max(1) as f64,
        },
        TimingStats {
            algorithm,
            mean_step_ms: mean(|t| t.mean_step_ms),
            mean_forecast_ms: mean(|t| t.mean_forecast_ms),
        },
    )
}

/// Run every configured algorithm on seeds `seed .. seed + runs`.
///
/// `threads` sizes a dedicated pool; `None` uses the global one. Results do
/// not depend on the thread count.
pub fn run_batch(config: &ExperimentConfig, threads: Option<usize>) -> Result<BatchReport> {
    config.validate()?;
    let algorithms = config.algorithms();
    let jobs: Vec<(u64, Algorithm)> = (0..config.runs as u64)
        .flat_map(|i| algorithms.iter().map(move |&a| (config.seed.wrapping_add(i), a)))
        .collect();
    let work = || -> Result<Vec<EpisodeResult>> {
        jobs.par_iter()
            .map(|&(seed, algorithm)| match run_episode(config, algorithm, seed, false) {
                Ok(run) => Ok(run.result),
                Err(e @ Error::Config(_)) => Err(e),
                Err(e) => {
                    log::warn!("seed {seed} ({algorithm}): {e}");
                    Ok(EpisodeResult {
                        seed,
                        algorithm,
                        outcome: Outcome::Timeout,
                        steps: 0,
                        final_distance: None,
                        path_length: 0.0,
                        fallback_steps: 0,
                        error: Some(e.to_string()),
                        timing: EpisodeTiming::default(),
                    })
                }
            })
            .collect()
    };
    let episodes = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot build a {n}-thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let (per_algorithm, timing) = algorithms
        .iter()
        .map(|&a| {
            let mine: Vec<&EpisodeResult> = episodes.iter().filter(|e| e.algorithm == a).collect();
            summarize(a, &mine)
        })
        .unzip();
    Ok(BatchReport {
        stats: AggregateStats {
            seed: config.seed,
            runs: config.runs,
            per_algorithm,
            timing,
        },
        episodes,
    })
}

#[derive(Serialize)]
struct ResultsFile<'a> {
    stats: &'a AggregateStats,
    episodes: &'a [EpisodeResult],
}

#[derive(Serialize)]
struct EpisodeTimingRow<'a> {
    seed: u64,
    algorithm: Algorithm,
    #[serde(flatten)]
    timing: &'a EpisodeTiming,
}

#[derive(Serialize)]
struct TimingFile<'a> {
    per_algorithm: &'a [TimingStats],
    episodes: Vec<EpisodeTimingRow<'a>>,
}

#[derive(Serialize)]
struct EpisodeCsvRow<'a> {
    seed: u64,
    algorithm: &'a str,
    outcome: Outcome,
    steps: usize,
    final_distance: Option<f64>,
    path_length: f64,
    fallback_steps: usize,
    error: &'a str,
}

/// Write `results.json` and `episodes.csv` (deterministic) and `timing.json`.
pub fn write_batch(report: &BatchReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let results = out_dir.join("results.json");
    let results_doc = ResultsFile {
        stats: &report.stats,
        episodes: &report.episodes,
    };
    fs::write(&results, serde_json::to_string_pretty(&results_doc)? + "\n")?;

    let csv_path = out_dir.join("episodes.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    for e in &report.episodes {
        writer.serialize(EpisodeCsvRow {
            seed: e.seed,
            algorithm: e.algorithm.as_str(),
            outcome: e.outcome,
            steps: e.steps,
            final_distance: e.final_distance,
            path_length: e.path_length,
            fallback_steps: e.fallback_steps,
            error: e.error.as_deref().unwrap_or(""),
        })?;
    }
    writer.flush()?;

    let timing = out_dir.join("timing.json");
    let timing_doc = TimingFile {
        per_algorithm: &report.stats.timing,
        episodes: report
            .episodes
            .iter()
            .map(|e| EpisodeTimingRow {
                seed: e.seed,
                algorithm: e.algorithm,
                timing: &e.timing,
            })
            .collect(),
    };
    fs::write(&timing, serde_json::to_string_pretty(&timing_doc)? + "\n")?;
    Ok(vec![results, csv_path, timing])
}
