use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cluster::evaluate_plan;
use crate::dynamics::{plant_step, Cost};
use crate::env::{GoalCost, MapDocument};
use crate::error::{Error, Result};
use crate::mppi::{ControlPlan, Covariance};
use crate::obstacles::ObstacleForecast;
use crate::planner::{Algorithm, Controller};
use crate::rng::{self, derive_seed, Domain};

use super::config::{ExperimentConfig, SliceParams};
use super::scenario::{advance_mover, build_scenario, mover_collision, observe, Scenario};

pub const LOG_VERSION: u32 = 1;

const PLAN_STREAM: u64 = 0x706c_616e;

/// Seed of the planner's random draws at control step `step`.
pub fn planning_seed(episode_seed: u64, step: usize) -> u64 {
    derive_seed(derive_seed(episode_seed, PLAN_STREAM), step as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    ReachedGoal,
    Collided,
    Timeout,
}

/// Measured wall-clock figures; never part of determinism checks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTiming {
    pub mean_step_ms: f64,
    pub max_step_ms: f64,
    pub mean_forecast_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub outcome: Outcome,
    /// Control inputs applied to the plant.
    pub steps: usize,
    /// Distance to the goal at the end; `None` if the episode never started.
    pub final_distance: Option<f64>,
    pub path_length: f64,
    /// Steps on which every rollout was an outlier.
    pub fallback_steps: usize,
    /// Set when the planner or scenario generation failed.
    pub error: Option<String>,
    #[serde(skip)]
    pub timing: EpisodeTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    /// Input applied at this state; empty on the final row.
    pub u: Option<f64>,
    /// Goal-distance cost of this state.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepClusters {
    pub step: usize,
    pub labels: Vec<i64>,
    pub candidate_costs: Vec<f64>,
    pub candidate_sizes: Vec<usize>,
    pub chosen: Option<usize>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSliceRow {
    pub deviation: f64,
    pub cost: f64,
    /// `exp(-(cost - min cost) / λ)`.
    pub value: f64,
}

/// Everything `export` needs to reproduce the plots of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub version: u32,
    pub result: EpisodeResult,
    pub timing: EpisodeTiming,
    pub start: [f64; 3],
    pub goal: [f64; 2],
    pub map: MapDocument,
    pub trajectory: Vec<TrajectoryRow>,
    pub clusters: Vec<StepClusters>,
    /// True mover poses, one row per trajectory row.
    pub obstacles: Vec<Vec<[f64; 3]>>,
    /// Forecasts sampled at the first control step (dc-mppi only).
    pub forecasts: Vec<ObstacleForecast>,
    pub value_slice: Vec<ValueSliceRow>,
}

impl EpisodeLog {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Lookup(format!("cannot read log {}: {e}", path.display())))?;
        let log: Self = serde_json::from_str(&text)?;
        if log.version != LOG_VERSION {
            return Err(Error::Data(format!("unsupported log version {}", log.version)));
        }
        Ok(log)
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub result: EpisodeResult,
    pub log: Option<EpisodeLog>,
}

fn controller(config: &ExperimentConfig, algorithm: Algorithm) -> Result<Controller> {
    Controller::new(config.planner_settings(algorithm), config.model()?)
}

fn goal_cost(config: &ExperimentConfig, scenario: &Scenario) -> GoalCost {
    GoalCost {
        goal: scenario.goal,
        alpha: config.alpha,
        map: scenario.map.clone(),
    }
}

/// Cost of holding the straight-ahead reference shifted by a constant
/// turning-rate deviation, from the scenario start, as the planner sees it
/// at the first control step.
pub fn initial_value_slice(
    config: &ExperimentConfig,
    algorithm: Algorithm,
    seed: u64,
    slice: &SliceParams,
) -> Result<Vec<ValueSliceRow>> {
    slice.validate()?;
    let scenario = build_scenario(config, seed)?;
    let controller = controller(config, algorithm)?;
    let base = goal_cost(config, &scenario);
    let cost = controller.step_cost(&base, &observe(&scenario.movers), planning_seed(seed, 0))?;
    value_slice(&controller, &scenario.start, slice, &cost, config.lambda)
}

fn value_slice<C: Cost>(
    controller: &Controller,
    x0: &[f64],
    slice: &SliceParams,
    cost: &C,
    lambda: f64,
) -> Result<Vec<ValueSliceRow>> {
    let n = controller.settings().horizon;
    let plan = ControlPlan::zeros(n, Covariance::scalar(controller.settings().sigma)?, lambda)?;
    let costs = slice
        .deviations()
        .into_iter()
        .map(|d| Ok((d, evaluate_plan(controller.model(), x0, &plan.with_inputs(vec![d; n])?, cost)?)))
        .collect::<Result<Vec<_>>>()?;
    let min = costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    Ok(costs
        .into_iter()
        .map(|(deviation, cost)| ValueSliceRow {
            deviation,
            cost,
            value: (-(cost - min) / lambda).exp(),
        })
        .collect())
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn failed(algorithm: Algorithm, seed: u64, error: &Error) -> EpisodeRun {
    EpisodeRun {
        result: EpisodeResult {
            seed,
            algorithm,
            outcome: Outcome::Timeout,
            steps: 0,
            final_distance: None,
            path_length: 0.0,
            fallback_steps: 0,
            error: Some(error.to_string()),
            timing: EpisodeTiming::default(),
        },
        log: None,
    }
}

/// Run one closed-loop episode. Configuration errors are returned; anything
/// that goes wrong while running is recorded in the result instead.
pub fn run_episode(config: &ExperimentConfig, algorithm: Algorithm, seed: u64, record: bool) -> Result<EpisodeRun> {
    config.validate()?;
    let mut controller = controller(config, algorithm)?;
    let scenario = match build_scenario(config, seed) {
        Ok(s) => s,
        Err(e @ Error::Config(_)) => return Err(e),
        Err(e) => {
            log::warn!("seed {seed}: scenario generation failed: {e}");
            return Ok(failed(algorithm, seed, &e));
        }
    };
    let model = *controller.model();
    let cost = goal_cost(config, &scenario);
    let control_cov = match &config.noise.control_variance {
        Some(v) => Covariance::diagonal(v)?,
        None => Covariance::scalar(config.sigma)?,
    };
    let mut plant_rng = rng::stream(seed, Domain::Plant, 0);
    let limit = scenario.step_limit(config);

    let mut state = scenario.start.to_vec();
    let mut movers = scenario.movers.clone();
    let distance = |s: &[f64]| (s[0] - scenario.goal[0]).hypot(s[1] - scenario.goal[1]);

    let mut trajectory = Vec::new();
    let mut clusters = Vec::new();
    let mut tracks = Vec::new();
    let mut forecasts = Vec::new();
    let mut value_rows = Vec::new();
    let row = |step: usize, s: &[f64]| TrajectoryRow {
        step,
        x: s[0],
        y: s[1],
        theta: s[2],
        u: None,
        cost: cost.running(s, step),
    };
    if record {
        trajectory.push(row(0, &state));
        tracks.push(movers.iter().map(|m| m.state).collect::<Vec<_>>());
        let first_cost = controller.step_cost(&cost, &observe(&movers), planning_seed(seed, 0))?;
        value_rows = value_slice(&controller, &state, &config.value_slice, &first_cost, config.lambda)?;
    }

    let started = Instant::now();
    let mut outcome = Outcome::Timeout;
    let mut error = None;
    let mut steps = 0;
    let mut path_length = 0.0;
    let mut fallback_steps = 0;
    let (mut step_ms_total, mut step_ms_max, mut forecast_ms_total) = (0.0, 0.0f64, 0.0);

    if distance(&state) <= config.goal_tolerance {
        outcome = Outcome::ReachedGoal;
    } else {
        for t in 0..limit {
            let tick = Instant::now();
            let planned = controller.plan(&state, &cost, &observe(&movers), planning_seed(seed, t));
            let elapsed = ms(tick.elapsed());
            let out = match planned {
                Ok(out) => out,
                Err(e) => {
                    log::warn!("seed {seed} step {t}: planner failed: {e}");
                    error = Some(e.to_string());
                    break;
                }
            };
            step_ms_total += elapsed;
            step_ms_max = step_ms_max.max(elapsed);
            forecast_ms_total += ms(out.forecast_time);
            if out.diagnostics.as_ref().is_some_and(|d| d.fallback) {
                fallback_steps += 1;
            }

            let next = plant_step(&model, &state, &out.control, &config.noise, &control_cov, &mut plant_rng);
            for m in &mut movers {
                advance_mover(m, config.dt);
            }
            path_length += (next[0] - state[0]).hypot(next[1] - state[1]);

            if record {
                trajectory.last_mut().expect("row for current state").u = Some(out.control[0]);
                trajectory.push(row(t + 1, &next));
                tracks.push(movers.iter().map(|m| m.state).collect());
                if let Some(d) = &out.diagnostics {
                    clusters.push(StepClusters {
                        step: t,
                        labels: d.labels.clone(),
                        candidate_costs: d.candidates.iter().map(|c| c.cost).collect(),
                        candidate_sizes: d.candidates.iter().map(|c| c.size).collect(),
                        chosen: d.chosen,
                        fallback: d.fallback,
                    });
                }
                if t == 0 {
                    forecasts = out.forecasts.unwrap_or_default();
                }
            }

            state = next;
            steps = t + 1;
            if !state.iter().all(|v| v.is_finite()) {
                error = Some(format!("non-finite plant state at step {steps}"));
                break;
            }
            if scenario.map.collides(state[0], state[1]) || mover_collision(state[0], state[1], &movers) {
                outcome = Outcome::Collided;
                break;
            }
            if distance(&state) <= config.goal_tolerance {
                outcome = Outcome::ReachedGoal;
                break;
            }
        }
    }

    let timing = EpisodeTiming {
        mean_step_ms: if steps > 0 { step_ms_total / steps as f64 } else { 0.0 },
        max_step_ms: step_ms_max,
        mean_forecast_ms: if steps > 0 { forecast_ms_total / steps as f64 } else { 0.0 },
        total_ms: ms(started.elapsed()),
    };
    let result = EpisodeResult {
        seed,
        algorithm,
        outcome,
        steps,
        final_distance: Some(distance(&state)),
        path_length,
        fallback_steps,
        error,
        timing,
    };
    let log = record.then(|| EpisodeLog {
        version: LOG_VERSION,
        result: result.clone(),
        timing,
        start: scenario.start,
        goal: scenario.goal,
        map: scenario.document.clone(),
        trajectory,
        clusters,
        obstacles: tracks,
        forecasts,
        value_slice: value_rows,
    });
    Ok(EpisodeRun { result, log })
}
