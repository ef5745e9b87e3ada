//! Receding-horizon controller wrapping the three planners.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cluster::{baseline_update, clustered_mppi, evaluate_plan, ClusterDiagnostics, DbscanParams};
use crate::dynamics::{batch_rollout, Cost, Dynamics, DubinsModel, UnicycleModel};
use crate::error::{Error, Result};
use crate::mppi::{sample_perturbations, ControlPlan, Covariance, SamplingMode};
use crate::obstacles::{
    dc_mppi, simulate_obstacles, AugmentedCost, ForecastSettings, ForecastStats, ObstacleForecast, ObstacleModel,
    ThetaMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    Baseline,
    Clustered,
    DcMppi,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Baseline => "baseline",
            Algorithm::Clustered => "clustered",
            Algorithm::DcMppi => "dc-mppi",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Algorithm::Baseline),
            "clustered" => Ok(Algorithm::Clustered),
            "dc-mppi" => Ok(Algorithm::DcMppi),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// The planner's prior over moving-obstacle inputs: mean speed and turn rate
/// with their variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleBelief {
    pub speed: f64,
    pub turn_rate: f64,
    pub speed_variance: f64,
    pub turn_rate_variance: f64,
}

impl Default for ObstacleBelief {
    /// Moments of the uniform ranges `v ∈ [0.5, 1.5]`, `ω ∈ [-0.5, 0.5]`.
    fn default() -> Self {
        Self {
            speed: 1.0,
            turn_rate: 0.0,
            speed_variance: 1.0 / 12.0,
            turn_rate_variance: 1.0 / 12.0,
        }
    }
}

/// An observed moving obstacle: pose and collision radius only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleObservation {
    pub pose: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSettings {
    pub algorithm: Algorithm,
    pub samples: usize,
    pub horizon: usize,
    pub lambda: f64,
    /// Variance of the turning-rate perturbation.
    pub sigma: f64,
    pub mode: SamplingMode,
    pub dbscan: DbscanParams,
    pub beta: f64,
    pub obstacle_samples: usize,
    pub theta_mode: ThetaMode,
    pub belief: ObstacleBelief,
}

/// What one planning call produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// The input to apply now.
    pub control: Vec<f64>,
    /// Full (clamped) solution over the horizon.
    pub solution: Vec<f64>,
    /// Noiseless planner cost of `solution`.
    pub predicted_cost: f64,
    pub diagnostics: Option<ClusterDiagnostics>,
    pub forecasts: Option<Vec<ObstacleForecast>>,
    pub stats: ForecastStats,
    /// Time spent sampling forecasts and building lookup tables.
    pub forecast_time: Duration,
}

/// Receding-horizon MPPI controller for a Dubins agent.
#[derive(Debug, Clone)]
pub struct Controller {
    settings: PlannerSettings,
    model: DubinsModel,
    obstacle_dynamics: UnicycleModel,
    plan: ControlPlan,
}

impl Controller {
    /// Starts from the straight-ahead guess (zero turning rate).
    pub fn new(settings: PlannerSettings, model: DubinsModel) -> Result<Self> {
        if settings.samples == 0 || settings.horizon == 0 {
            return Err(Error::Config("samples and horizon must be positive".into()));
        }
        if settings.algorithm == Algorithm::DcMppi && settings.obstacle_samples == 0 {
            return Err(Error::Config("obstacle_samples must be positive".into()));
        }
        if !(settings.beta > 0.0) {
            return Err(Error::Config("beta must be positive".into()));
        }
        settings.dbscan.validate()?;
        let plan = ControlPlan::zeros(settings.horizon, Covariance::scalar(settings.sigma)?, settings.lambda)?;
        Ok(Self {
            obstacle_dynamics: UnicycleModel { dt: model.dt },
            settings,
            model,
            plan,
        })
    }

    pub fn settings(&self) -> &PlannerSettings {
        &self.settings
    }

    pub fn model(&self) -> &DubinsModel {
        &self.model
    }

    /// The reference the next call will start from.
    pub fn warm_start(&self) -> &ControlPlan {
        &self.plan
    }

    /// Replace the warm start, e.g. to replay a recorded plan.
    pub fn set_warm_start(&mut self, inputs: Vec<f64>) -> Result<()> {
        self.plan = self.plan.with_inputs(inputs)?;
        Ok(())
    }

    /// Obstacle models the dc-mppi planner samples from.
    pub fn obstacle_models(&self, observed: &[ObstacleObservation]) -> Result<Vec<ObstacleModel>> {
        let b = self.settings.belief;
        let covariance = Covariance::diagonal(&[b.speed_variance, b.turn_rate_variance])?;
        Ok(observed
            .iter()
            .map(|o| ObstacleModel {
                initial: o.pose,
                reference: vec![b.speed, b.turn_rate],
                covariance: covariance.clone(),
                collision_radius: o.radius,
            })
            .collect())
    }

    /// The cost the non-forecasting planners see: every observed obstacle
    /// frozen at its current pose.
    pub fn snapshot_cost<C: Cost>(&self, base: C, observed: &[ObstacleObservation]) -> Result<AugmentedCost<C>> {
        let forecasts = observed
            .iter()
            .map(|o| ObstacleForecast::stationary(o.pose, o.radius, self.settings.horizon))
            .collect();
        AugmentedCost::new(base, forecasts, self.settings.beta)
    }

    /// The cost this controller's planner would optimize at a step planned
    /// with `seed`; forecasts match what [`Controller::plan`] samples.
    pub fn step_cost<C: Cost>(&self, base: C, observed: &[ObstacleObservation], seed: u64) -> Result<AugmentedCost<C>> {
        match self.settings.algorithm {
            Algorithm::DcMppi => {
                let forecasts = simulate_obstacles(
                    &self.obstacle_models(observed)?,
                    &self.obstacle_dynamics,
                    self.settings.obstacle_samples,
                    self.settings.horizon,
                    seed,
                    self.settings.theta_mode,
                )?;
                AugmentedCost::new(base, forecasts, self.settings.beta)
            }
            _ => self.snapshot_cost(base, observed),
        }
    }

    /// Plan from `state`, then shift the solution into the next warm start.
    pub fn plan<C: Cost>(
        &mut self,
        state: &[f64],
        base_cost: C,
        observed: &[ObstacleObservation],
        seed: u64,
    ) -> Result<StepOutcome> {
        let s = &self.settings;
        let perturbations =
            sample_perturbations(s.samples, s.horizon, self.plan.covariance(), s.mode, seed)?;
        let (mut solution, predicted_cost, diagnostics, forecasts, stats, forecast_time) = match s.algorithm {
            Algorithm::Baseline => {
                let cost = self.snapshot_cost(base_cost, observed)?;
                let rollouts = batch_rollout(&self.model, state, &self.plan, &perturbations, &cost)?;
                let costs: Vec<f64> = rollouts.iter().map(|r| r.cost).collect();
                let inputs = baseline_update(&self.plan, &perturbations, &costs)?;
                let predicted = evaluate_plan(&self.model, state, &self.plan.with_inputs(inputs.clone())?, &cost)?;
                (inputs, predicted, None, None, cost.stats(), Duration::ZERO)
            }
            Algorithm::Clustered => {
                let cost = self.snapshot_cost(base_cost, observed)?;
                let rollouts = batch_rollout(&self.model, state, &self.plan, &perturbations, &cost)?;
                let out = clustered_mppi(
                    &self.plan,
                    &perturbations,
                    &rollouts,
                    &s.dbscan,
                    &cost,
                    &self.model,
                    state,
                )?;
                (out.plan, out.cost, Some(out.diagnostics), None, cost.stats(), Duration::ZERO)
            }
            Algorithm::DcMppi => {
                let models = self.obstacle_models(observed)?;
                let settings = ForecastSettings {
                    samples: s.obstacle_samples,
                    beta: s.beta,
                    theta_mode: s.theta_mode,
                };
                let out = dc_mppi(
                    &self.plan,
                    state,
                    &self.model,
                    &models,
                    &self.obstacle_dynamics,
                    &settings,
                    &perturbations,
                    &s.dbscan,
                    base_cost,
                    seed,
                )?;
                (
                    out.output.plan,
                    out.output.cost,
                    Some(out.output.diagnostics),
                    Some(out.forecasts),
                    out.stats,
                    out.forecast_time,
                )
            }
        };
        // The model clamps inside `step`, so clamping here leaves the evaluated cost unchanged.
        for u in solution.chunks_exact_mut(self.model.control_dim()) {
            self.model.clamp_control(u);
        }
        self.plan = self.plan.with_inputs(solution.clone())?.shifted();
        Ok(StepOutcome {
            control: solution[..self.model.control_dim()].to_vec(),
            solution,
            predicted_cost,
            diagnostics,
            forecasts,
            stats,
            forecast_time,
        })
    }
}
