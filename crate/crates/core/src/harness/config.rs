use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::DbscanParams;
use crate::dynamics::{DubinsModel, NoiseProfile};
use crate::env::{FieldParams, ForestParams, MapDocument};
use crate::error::{Error, Result};
use crate::mppi::SamplingMode;
use crate::obstacles::ThetaMode;
use crate::planner::{Algorithm, ObstacleBelief, PlannerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub speed: f64,
    pub min_turn_radius: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            speed: 1.0,
            min_turn_radius: 1.0,
        }
    }
}

/// A single moving obstacle crossing the straight start-to-goal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingParams {
    /// Start at the origin heading along +x, goal at `(goal_distance, 0)`.
    pub goal_distance: f64,
    /// Distance along the agent's path where both would meet if neither turned.
    pub meet_distance: f64,
    /// Obstacle heading in the world frame; `π` is head-on.
    pub obstacle_heading: f64,
    /// Obstacle speed is drawn uniformly from this range per seed.
    pub speed_range: [f64; 2],
    pub collision_radius: f64,
    /// Free space around the segment on every side.
    pub margin: f64,
}

impl Default for CrossingParams {
    fn default() -> Self {
        Self {
            goal_distance: 30.0,
            meet_distance: 8.0,
            obstacle_heading: std::f64::consts::PI,
            speed_range: [0.5, 1.5],
            collision_radius: 1.0,
            margin: 15.0,
        }
    }
}

/// An explicit layout: a map document plus start pose and goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedLayout {
    pub map: MapDocument,
    pub start: [f64; 3],
    pub goal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ScenarioConfig {
    Forest(ForestParams),
    DynamicField(FieldParams),
    Crossing(CrossingParams),
    Fixed(FixedLayout),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::Forest(ForestParams::default())
    }
}

/// Deviation sweep for the value-function slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceParams {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Default for SliceParams {
    fn default() -> Self {
        Self {
            min: -1.0,
            max: 1.0,
            steps: 41,
        }
    }
}

impl SliceParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.min <= self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::Config("value slice needs min <= max and steps >= 1".into()));
        }
        Ok(())
    }

    pub fn deviations(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        (0..self.steps)
            .map(|i| self.min + span * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

/// Everything that defines an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Further algorithms run on the same seeds by `batch`.
    pub compare: Vec<Algorithm>,
    pub samples: usize,
    pub horizon: usize,
    pub dt: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Variance of the turning-rate perturbation.
    pub sigma: f64,
    pub perturbation_mode: SamplingMode,
    pub obstacle_samples: usize,
    pub theta_mode: ThetaMode,
    pub obstacle_belief: ObstacleBelief,
    pub dbscan: DbscanParams,
    pub noise: NoiseProfile,
    pub vehicle: VehicleParams,
    pub scenario: ScenarioConfig,
    pub goal_tolerance: f64,
    /// Overrides the perimeter-based step limit.
    pub step_limit: Option<usize>,
    pub seed: u64,
    pub runs: usize,
    pub value_slice: SliceParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Baseline,
            compare: Vec::new(),
            samples: 500,
            horizon: 50,
            dt: 0.1,
            lambda: 1.0,
            alpha: 1000.0,
            beta: 10.0,
            sigma: 0.1,
            perturbation_mode: SamplingMode::Constant,
            obstacle_samples: 25,
            theta_mode: ThetaMode::Uniform,
            obstacle_belief: ObstacleBelief::default(),
            dbscan: DbscanParams::default(),
            noise: NoiseProfile::default(),
            vehicle: VehicleParams::default(),
            scenario: ScenarioConfig::default(),
            goal_tolerance: 1.0,
            step_limit: None,
            seed: 0,
            runs: 1,
            value_slice: SliceParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("sigma", self.sigma),
            ("goal_tolerance", self.goal_tolerance),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.samples == 0 || self.horizon == 0 {
            return Err(Error::Config("samples and horizon must be positive".into()));
        }
        if self.obstacle_samples == 0 {
            return Err(Error::Config("obstacle_samples must be positive".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        if self.step_limit == Some(0) {
            return Err(Error::Config("step_limit must be positive".into()));
        }
        self.dbscan.validate()?;
        self.noise.validate()?;
        self.value_slice.validate()?;
        self.model()?;
        Ok(())
    }

    pub fn model(&self) -> Result<DubinsModel> {
        DubinsModel::new(self.vehicle.speed, self.vehicle.min_turn_radius, self.dt)
    }

    pub fn planner_settings(&self, algorithm: Algorithm) -> PlannerSettings {
        PlannerSettings {
            algorithm,
            samples: self.samples,
            horizon: self.horizon,
            lambda: self.lambda,
            sigma: self.sigma,
            mode: self.perturbation_mode,
            dbscan: self.dbscan.clone(),
            beta: self.beta,
            obstacle_samples: self.obstacle_samples,
            theta_mode: self.theta_mode,
            belief: self.obstacle_belief,
        }
    }

    /// `algorithm` followed by `compare`, duplicates removed, order kept.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        let mut seen = BTreeSet::new();
        std::iter::once(self.algorithm)
            .chain(self.compare.iter().copied())
            .filter(|a| seen.insert(*a))
            .collect()
    }
}
