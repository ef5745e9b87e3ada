//! Moving obstacles as sampled forecasts folded into the cost.
//!
//! Forecasts are drawn once per control step (`L x P` obstacle rollouts) and
//! written into a per-step spatial grid. Every agent rollout then pays one
//! grid lookup per state, so the obstacle work adds to the rollout work
//! instead of multiplying it.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{clustered_mppi, ClusteredOutput, DbscanParams};
use crate::dynamics::{batch_rollout, Cost, Dynamics};
use crate::error::{Error, Result};
use crate::mppi::{ControlPlan, Covariance, PerturbationSet};
use crate::rng::{self, derive_seed, Domain};

/// What the planner believes about one obstacle.
#[derive(Debug, Clone)]
pub struct ObstacleModel {
    /// `[x, y, theta]`.
    pub initial: [f64; 3],
    /// Reference input, either one input repeated over the horizon or a full
    /// `N x m` sequence.
    pub reference: Vec<f64>,
    /// Input-noise covariance.
    pub covariance: Covariance,
    pub collision_radius: f64,
}

impl ObstacleModel {
    fn input(&self, step: usize, m: usize) -> &[f64] {
        if self.reference.len() == m {
            &self.reference
        } else {
            &self.reference[step * m..(step + 1) * m]
        }
    }

    fn validate(&self, m: usize, horizon: usize) -> Result<()> {
        if !(self.collision_radius > 0.0 && self.collision_radius.is_finite()) {
            return Err(Error::Config(format!(
                "collision radius must be positive, got {}",
                self.collision_radius
            )));
        }
        if self.covariance.dim() != m {
            return Err(Error::Config(format!(
                "obstacle covariance has dimension {}, obstacle model takes {m} inputs",
                self.covariance.dim()
            )));
        }
        if self.reference.len() != m && self.reference.len() != m * horizon {
            return Err(Error::Argument(format!(
                "obstacle reference has {} entries; expected {m} or {}",
                self.reference.len(),
                m * horizon
            )));
        }
        Ok(())
    }
}

/// How the per-trajectory probabilities are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMode {
    /// Self-normalized Monte Carlo: every sampled trajectory gets `1/P`.
    #[default]
    Uniform,
    /// Proportional to the Gaussian density of the sampled input noise.
    Likelihood,
}

/// `P` sampled trajectories of one obstacle and their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleForecast {
    /// `trajectories[p][i]` is `[x, y, theta]` at step `i`.
    pub trajectories: Vec<Vec<[f64; 3]>>,
    pub theta: Vec<f64>,
    pub collision_radius: f64,
}

impl ObstacleForecast {
    /// A forecast that keeps the obstacle where it is for `horizon` steps.
    pub fn stationary(position: [f64; 3], collision_radius: f64, horizon: usize) -> Self {
        Self {
            trajectories: vec![vec![position; horizon + 1]],
            theta: vec![1.0],
            collision_radius,
        }
    }

    pub fn samples(&self) -> usize {
        self.trajectories.len()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.len().saturating_sub(1))
    }
}

/// Sample `samples` trajectories per obstacle over `horizon` steps.
pub fn simulate_obstacles<G: Dynamics + ?Sized>(
    models: &[ObstacleModel],
    dynamics: &G,
    samples: usize,
    horizon: usize,
    seed: u64,
    theta_mode: ThetaMode,
) -> Result<Vec<ObstacleForecast>> {
    if samples == 0 {
        return Err(Error::Argument("need at least one obstacle sample".into()));
    }
    if dynamics.state_dim() != 3 {
        return Err(Error::Argument("obstacle dynamics must be planar [x, y, theta]".into()));
    }
    let m = dynamics.control_dim();
    for model in models {
        model.validate(m, horizon)?;
    }
    models
        .iter()
        .enumerate()
        .map(|(l, model)| {
            let obstacle_seed = derive_seed(seed, l as u64);
            let draws: Vec<(Vec<[f64; 3]>, f64)> = (0..samples)
                .into_par_iter()
                .map(|p| {
                    let mut rng = rng::stream(obstacle_seed, Domain::ObstacleForecast, p as u64);
                    let mut traj = Vec::with_capacity(horizon + 1);
                    traj.push(model.initial);
                    let mut eps = vec![0.0; m];
                    let mut u = vec![0.0; m];
                    let mut next = [0.0; 3];
                    let mut log_density = 0.0;
                    for i in 0..horizon {
                        model.covariance.sample_into(&mut rng, &mut eps);
                        for ((ui, r), e) in u.iter_mut().zip(model.input(i, m)).zip(&eps) {
                            *ui = r + e;
                        }
                        log_density -= 0.5 * model.covariance.inv_form(&eps, &eps);
                        dynamics.step(&traj[i], &u, &mut next);
                        traj.push(next);
                    }
                    (traj, log_density)
                })
                .collect();
            let theta = match theta_mode {
                ThetaMode::Uniform => vec![1.0 / samples as f64; samples],
                ThetaMode::Likelihood => {
                    let top = draws.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
                    let raw: Vec<f64> = draws.iter().map(|d| (d.1 - top).exp()).collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter().map(|r| r / total).collect()
                }
            };
            Ok(ObstacleForecast {
                trajectories: draws.into_iter().map(|d| d.0).collect(),
                theta,
                collision_radius: model.collision_radius,
            })
        })
        .collect()
}

/// Whether the agent position is within the collision radius of trajectory
/// `p` at the same step index (boundary inclusive).
pub fn collision_indicator(agent_state: &[f64], step: usize, forecast: &ObstacleForecast, p: usize) -> bool {
    let o = forecast.trajectories[p][step];
    let dx = agent_state[0] - o[0];
    let dy = agent_state[1] - o[1];
    dx * dx + dy * dy <= forecast.collision_radius * forecast.collision_radius
}

#[derive(Debug, Clone, Copy)]
struct Disc {
    x: f64,
    y: f64,
    r2: f64,
    weight: f64,
}

/// Uniform grid over one step's obstacle positions, stored as CSR buckets.
#[derive(Debug, Clone)]
struct StepGrid {
    min_x: f64,
    min_y: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    discs: Vec<Disc>,
}

impl StepGrid {
    fn build(discs: Vec<Disc>, cell: f64) -> Self {
        if discs.is_empty() {
            return Self {
                min_x: 0.0,
                min_y: 0.0,
                cell,
                nx: 0,
                ny: 0,
                starts: vec![0],
                discs,
            };
        }
        let (mut min_x, mut min_y, mut max_x, mut max_y) =
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for d in &discs {
            min_x = min_x.min(d.x);
            min_y = min_y.min(d.y);
            max_x = max_x.max(d.x);
            max_y = max_y.max(d.y);
        }
        let nx = ((max_x - min_x) / cell).floor() as usize + 1;
        let ny = ((max_y - min_y) / cell).floor() as usize + 1;
        let cell_of = |d: &Disc| {
            let cx = (((d.x - min_x) / cell).floor() as usize).min(nx - 1);
            let cy = (((d.y - min_y) / cell).floor() as usize).min(ny - 1);
            cy * nx + cx
        };
        let mut counts = vec![0u32; nx * ny + 1];
        for d in &discs {
            counts[cell_of(d) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut sorted = vec![discs[0]; discs.len()];
        for d in &discs {
            let c = cell_of(d);
            sorted[fill[c] as usize] = *d;
            fill[c] += 1;
        }
        Self {
            min_x,
            min_y,
            cell,
            nx,
            ny,
            starts: counts,
            discs: sorted,
        }
    }

    /// `Σ weight` over discs containing `(x, y)`.
    fn occupancy(&self, x: f64, y: f64) -> f64 {
        if self.discs.is_empty() {
            return 0.0;
        }
        let fx = ((x - self.min_x) / self.cell).floor();
        let fy = ((y - self.min_y) / self.cell).floor();
        if fx < -1.0 || fy < -1.0 || fx > self.nx as f64 || fy > self.ny as f64 {
            return 0.0;
        }
        let (cx, cy) = (fx as i64, fy as i64);
        let mut total = 0.0;
        for gy in (cy - 1).max(0)..=(cy + 1).min(self.ny as i64 - 1) {
            for gx in (cx - 1).max(0)..=(cx + 1).min(self.nx as i64 - 1) {
                let c = gy as usize * self.nx + gx as usize;
                for d in &self.discs[self.starts[c] as usize..self.starts[c + 1] as usize] {
                    let (dx, dy) = (x - d.x, y - d.y);
                    if dx * dx + dy * dy <= d.r2 {
                        total += d.weight;
                    }
                }
            }
        }
        total
    }
}

/// Work counters for the additive-complexity contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ForecastStats {
    /// Obstacle trajectories simulated (`L * P`).
    pub obstacle_simulations: u64,
    /// Entries written into the per-step grids (`L * P * (N + 1)`).
    pub table_entries: u64,
    /// Grid lookups made by agent cost evaluations.
    pub lookups: u64,
}

/// `ψ(x_i | O) = ψ(x_i) + β Σ_l Σ_p θ_p^l 1_p^l(x_i, t_i)`, and the same sum
/// added to the terminal cost.
#[derive(Debug)]
pub struct AugmentedCost<C> {
    base: C,
    beta: f64,
    forecasts: Vec<ObstacleForecast>,
    grids: Vec<StepGrid>,
    table_entries: u64,
    lookups: AtomicU64,
}

impl<C: Cost> AugmentedCost<C> {
    pub fn new(base: C, forecasts: Vec<ObstacleForecast>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        for f in &forecasts {
            let total: f64 = f.theta.iter().sum();
            if f.theta.len() != f.samples() || f.theta.iter().any(|t| *t < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::Argument("forecast probabilities must be >= 0 and sum to 1".into()));
            }
            if !(f.collision_radius > 0.0) {
                return Err(Error::Config("collision radius must be positive".into()));
            }
        }
        let horizon = forecasts.iter().map(ObstacleForecast::horizon).max().unwrap_or(0);
        let cell = forecasts
            .iter()
            .map(|f| f.collision_radius)
            .fold(0.0, f64::max)
            .max(1e-6);
        let mut table_entries = 0u64;
        let grids: Vec<StepGrid> = if forecasts.is_empty() {
            Vec::new()
        } else {
            (0..=horizon)
                .map(|i| {
                    let mut discs = Vec::new();
                    for f in &forecasts {
                        let r2 = f.collision_radius * f.collision_radius;
                        for (traj, w) in f.trajectories.iter().zip(&f.theta) {
                            if let Some(o) = traj.get(i) {
                                discs.push(Disc { x: o[0], y: o[1], r2, weight: *w });
                            }
                        }
                    }
                    table_entries += discs.len() as u64;
                    StepGrid::build(discs, cell)
                })
                .collect()
        };
        Ok(Self {
            base,
            beta,
            forecasts,
            grids,
            table_entries,
            lookups: AtomicU64::new(0),
        })
    }

    pub fn forecasts(&self) -> &[ObstacleForecast] {
        &self.forecasts
    }

    pub fn base(&self) -> &C {
        &self.base
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `Σ_l Σ_p θ 1` at `step`; zero past the forecast horizon.
    pub fn occupancy(&self, state: &[f64], step: usize) -> f64 {
        match self.grids.get(step) {
            Some(g) => {
                self.lookups.fetch_add(1, Ordering::Relaxed);
                g.occupancy(state[0], state[1])
            }
            None => 0.0,
        }
    }

    pub fn stats(&self) -> ForecastStats {
        ForecastStats {
            obstacle_simulations: self.forecasts.iter().map(|f| f.samples() as u64).sum(),
            table_entries: self.table_entries,
            lookups: self.lookups.load(Ordering::Relaxed),
        }
    }
}

impl<C: Cost> Cost for AugmentedCost<C> {
    fn running(&self, state: &[f64], step: usize) -> f64 {
        let base = self.base.running(state, step);
        if self.grids.is_empty() {
            return base;
        }
        base + self.beta * self.occupancy(state, step)
    }

    fn terminal(&self, state: &[f64], step: usize) -> f64 {
        let base = self.base.terminal(state, step);
        if self.grids.is_empty() {
            return base;
        }
        base + self.beta * self.occupancy(state, step)
    }
}

/// Sampling settings for the obstacle forecasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastSettings {
    pub samples: usize,
    pub beta: f64,
    pub theta_mode: ThetaMode,
}

#[derive(Debug, Clone)]
pub struct DcMppiOutput {
    pub output: ClusteredOutput,
    pub forecasts: Vec<ObstacleForecast>,
    pub stats: ForecastStats,
    /// Wall-clock spent sampling forecasts and building the grids.
    pub forecast_time: Duration,
}

/// Clustered MPPI whose costs are parameterized by obstacle forecasts sampled
/// once for this control step.
#[allow(clippy::too_many_arguments)]
pub fn dc_mppi<D, G, C>(
    plan: &ControlPlan,
    x0: &[f64],
    dynamics: &D,
    models: &[ObstacleModel],
    obstacle_dynamics: &G,
    settings: &ForecastSettings,
    perturbations: &PerturbationSet,
    params: &DbscanParams,
    base_cost: C,
    seed: u64,
) -> Result<DcMppiOutput>
where
    D: Dynamics + ?Sized,
    G: Dynamics + ?Sized,
    C: Cost,
{
    let started = Instant::now();
    let forecasts = simulate_obstacles(
        models,
        obstacle_dynamics,
        settings.samples,
        plan.horizon(),
        seed,
        settings.theta_mode,
    )?;
    let cost = AugmentedCost::new(base_cost, forecasts, settings.beta)?;
    let forecast_time = started.elapsed();
    let rollouts = batch_rollout(dynamics, x0, plan, perturbations, &cost)?;
    let output = clustered_mppi(plan, perturbations, &rollouts, params, &cost, dynamics, x0)?;
    let stats = cost.stats();
    Ok(DcMppiOutput {
        output,
        stats,
        forecasts: cost.forecasts,
        forecast_time,
    })
}
