//! Discrete-time models and rollouts.
//!
//! A rollout pushes one perturbed input sequence through a [`Dynamics`] model
//! and accumulates `S = Σ_i [ψ(x_i) + λ uᵢᵀΣ⁻¹εᵢ] + φ(x_N)`.

use std::ops::Deref;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mppi::{running_cost_penalty, Covariance, ControlPlan, PerturbationSet};
use crate::rng::{self, Domain};

/// A state vector. Planar models store `[x, y, theta]` with theta unwrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(Vec<f64>);

impl StateVec {
    pub fn new(values: &[f64]) -> Self {
        Self(values.to_vec())
    }

    pub fn planar(x: f64, y: f64, theta: f64) -> Self {
        Self(vec![x, y, theta])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn theta(&self) -> f64 {
        self.0[2]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVec {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Signed heading difference wrapped to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// `x_{i+1} = f(x_i, u_i)`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, state: &[f64], control: &[f64], next: &mut [f64]);
    /// Project a commanded input onto the admissible set.
    fn clamp_control(&self, _control: &mut [f64]) {}
}

impl<D: Dynamics + ?Sized> Dynamics for &D {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn step(&self, state: &[f64], control: &[f64], next: &mut [f64]) {
        (**self).step(state, control, next)
    }
    fn clamp_control(&self, control: &mut [f64]) {
        (**self).clamp_control(control)
    }
}

/// Running cost `ψ(x, i)` and terminal cost `φ(x_N)`.
///
/// The terminal term also receives its step index so time-indexed costs
/// (moving obstacles) can look up the matching forecast slice.
pub trait Cost: Send + Sync {
    fn running(&self, state: &[f64], step: usize) -> f64;
    fn terminal(&self, state: &[f64], step: usize) -> f64;
}

impl<C: Cost + ?Sized> Cost for &C {
    fn running(&self, state: &[f64], step: usize) -> f64 {
        (**self).running(state, step)
    }
    fn terminal(&self, state: &[f64], step: usize) -> f64 {
        (**self).terminal(state, step)
    }
}

/// `sin(h)/h`, accurate near zero.
fn sinc(h: f64) -> f64 {
    if h.abs() < 1e-4 {
        1.0 - h * h / 6.0
    } else {
        h.sin() / h
    }
}

/// Exact constant-rate arc over `dt` for a planar unicycle.
///
/// Uses the half-angle form of `(v/ω)(sin(θ+ωdt) − sin θ)`, which is the same
/// expression without the cancellation at small `ω`, and collapses to the
/// straight segment at `ω = 0`.
pub fn arc_step(x: f64, y: f64, theta: f64, speed: f64, omega: f64, dt: f64) -> [f64; 3] {
    let half = 0.5 * omega * dt;
    let chord = speed * dt * sinc(half);
    let mid = theta + half;
    [x + chord * mid.cos(), y + chord * mid.sin(), theta + omega * dt]
}

/// Constant-speed car steered by its turning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsModel {
    pub speed: f64,
    pub min_turn_radius: f64,
    pub dt: f64,
}

impl DubinsModel {
    pub fn new(speed: f64, min_turn_radius: f64, dt: f64) -> Result<Self> {
        for (name, v) in [("speed", speed), ("min_turn_radius", min_turn_radius), ("dt", dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            speed,
            min_turn_radius,
            dt,
        })
    }

    pub fn max_turn_rate(&self) -> f64 {
        self.speed / self.min_turn_radius
    }
}

impl Dynamics for DubinsModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn step(&self, state: &[f64], control: &[f64], next: &mut [f64]) {
        let max = self.max_turn_rate();
        let omega = control[0].clamp(-max, max);
        next.copy_from_slice(&arc_step(state[0], state[1], state[2], self.speed, omega, self.dt));
    }

    fn clamp_control(&self, control: &mut [f64]) {
        let max = self.max_turn_rate();
        control[0] = control[0].clamp(-max, max);
    }
}

/// One Dubins step with the turning rate clamped to `|ω| ≤ v / r_min`.
pub fn dubins_step(state: &StateVec, omega: f64, model: &DubinsModel) -> StateVec {
    let mut next = vec![0.0; 3];
    model.step(state, &[omega], &mut next);
    StateVec(next)
}

/// Unicycle driven by `[speed, turn_rate]`; used for moving obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnicycleModel {
    pub dt: f64,
}

impl Dynamics for UnicycleModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn step(&self, state: &[f64], control: &[f64], next: &mut [f64]) {
        next.copy_from_slice(&arc_step(state[0], state[1], state[2], control[0], control[1], self.dt));
    }
}

/// `x' = x + u dt`, for tests and toy problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleIntegrator {
    pub dim: usize,
    pub dt: f64,
}

impl Dynamics for SingleIntegrator {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn control_dim(&self) -> usize {
        self.dim
    }

    fn step(&self, state: &[f64], control: &[f64], next: &mut [f64]) {
        for ((n, x), u) in next.iter_mut().zip(state).zip(control) {
            *n = x + u * self.dt;
        }
    }
}

/// Which disturbances the true plant applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Noiseless,
    Control,
    ControlAndProcess,
}

/// Plant disturbance settings. The planner's internal model never sees
/// process noise; it only ever assumes control-channel noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    pub kind: NoiseKind,
    /// Per-step process-noise variances, one per state dimension.
    #[serde(default = "default_process_variance")]
    pub process_variance: Vec<f64>,
    /// Per-channel variances of the plant's input noise; the planner's
    /// perturbation covariance when absent.
    #[serde(default)]
    pub control_variance: Option<Vec<f64>>,
}

fn default_process_variance() -> Vec<f64> {
    vec![0.005, 0.005, 0.002]
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Noiseless,
            process_variance: default_process_variance(),
            control_variance: None,
        }
    }
}

impl NoiseProfile {
    pub fn new(kind: NoiseKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.process_variance.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("process variances must be finite and >= 0".into()));
        }
        if let Some(v) = &self.control_variance {
            if v.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("control noise variances must be finite and > 0".into()));
            }
        }
        Ok(())
    }

    fn add_process_noise<R: Rng + ?Sized>(&self, rng: &mut R, state: &mut [f64]) {
        if self.kind != NoiseKind::ControlAndProcess {
            return;
        }
        for (x, var) in state.iter_mut().zip(&self.process_variance) {
            let z: f64 = rng.sample(StandardNormal);
            *x += var.sqrt() * z;
        }
    }
}

/// Whether a rollout is the planner's internal simulation or an execution on
/// the true plant.
#[derive(Debug, Clone, Copy)]
pub enum ExecutionMode<'a> {
    Planner,
    Plant { profile: &'a NoiseProfile, seed: u64 },
}

/// One simulated trajectory and its accumulated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    states: Vec<f64>,
    state_dim: usize,
    /// Index of the perturbation row this rollout used.
    pub sample: usize,
    pub cost: f64,
    /// Set when the state or cost went non-finite; `cost` is then `+inf`.
    pub failed: bool,
}

impl Rollout {
    pub fn horizon(&self) -> usize {
        self.states.len() / self.state_dim - 1
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.state_dim)
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.horizon())
    }
}

/// Simulate `x0` under `plan + eps_row` and accumulate the MPPI cost.
pub fn rollout<D, C>(
    dynamics: &D,
    x0: &[f64],
    plan: &ControlPlan,
    eps_row: &[f64],
    cost: &C,
    mode: ExecutionMode<'_>,
) -> Result<Rollout>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    check_shapes(dynamics, x0, plan)?;
    if eps_row.len() != plan.inputs().len() {
        return Err(Error::Argument(format!(
            "perturbation row has {} entries, plan has {}",
            eps_row.len(),
            plan.inputs().len()
        )));
    }
    Ok(simulate(dynamics, x0, plan, eps_row, cost, mode, 0))
}

fn check_shapes<D: Dynamics + ?Sized>(dynamics: &D, x0: &[f64], plan: &ControlPlan) -> Result<()> {
    if x0.len() != dynamics.state_dim() {
        return Err(Error::Argument(format!(
            "initial state has dimension {}, model expects {}",
            x0.len(),
            dynamics.state_dim()
        )));
    }
    if plan.control_dim() != dynamics.control_dim() {
        return Err(Error::Argument(format!(
            "plan control dimension {} does not match model {}",
            plan.control_dim(),
            dynamics.control_dim()
        )));
    }
    Ok(())
}

fn simulate<D, C>(
    dynamics: &D,
    x0: &[f64],
    plan: &ControlPlan,
    eps_row: &[f64],
    cost: &C,
    mode: ExecutionMode<'_>,
    sample: usize,
) -> Rollout
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    let n = dynamics.state_dim();
    let m = plan.control_dim();
    let horizon = plan.horizon();
    let lambda = plan.lambda();
    let cov = plan.covariance();
    let mut states = vec![0.0; (horizon + 1) * n];
    states[..n].copy_from_slice(x0);
    let mut control = vec![0.0; m];
    let mut plant_rng = match mode {
        ExecutionMode::Plant { seed, .. } => Some(rng::stream(seed, Domain::Plant, 0)),
        ExecutionMode::Planner => None,
    };
    let mut total = 0.0;
    for i in 0..horizon {
        let u = plan.input(i);
        let eps = &eps_row[i * m..(i + 1) * m];
        for ((c, a), b) in control.iter_mut().zip(u).zip(eps) {
            *c = a + b;
        }
        let (done, rest) = states.split_at_mut((i + 1) * n);
        let current = &done[i * n..];
        let next = &mut rest[..n];
        dynamics.step(current, &control, next);
        if let (ExecutionMode::Plant { profile, .. }, Some(rng)) = (mode, plant_rng.as_mut()) {
            profile.add_process_noise(rng, next);
        }
        total += cost.running(current, i) + running_cost_penalty(u, eps, cov, lambda);
    }
    total += cost.terminal(&states[horizon * n..], horizon);
    let failed = total.is_nan() || states.iter().any(|x| !x.is_finite());
    Rollout {
        states,
        state_dim: n,
        sample,
        cost: if failed { f64::INFINITY } else { total },
        failed,
    }
}

/// One planner rollout per perturbation row, evaluated data-parallel and
/// returned in sample order. Failed rollouts are reported, never fatal.
pub fn batch_rollout<D, C>(
    dynamics: &D,
    x0: &[f64],
    plan: &ControlPlan,
    perturbations: &PerturbationSet,
    cost: &C,
) -> Result<Vec<Rollout>>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    check_shapes(dynamics, x0, plan)?;
    if perturbations.horizon() != plan.horizon() || perturbations.control_dim() != plan.control_dim()
    {
        return Err(Error::Argument("perturbation set does not match plan shape".into()));
    }
    Ok((0..perturbations.samples())
        .into_par_iter()
        .map(|k| {
            simulate(
                dynamics,
                x0,
                plan,
                perturbations.row(k),
                cost,
                ExecutionMode::Planner,
                k,
            )
        })
        .collect())
}

/// Apply one input to the true plant under `profile`.
///
/// Control noise is drawn from `control_noise`; process noise (when enabled)
/// is added after the model step.
pub fn plant_step<D, R>(
    dynamics: &D,
    state: &[f64],
    control: &[f64],
    profile: &NoiseProfile,
    control_noise: &Covariance,
    rng: &mut R,
) -> Vec<f64>
where
    D: Dynamics + ?Sized,
    R: Rng + ?Sized,
{
    let mut applied = control.to_vec();
    if profile.kind != NoiseKind::Noiseless {
        let mut eps = vec![0.0; applied.len()];
        control_noise.sample_into(rng, &mut eps);
        for (a, e) in applied.iter_mut().zip(&eps) {
            *a += e;
        }
    }
    let mut next = vec![0.0; dynamics.state_dim()];
    dynamics.step(state, &applied, &mut next);
    profile.add_process_noise(rng, &mut next);
    next
}
