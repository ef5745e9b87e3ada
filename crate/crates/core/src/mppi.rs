//! Perturbation sampling, exponentiated-cost weights and the weighted control
//! update shared by every MPPI variant in the crate.
//!
//! Nothing here knows about dynamics or costs: a caller samples a
//! [`PerturbationSet`], simulates one rollout per row, and hands the resulting
//! costs back to [`compute_weights`] and [`update_control`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Symmetric positive definite covariance with its Cholesky factor and inverse
/// precomputed. Construction is the only place SPD-ness is checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    dim: usize,
    matrix: Vec<f64>,
    factor: Vec<f64>,
    inverse: Vec<f64>,
}

impl Covariance {
    /// Build from a row-major `dim x dim` matrix.
    pub fn new(dim: usize, row_major: &[f64]) -> Result<Self> {
        if dim == 0 || row_major.len() != dim * dim {
            return Err(Error::Config(format!(
                "covariance needs {} entries for dimension {dim}, got {}",
                dim * dim,
                row_major.len()
            )));
        }
        if row_major.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("covariance has non-finite entries".into()));
        }
        for r in 0..dim {
            for c in 0..r {
                let (a, b) = (row_major[r * dim + c], row_major[c * dim + r]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Config("covariance is not symmetric".into()));
                }
            }
        }
        let m = DMatrix::from_row_slice(dim, dim, row_major);
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Config("covariance is not positive definite".into()))?;
        let l = chol.l();
        let inv = chol.inverse();
        let to_row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            (0..dim)
                .flat_map(|r| (0..dim).map(move |c| (r, c)))
                .map(|(r, c)| m[(r, c)])
                .collect()
        };
        Ok(Self {
            dim,
            matrix: row_major.to_vec(),
            factor: to_row_major(&l),
            inverse: to_row_major(&inv),
        })
    }

    pub fn scalar(variance: f64) -> Result<Self> {
        Self::new(1, &[variance])
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        let n = variances.len();
        let mut m = vec![0.0; n * n];
        for (i, v) in variances.iter().enumerate() {
            m[i * n + i] = *v;
        }
        Self::new(n, &m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major matrix entries.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Write one draw of `N(0, Σ)` into `out` as `L z`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let n = self.dim;
        if n == 1 {
            let z: f64 = rng.sample(StandardNormal);
            out[0] = self.factor[0] * z;
            return;
        }
        let mut z = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if n <= z.len() {
            &mut z[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..=r).map(|c| self.factor[r * n + c] * z[c]).sum();
        }
    }

    /// `aᵀ Σ⁻¹ b`.
    pub fn inv_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.dim;
        if n == 1 {
            return a[0] * self.inverse[0] * b[0];
        }
        let mut acc = 0.0;
        for r in 0..n {
            let row = &self.inverse[r * n..(r + 1) * n];
            let rb: f64 = row.iter().zip(b).map(|(x, y)| x * y).sum();
            acc += a[r] * rb;
        }
        acc
    }
}

/// How perturbations evolve along the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// A fresh draw at every time step.
    PerStep,
    /// One draw per rollout, repeated over the whole horizon.
    #[default]
    Constant,
}

/// Reference input sequence `U` with its sampling covariance and temperature.
#[derive(Debug, Clone)]
pub struct ControlPlan {
    inputs: Vec<f64>,
    control_dim: usize,
    covariance: Covariance,
    lambda: f64,
}

impl ControlPlan {
    /// `inputs` is the row-major `N x m` sequence, `m` taken from the covariance.
    pub fn new(inputs: Vec<f64>, covariance: Covariance, lambda: f64) -> Result<Self> {
        let m = covariance.dim();
        if inputs.is_empty() || !inputs.len().is_multiple_of(m) {
            return Err(Error::Argument(format!(
                "plan length {} is not a positive multiple of control dimension {m}",
                inputs.len()
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        if inputs.iter().any(|u| !u.is_finite()) {
            return Err(Error::Argument("plan has non-finite inputs".into()));
        }
        Ok(Self {
            inputs,
            control_dim: m,
            covariance,
            lambda,
        })
    }

    /// A plan holding zero input for `horizon` steps.
    pub fn zeros(horizon: usize, covariance: Covariance, lambda: f64) -> Result<Self> {
        let m = covariance.dim();
        Self::new(vec![0.0; horizon * m], covariance, lambda)
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len() / self.control_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn input(&self, step: usize) -> &[f64] {
        &self.inputs[step * self.control_dim..(step + 1) * self.control_dim]
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Replace the input sequence, keeping covariance and temperature.
    pub fn with_inputs(&self, inputs: Vec<f64>) -> Result<Self> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::Argument(format!(
                "replacement plan has {} entries, expected {}",
                inputs.len(),
                self.inputs.len()
            )));
        }
        Self::new(inputs, self.covariance.clone(), self.lambda)
    }

    /// Receding-horizon warm start: drop the first input and repeat the last.
    pub fn shifted(&self) -> Self {
        let m = self.control_dim;
        let mut inputs = Vec::with_capacity(self.inputs.len());
        inputs.extend_from_slice(&self.inputs[m..]);
        inputs.extend_from_slice(&self.inputs[self.inputs.len() - m..]);
        Self {
            inputs,
            ..self.clone()
        }
    }
}

/// `K x N x m` noise realizations, row-major by sample then step.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    eps: Vec<f64>,
    samples: usize,
    horizon: usize,
    control_dim: usize,
    seed: u64,
    mode: SamplingMode,
}

impl PerturbationSet {
    /// Wrap externally produced perturbations.
    pub fn from_raw(
        eps: Vec<f64>,
        samples: usize,
        horizon: usize,
        control_dim: usize,
    ) -> Result<Self> {
        if samples == 0 || horizon == 0 || control_dim == 0 {
            return Err(Error::Argument("perturbation set dimensions must be positive".into()));
        }
        if eps.len() != samples * horizon * control_dim {
            return Err(Error::Argument(format!(
                "expected {} perturbation entries, got {}",
                samples * horizon * control_dim,
                eps.len()
            )));
        }
        Ok(Self {
            eps,
            samples,
            horizon,
            control_dim,
            seed: 0,
            mode: SamplingMode::PerStep,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eps
    }

    /// The `N x m` perturbation sequence of sample `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        let len = self.horizon * self.control_dim;
        &self.eps[k * len..(k + 1) * len]
    }

    pub fn at(&self, k: usize, step: usize) -> &[f64] {
        let m = self.control_dim;
        &self.row(k)[step * m..(step + 1) * m]
    }
}

/// Draw `samples` perturbation sequences of length `horizon` from `N(0, Σ)`.
///
/// Sample `k` reads only from its own keyed stream, so the set is identical no
/// matter how (or in what order) the rows are produced.
pub fn sample_perturbations(
    samples: usize,
    horizon: usize,
    covariance: &Covariance,
    mode: SamplingMode,
    seed: u64,
) -> Result<PerturbationSet> {
    if samples == 0 || horizon == 0 {
        return Err(Error::Argument(format!(
            "need at least one sample and one step, got K={samples}, N={horizon}"
        )));
    }
    let m = covariance.dim();
    let row_len = horizon * m;
    let mut eps = vec![0.0; samples * row_len];
    for (k, row) in eps.chunks_exact_mut(row_len).enumerate() {
        let mut rng = rng::stream(seed, Domain::Perturbation, k as u64);
        match mode {
            SamplingMode::PerStep => {
                for step in row.chunks_exact_mut(m) {
                    covariance.sample_into(&mut rng, step);
                }
            }
            SamplingMode::Constant => {
                let (first, rest) = row.split_at_mut(m);
                covariance.sample_into(&mut rng, first);
                for step in rest.chunks_exact_mut(m) {
                    step.copy_from_slice(first);
                }
            }
        }
    }
    Ok(PerturbationSet {
        eps,
        samples,
        horizon,
        control_dim: m,
        seed,
        mode,
    })
}

/// Normalized importance weights, one per rollout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `w_k = exp(-(S_k - ρ)/λ) / η` with `ρ = min_k S_k`.
///
/// Shifting by the minimum keeps the largest exponent at zero so nothing
/// overflows and at least one term is exactly one. A `+inf` cost (a failed
/// rollout) gets weight zero; NaN and `-inf` are rejected.
pub fn compute_weights(costs: &[f64], lambda: f64) -> Result<WeightVector> {
    if costs.is_empty() {
        return Err(Error::Argument("cannot weight an empty cost list".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
    }
    if let Some(bad) = costs.iter().find(|c| c.is_nan() || **c == f64::NEG_INFINITY) {
        return Err(Error::Data(format!("invalid rollout cost {bad}")));
    }
    let rho = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if !rho.is_finite() {
        return Err(Error::Data("every rollout failed; no finite cost".into()));
    }
    let mut w: Vec<f64> = costs.iter().map(|s| (-(s - rho) / lambda).exp()).collect();
    let eta: f64 = w.iter().sum();
    for wk in &mut w {
        *wk /= eta;
    }
    Ok(WeightVector(w))
}

/// `u*_i = u_i + Σ_k w_k ε_i^(k)` over all samples.
pub fn update_control(
    plan: &ControlPlan,
    perturbations: &PerturbationSet,
    weights: &WeightVector,
) -> Result<Vec<f64>> {
    if weights.len() != perturbations.samples() {
        return Err(Error::Argument(format!(
            "{} weights for {} perturbation samples",
            weights.len(),
            perturbations.samples()
        )));
    }
    let members: Vec<usize> = (0..perturbations.samples()).collect();
    weighted_update(plan, perturbations, &members, weights.as_slice())
}

/// The same update restricted to the samples in `members`; `weights[j]`
/// belongs to `members[j]`.
pub fn update_control_members(
    plan: &ControlPlan,
    perturbations: &PerturbationSet,
    members: &[usize],
    weights: &WeightVector,
) -> Result<Vec<f64>> {
    if weights.len() != members.len() {
        return Err(Error::Argument(format!(
            "{} weights for {} cluster members",
            weights.len(),
            members.len()
        )));
    }
    if let Some(k) = members.iter().find(|&&k| k >= perturbations.samples()) {
        return Err(Error::Argument(format!("member index {k} out of range")));
    }
    weighted_update(plan, perturbations, members, weights.as_slice())
}

fn weighted_update(
    plan: &ControlPlan,
    perturbations: &PerturbationSet,
    members: &[usize],
    weights: &[f64],
) -> Result<Vec<f64>> {
    if perturbations.horizon() != plan.horizon() || perturbations.control_dim() != plan.control_dim()
    {
        return Err(Error::Argument(format!(
            "perturbations are {}x{}, plan is {}x{}",
            perturbations.horizon(),
            perturbations.control_dim(),
            plan.horizon(),
            plan.control_dim()
        )));
    }
    let mut delta = vec![0.0; plan.inputs().len()];
    for (&k, &w) in members.iter().zip(weights) {
        for (d, e) in delta.iter_mut().zip(perturbations.row(k)) {
            *d += w * e;
        }
    }
    Ok(plan.inputs().iter().zip(delta).map(|(u, d)| u + d).collect())
}

/// `λ uᵀ Σ⁻¹ ε`, the per-step control penalty accumulated into a rollout cost.
///
/// The textbook weight `exp(-J/λ - R(𝓔))` with
/// `R(𝓔) = Σ_i ½ uᵢᵀΣ⁻¹(uᵢ + 2εᵢ)` splits into `Σ_i ½ uᵢᵀΣ⁻¹uᵢ`, which is the
/// same for every sample and cancels in the normalization, and
/// `Σ_i uᵢᵀΣ⁻¹εᵢ`. Folding `λ` times the latter into the rollout cost therefore
/// yields the same weights while keeping a single scalar per rollout.
pub fn running_cost_penalty(u: &[f64], eps: &[f64], covariance: &Covariance, lambda: f64) -> f64 {
    lambda * covariance.inv_form(u, eps)
}
