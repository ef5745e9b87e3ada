//! Rollout clustering.
//!
//! Each rollout becomes a point `(ε_0, …, ε_{N-1}, S)`. DBSCAN groups rollouts
//! whose perturbations are close *and* whose costs are similar, so a sharp
//! change in cost opens a cluster boundary. MPPI is then run inside every
//! cluster and the cluster plan with the lowest noiseless cost wins.
//!
//! Restricting the weights to a cluster needs nothing but the costs already
//! computed for the full batch: the truncated importance density only rescales
//! weights inside the cluster and zeroes them outside, and the rescaling
//! cancels in the normalization.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout, Cost, Dynamics, ExecutionMode, Rollout};
use crate::error::{Error, Result};
use crate::mppi::{
    compute_weights, update_control, update_control_members, ControlPlan, PerturbationSet,
    WeightVector,
};

/// Label of points that belong to no cluster.
pub const OUTLIER: i64 = -1;

/// Per-dimension scaling applied before Euclidean distances are taken.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// Standardize every dimension over the current batch; constant dimensions map to 0.
    #[default]
    ZScore,
    Identity,
    /// Divide each dimension by the given factor.
    Factors(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbscanParams {
    pub eps_radius: f64,
    pub min_pts: usize,
    pub scaling: Scaling,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps_radius: 0.5,
            min_pts: 5,
            scaling: Scaling::ZScore,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_radius > 0.0 && self.eps_radius.is_finite()) {
            return Err(Error::Config(format!(
                "eps_radius must be positive, got {}",
                self.eps_radius
            )));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("min_pts must be at least 1".into()));
        }
        if let Scaling::Factors(f) = &self.scaling {
            if f.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("scaling factors must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Row-major `count x dim` point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrix {
    data: Vec<f64>,
    dim: usize,
}

impl PointMatrix {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!(
                "{} values do not form points of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn is_finite(&self, i: usize) -> bool {
        self.point(i).iter().all(|v| v.is_finite())
    }
}

/// Rollout points: the flattened perturbation row followed by the rollout cost.
pub fn rollout_points(perturbations: &PerturbationSet, costs: &[f64]) -> Result<PointMatrix> {
    if costs.len() != perturbations.samples() {
        return Err(Error::Argument(format!(
            "{} costs for {} perturbation samples",
            costs.len(),
            perturbations.samples()
        )));
    }
    let row = perturbations.horizon() * perturbations.control_dim();
    let mut data = Vec::with_capacity(costs.len() * (row + 1));
    for (k, c) in costs.iter().enumerate() {
        data.extend_from_slice(perturbations.row(k));
        data.push(*c);
    }
    PointMatrix::new(data, row + 1)
}

/// Apply `scaling`. Points with non-finite coordinates are left untouched and
/// do not contribute to the batch statistics.
pub fn standardize(points: &PointMatrix, scaling: &Scaling) -> Result<PointMatrix> {
    let dim = points.dim();
    let n = points.len();
    let (center, scale): (Vec<f64>, Vec<f64>) = match scaling {
        Scaling::Identity => (vec![0.0; dim], vec![1.0; dim]),
        Scaling::Factors(f) => {
            if f.len() != dim {
                return Err(Error::Argument(format!(
                    "{} scaling factors for dimension {dim}",
                    f.len()
                )));
            }
            (vec![0.0; dim], f.clone())
        }
        Scaling::ZScore => {
            let valid: Vec<usize> = (0..n).filter(|&i| points.is_finite(i)).collect();
            let count = valid.len().max(1) as f64;
            let mut mean = vec![0.0; dim];
            for &i in &valid {
                for (m, v) in mean.iter_mut().zip(points.point(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            let mut var = vec![0.0; dim];
            for &i in &valid {
                for ((s, v), m) in var.iter_mut().zip(points.point(i)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            // a zero scale marks a constant dimension
            let sd = var.iter().map(|s| (s / count).sqrt()).collect();
            (mean, sd)
        }
    };
    let mut data = points.data.clone();
    for (i, row) in data.chunks_exact_mut(dim).enumerate() {
        if !points.is_finite(i) {
            continue;
        }
        for ((v, c), s) in row.iter_mut().zip(&center).zip(&scale) {
            *v = if *s > 0.0 { (*v - c) / s } else { 0.0 };
        }
    }
    PointMatrix::new(data, dim)
}

/// Cluster labels: `>= 0` for cluster ids in first-touch order, [`OUTLIER`] otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub labels: Vec<i64>,
    pub count: usize,
}

impl ClusterSet {
    /// Indices of cluster `m`, ascending.
    pub fn members(&self, m: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == m as i64)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn outliers(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == OUTLIER)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for l in &self.labels {
            if *l >= 0 {
                sizes[*l as usize] += 1;
            }
        }
        sizes
    }
}

/// ε-neighborhoods (each point is its own neighbor). Distances stop
/// accumulating once they exceed the radius.
fn neighborhoods(points: &PointMatrix, radius: f64) -> Vec<Vec<u32>> {
    let n = points.len();
    let r2 = radius * radius;
    let valid: Vec<bool> = (0..n).map(|i| points.is_finite(i)).collect();
    let mut out: Vec<Vec<u32>> = (0..n)
        .map(|i| if valid[i] { vec![i as u32] } else { Vec::new() })
        .collect();
    for i in 0..n {
        if !valid[i] {
            continue;
        }
        let a = points.point(i);
        for j in (i + 1)..n {
            if !valid[j] {
                continue;
            }
            let b = points.point(j);
            let mut d2 = 0.0;
            let mut within = true;
            for (x, y) in a.iter().zip(b) {
                d2 += (x - y) * (x - y);
                if d2 > r2 {
                    within = false;
                    break;
                }
            }
            if within {
                out[i].push(j as u32);
                out[j].push(i as u32);
            }
        }
    }
    out
}

/// Classical DBSCAN on the scaled points.
///
/// Core points have at least `min_pts` neighbors (themselves included) within
/// `eps_radius`. Clusters are grown from cores in index order; a border point
/// joins the first cluster that reaches it. Points with non-finite
/// coordinates are always outliers.
pub fn dbscan(points: &PointMatrix, params: &DbscanParams) -> Result<ClusterSet> {
    params.validate()?;
    let scaled = standardize(points, &params.scaling)?;
    let nbrs = neighborhoods(&scaled, params.eps_radius);
    const UNSEEN: i64 = i64::MIN;
    let n = points.len();
    let mut labels = vec![UNSEEN; n];
    let mut count = 0usize;
    let mut queue = VecDeque::new();
    for p in 0..n {
        if labels[p] != UNSEEN {
            continue;
        }
        if nbrs[p].len() < params.min_pts {
            labels[p] = OUTLIER;
            continue;
        }
        let id = count as i64;
        count += 1;
        labels[p] = id;
        queue.extend(nbrs[p].iter().copied());
        while let Some(q) = queue.pop_front() {
            let q = q as usize;
            if labels[q] == OUTLIER {
                labels[q] = id;
                continue;
            }
            if labels[q] != UNSEEN {
                continue;
            }
            labels[q] = id;
            if nbrs[q].len() >= params.min_pts {
                queue.extend(nbrs[q].iter().copied());
            }
        }
    }
    Ok(ClusterSet { labels, count })
}

/// Importance weights restricted to one cluster: plain MPPI weights over the
/// cluster's own costs.
pub fn cluster_weights(costs: &[f64], lambda: f64) -> Result<WeightVector> {
    if costs.is_empty() {
        return Err(Error::Argument("cluster has no members".into()));
    }
    compute_weights(costs, lambda)
}

/// Baseline MPPI update over every sample.
pub fn baseline_update(
    plan: &ControlPlan,
    perturbations: &PerturbationSet,
    costs: &[f64],
) -> Result<Vec<f64>> {
    let w = compute_weights(costs, plan.lambda())?;
    update_control(plan, perturbations, &w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterCandidate {
    pub cluster: usize,
    pub size: usize,
    pub plan: Vec<f64>,
    /// Noiseless state cost of `plan`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDiagnostics {
    pub labels: Vec<i64>,
    pub cluster_count: usize,
    pub candidates: Vec<ClusterCandidate>,
    /// Winning cluster id; `None` when the all-outlier fallback ran.
    pub chosen: Option<usize>,
    pub fallback: bool,
    /// Largest cluster size over the number of rollouts.
    pub max_cluster_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteredOutput {
    pub plan: Vec<f64>,
    pub cost: f64,
    pub diagnostics: ClusterDiagnostics,
}

/// Evaluate a plan with a noiseless rollout; zero perturbations make the
/// control penalty vanish so this is the pure state cost.
pub fn evaluate_plan<D, C>(dynamics: &D, x0: &[f64], plan: &ControlPlan, cost: &C) -> Result<f64>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    let zeros = vec![0.0; plan.inputs().len()];
    Ok(rollout(dynamics, x0, plan, &zeros, cost, ExecutionMode::Planner)?.cost)
}

/// Clustered MPPI over an already simulated batch.
///
/// `rollouts[k]` must have been produced from `perturbations.row(k)`. The only
/// new cost evaluations are the noiseless rollouts of the candidate plans.
pub fn clustered_mppi<D, C>(
    plan: &ControlPlan,
    perturbations: &PerturbationSet,
    rollouts: &[Rollout],
    params: &DbscanParams,
    nominal_cost: &C,
    dynamics: &D,
    x0: &[f64],
) -> Result<ClusteredOutput>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    let k = perturbations.samples();
    if rollouts.len() != k || k == 0 {
        return Err(Error::Argument(format!(
            "{} rollouts for {k} perturbation samples",
            rollouts.len()
        )));
    }
    let costs: Vec<f64> = rollouts.iter().map(|r| r.cost).collect();
    let points = rollout_points(perturbations, &costs)?;
    let clusters = dbscan(&points, params)?;
    let sizes = clusters.sizes();
    let max_cluster_fraction = sizes.iter().copied().max().unwrap_or(0) as f64 / k as f64;

    if clusters.count == 0 {
        log::warn!("every rollout is an outlier; falling back to baseline MPPI over {k} samples");
        let inputs = baseline_update(plan, perturbations, &costs)?;
        let cost = evaluate_plan(dynamics, x0, &plan.with_inputs(inputs.clone())?, nominal_cost)?;
        return Ok(ClusteredOutput {
            plan: inputs,
            cost,
            diagnostics: ClusterDiagnostics {
                labels: clusters.labels,
                cluster_count: 0,
                candidates: Vec::new(),
                chosen: None,
                fallback: true,
                max_cluster_fraction,
            },
        });
    }

    let candidates: Vec<ClusterCandidate> = (0..clusters.count)
        .into_par_iter()
        .map(|m| {
            let members = clusters.members(m);
            let member_costs: Vec<f64> = members.iter().map(|&i| costs[i]).collect();
            let w = cluster_weights(&member_costs, plan.lambda())?;
            let inputs = update_control_members(plan, perturbations, &members, &w)?;
            let cost = evaluate_plan(dynamics, x0, &plan.with_inputs(inputs.clone())?, nominal_cost)?;
            Ok(ClusterCandidate {
                cluster: m,
                size: members.len(),
                plan: inputs,
                cost,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.cost < candidates[best].cost {
            best = i;
        }
    }
    Ok(ClusteredOutput {
        plan: candidates[best].plan.clone(),
        cost: candidates[best].cost,
        diagnostics: ClusterDiagnostics {
            labels: clusters.labels,
            cluster_count: clusters.count,
            chosen: Some(best),
            candidates,
            fallback: false,
            max_cluster_fraction,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SingleIntegrator;
    use crate::mppi::Covariance;

    fn identity(eps_radius: f64, min_pts: usize) -> DbscanParams {
        DbscanParams {
            eps_radius,
            min_pts,
            scaling: Scaling::Identity,
        }
    }

    #[test]
    fn distant_pair_gives_two_singletons() {
        let pts = PointMatrix::new(vec![0.0, 0.0, 3.0, 0.0], 2).unwrap();
        let c = dbscan(&pts, &identity(1.0, 1)).unwrap();
        assert_eq!(c.count, 2);
        assert_eq!(c.labels, vec![0, 1]);
    }

    #[test]
    fn chain_is_one_cluster() {
        let pts = PointMatrix::new(vec![0.0, 0.9, 1.8, 2.7, 3.6], 1).unwrap();
        let c = dbscan(&pts, &identity(1.0, 2)).unwrap();
        assert_eq!(c.count, 1);
        assert_eq!(c.labels, vec![0; 5]);
    }

    #[test]
    fn single_point_follows_min_pts() {
        let pts = PointMatrix::new(vec![1.0, 2.0], 2).unwrap();
        assert_eq!(dbscan(&pts, &identity(0.5, 1)).unwrap().labels, vec![0]);
        let c = dbscan(&pts, &identity(0.5, 2)).unwrap();
        assert_eq!(c.labels, vec![OUTLIER]);
        assert_eq!(c.count, 0);
    }

    #[test]
    fn border_point_joins_cluster() {
        // 0,0.5,1.0 are dense; 1.9 is within reach of 1.0 only.
        let pts = PointMatrix::new(vec![0.0, 0.5, 1.0, 1.9, 10.0], 1).unwrap();
        let c = dbscan(&pts, &identity(1.0, 3)).unwrap();
        assert_eq!(c.labels, vec![0, 0, 0, 0, OUTLIER]);
    }

    #[test]
    fn non_finite_points_are_outliers() {
        let pts = PointMatrix::new(vec![0.0, 0.1, f64::INFINITY, 0.2], 1).unwrap();
        let c = dbscan(&pts, &identity(0.5, 2)).unwrap();
        assert_eq!(c.labels[2], OUTLIER);
        assert_eq!(c.labels[0], 0);
    }

    #[test]
    fn zscore_maps_constant_dimensions_to_zero() {
        let pts = PointMatrix::new(vec![1.0, 5.0, 1.0, 7.0, 1.0, 9.0], 2).unwrap();
        let s = standardize(&pts, &Scaling::ZScore).unwrap();
        assert_eq!(s.point(0)[0], 0.0);
        assert!((s.point(1)[1]).abs() < 1e-12);
        assert!((s.point(2)[1] - (1.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn invalid_params() {
        let pts = PointMatrix::new(vec![0.0], 1).unwrap();
        assert!(dbscan(&pts, &identity(0.0, 1)).is_err());
        assert!(dbscan(&pts, &identity(1.0, 0)).is_err());
    }

    #[test]
    fn cluster_weight_examples() {
        assert_eq!(cluster_weights(&[4.2], 1.0).unwrap().as_slice(), &[1.0]);
        let w = cluster_weights(&[0.0, std::f64::consts::LN_2], 1.0).unwrap();
        assert!((w.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(cluster_weights(&[], 1.0), Err(Error::Argument(_))));
        let costs = [3.0, 1.5, 2.25, 9.0];
        assert_eq!(
            cluster_weights(&costs, 0.7).unwrap(),
            compute_weights(&costs, 0.7).unwrap()
        );
    }

    struct Quadratic;
    impl Cost for Quadratic {
        fn running(&self, _: &[f64], _: usize) -> f64 {
            0.0
        }
        fn terminal(&self, x: &[f64], _: usize) -> f64 {
            (x[0] - 0.3).powi(2)
        }
    }

    fn setup(eps: Vec<f64>) -> (ControlPlan, PerturbationSet, Vec<Rollout>) {
        let k = eps.len();
        let plan = ControlPlan::zeros(1, Covariance::scalar(1.0).unwrap(), 1.0).unwrap();
        let perts = PerturbationSet::from_raw(eps, k, 1, 1).unwrap();
        let model = SingleIntegrator { dim: 1, dt: 1.0 };
        let rollouts = crate::dynamics::batch_rollout(&model, &[0.0], &plan, &perts, &Quadratic).unwrap();
        (plan, perts, rollouts)
    }

    #[test]
    fn single_cluster_equals_baseline_exactly() {
        let (plan, perts, rollouts) = setup((0..40).map(|i| -0.5 + i as f64 * 0.025).collect());
        let model = SingleIntegrator { dim: 1, dt: 1.0 };
        let params = DbscanParams {
            eps_radius: 100.0,
            min_pts: 1,
            scaling: Scaling::Identity,
        };
        let out = clustered_mppi(&plan, &perts, &rollouts, &params, &Quadratic, &model, &[0.0]).unwrap();
        assert_eq!(out.diagnostics.cluster_count, 1);
        let costs: Vec<f64> = rollouts.iter().map(|r| r.cost).collect();
        let base = baseline_update(&plan, &perts, &costs).unwrap();
        assert_eq!(out.plan, base);
    }

    #[test]
    fn lower_cost_cluster_is_selected() {
        // Two well separated groups in perturbation space; the group near
        // the optimum 0.3 has the lower cost.
        let (plan, perts, rollouts) = setup(vec![0.29, 0.3, 0.31, -2.0, -2.01, -1.99]);
        let model = SingleIntegrator { dim: 1, dt: 1.0 };
        let params = DbscanParams {
            eps_radius: 0.5,
            min_pts: 2,
            scaling: Scaling::Identity,
        };
        let out = clustered_mppi(&plan, &perts, &rollouts, &params, &Quadratic, &model, &[0.0]).unwrap();
        assert_eq!(out.diagnostics.cluster_count, 2);
        assert_eq!(out.diagnostics.chosen, Some(0));
        assert!((out.plan[0] - 0.3).abs() < 0.01);
        for c in &out.diagnostics.candidates {
            assert!(out.cost <= c.cost);
        }
    }

    #[test]
    fn all_outliers_fall_back_to_baseline() {
        let (plan, perts, rollouts) = setup(vec![-3.0, 0.0, 3.0]);
        let model = SingleIntegrator { dim: 1, dt: 1.0 };
        let params = DbscanParams {
            eps_radius: 0.1,
            min_pts: 2,
            scaling: Scaling::Identity,
        };
        let out = clustered_mppi(&plan, &perts, &rollouts, &params, &Quadratic, &model, &[0.0]).unwrap();
        assert!(out.diagnostics.fallback);
        assert_eq!(out.diagnostics.chosen, None);
        let costs: Vec<f64> = rollouts.iter().map(|r| r.cost).collect();
        assert_eq!(out.plan, baseline_update(&plan, &perts, &costs).unwrap());
    }
}
