#![allow(dead_code)]

use cmppi::cluster::{ClusterSet, OUTLIER};

/// Brute-force density-reachability: core flags and, for each core point,
/// the id of its connected component in the core graph.
pub struct OracleClusters {
    pub core: Vec<bool>,
    pub component: Vec<Option<usize>>,
    pub neighbors: Vec<Vec<usize>>,
    pub count: usize,
}

pub fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_pts: usize) -> OracleClusters {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(&points[i], &points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    // Transitive closure of the core-core adjacency matrix.
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for &j in &neighbors[i] {
            reach[i][j] = core[i] && core[j];
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut component = vec![None; n];
    let mut count = 0;
    for i in 0..n {
        if core[i] && component[i].is_none() {
            for j in 0..n {
                if core[j] && (i == j || reach[i][j]) {
                    component[j] = Some(count);
                }
            }
            count += 1;
        }
    }
    OracleClusters {
        core,
        component,
        neighbors,
        count,
    }
}

/// Check a clustering against the oracle up to a relabelling of clusters.
pub fn agrees_with_oracle(got: &ClusterSet, oracle: &OracleClusters) -> Result<(), String> {
    let n = oracle.core.len();
    if got.count != oracle.count {
        return Err(format!("{} clusters, oracle has {}", got.count, oracle.count));
    }
    let mut map = vec![None; oracle.count];
    for i in 0..n {
        if let Some(c) = oracle.component[i] {
            let label = got.labels[i];
            if label == OUTLIER {
                return Err(format!("core point {i} labelled outlier"));
            }
            match map[c] {
                None => map[c] = Some(label),
                Some(l) if l != label => return Err(format!("component {c} split across labels")),
                _ => {}
            }
        }
    }
    let mut labels: Vec<i64> = map.iter().flatten().copied().collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() != oracle.count {
        return Err("two components merged".into());
    }
    for i in 0..n {
        if oracle.core[i] {
            continue;
        }
        let core_labels: Vec<i64> = oracle.neighbors[i]
            .iter()
            .filter(|&&j| oracle.core[j])
            .map(|&j| got.labels[j])
            .collect();
        let label = got.labels[i];
        if core_labels.is_empty() {
            if label != OUTLIER {
                return Err(format!("noise point {i} labelled {label}"));
            }
        } else if !core_labels.contains(&label) {
            return Err(format!("border point {i} labelled {label}, reachable from {core_labels:?}"));
        }
    }
    Ok(())
}

/// Classical RK4 on `(ẋ, ẏ, θ̇) = (v cos θ, v sin θ, ω)` with `substeps` steps over `dt`.
pub fn rk4_unicycle(state: [f64; 3], speed: f64, omega: f64, dt: f64, substeps: usize) -> [f64; 3] {
    let f = |s: [f64; 3]| [speed * s[2].cos(), speed * s[2].sin(), omega];
    let h = dt / substeps as f64;
    let mut s = state;
    for _ in 0..substeps {
        let add = |a: [f64; 3], k: [f64; 3], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2]];
        let k1 = f(s);
        let k2 = f(add(s, k1, h / 2.0));
        let k3 = f(add(s, k2, h / 2.0));
        let k4 = f(add(s, k3, h));
        for i in 0..3 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s
}
