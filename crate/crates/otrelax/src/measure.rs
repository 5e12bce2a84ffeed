//! Discrete measures over products of finite state spaces, and the cluster
//! partitions both relaxation families are built on.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Partition of the x- and y-coordinates into K clusters. Clusters need not
/// align across x and y.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// x-coordinates of each cluster, disjoint and covering 0..dx.
    pub x_clusters: Vec<Vec<usize>>,
    /// y-coordinates of each cluster, disjoint and covering 0..dy.
    pub y_clusters: Vec<Vec<usize>>,
}

impl ClusterSpec {
    pub fn new(x_clusters: Vec<Vec<usize>>, y_clusters: Vec<Vec<usize>>) -> Result<Self> {
        if x_clusters.len() != y_clusters.len() || x_clusters.is_empty() {
            return Err(Error::InvalidClusterSpec(
                "x and y need the same, nonzero number of clusters".into(),
            ));
        }
        for (side, clusters) in [("x", &x_clusters), ("y", &y_clusters)] {
            let mut seen = std::collections::BTreeSet::new();
            let mut total = 0usize;
            for (k, c) in clusters.iter().enumerate() {
                if c.is_empty() {
                    return Err(Error::InvalidClusterSpec(format!(
                        "{side}-cluster {k} is empty"
                    )));
                }
                for &v in c {
                    if !seen.insert(v) {
                        return Err(Error::InvalidClusterSpec(format!(
                            "{side}-coordinate {v} assigned twice"
                        )));
                    }
                }
                total += c.len();
            }
            let max = *seen.iter().next_back().unwrap();
            if max + 1 != total {
                return Err(Error::InvalidClusterSpec(format!(
                    "{side}-clusters must cover 0..{total} without gaps"
                )));
            }
        }
        Ok(Self { x_clusters, y_clusters })
    }

    /// Single-coordinate clusters: cluster k holds x_k and y_k.
    pub fn singletons(d: usize) -> Self {
        Self {
            x_clusters: (0..d).map(|i| vec![i]).collect(),
            y_clusters: (0..d).map(|i| vec![i]).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.x_clusters.len()
    }

    pub fn x_dim(&self) -> usize {
        self.x_clusters.iter().map(Vec::len).sum()
    }

    pub fn y_dim(&self) -> usize {
        self.y_clusters.iter().map(Vec::len).sum()
    }
}

/// Probability tensor over a product of finite state spaces. Weights are
/// stored flat in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub axes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(axes: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let total: usize = axes.iter().product();
        if axes.iter().any(|&a| a == 0) {
            return Err(Error::InvalidMeasure("zero-size axis".into()));
        }
        if weights.len() != total {
            return Err(Error::InvalidMeasure(format!(
                "expected {total} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| *w < -1e-14 || !w.is_finite()) {
            return Err(Error::InvalidMeasure("weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { axes, weights })
    }

    /// Normalizes raw nonnegative weights to total mass one.
    pub fn from_unnormalized(axes: Vec<usize>, mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::InvalidMeasure("weights must have positive finite mass".into()));
        }
        for w in &mut weights {
            *w /= sum;
        }
        // kill the rounding drift so downstream sum checks hold exactly
        let resum: f64 = weights.iter().sum();
        if let Some(w) = weights.iter_mut().max_by(|a, b| a.partial_cmp(b).unwrap()) {
            *w += 1.0 - resum;
        }
        Self::new(axes, weights)
    }

    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn total_states(&self) -> usize {
        self.weights.len()
    }

    /// Multi-index of a flat index.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, &a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a;
            flat /= a;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (k, &a) in self.axes.iter().enumerate() {
            flat = flat * a + idx[k];
        }
        flat
    }

    /// Marginal on the given axes (kept in their original order).
    pub fn marginalize(&self, keep: &[usize]) -> Result<DiscreteMeasure> {
        if keep.is_empty() {
            return Err(Error::InvalidMeasure("marginal needs at least one axis".into()));
        }
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.iter().any(|&a| a >= self.axes.len()) {
            return Err(Error::InvalidMeasure("marginal axis out of range".into()));
        }
        let new_axes: Vec<usize> = keep.iter().map(|&a| self.axes[a]).collect();
        let total: usize = new_axes.iter().product();
        let mut weights = vec![0.0; total];
        // strides of the kept axes in the flat destination index
        for (flat, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let idx = self.unravel(flat);
            let mut out = 0;
            for (pos, &axis) in keep.iter().enumerate() {
                out = out * new_axes[pos] + idx[axis];
            }
            weights[out] += w;
        }
        DiscreteMeasure::from_unnormalized(new_axes, weights)
    }

    /// Product measure self ⊗ other.
    pub fn product(&self, other: &DiscreteMeasure) -> DiscreteMeasure {
        let mut axes = self.axes.clone();
        axes.extend(&other.axes);
        let mut weights = Vec::with_capacity(self.weights.len() * other.weights.len());
        for &a in &self.weights {
            for &b in &other.weights {
                weights.push(a * b);
            }
        }
        DiscreteMeasure { axes, weights }
    }

    /// Regroups coordinate axes into one merged axis per group, in group
    /// order. Groups must partition the axis set.
    pub fn group_axes(&self, groups: &[Vec<usize>]) -> Result<DiscreteMeasure> {
        let mut seen = vec![false; self.axes.len()];
        for g in groups {
            for &a in g {
                if a >= self.axes.len() || seen[a] {
                    return Err(Error::InvalidMeasure("groups must partition the axes".into()));
                }
                seen[a] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::InvalidMeasure("groups must cover all axes".into()));
        }
        let new_axes: Vec<usize> =
            groups.iter().map(|g| g.iter().map(|&a| self.axes[a]).product()).collect();
        let total: usize = new_axes.iter().product();
        let mut weights = vec![0.0; total];
        for (flat, &w) in self.weights.iter().enumerate() {
            let idx = self.unravel(flat);
            let mut out = 0;
            for (gi, g) in groups.iter().enumerate() {
                let mut local = 0;
                for &a in g {
                    local = local * self.axes[a] + idx[a];
                }
                out = out * new_axes[gi] + local;
            }
            weights[out] = w;
        }
        Ok(DiscreteMeasure { axes: new_axes, weights })
    }

    /// Expectation of a function of the multi-index.
    pub fn expect(&self, f: impl Fn(&[usize]) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(flat, w)| w * f(&self.unravel(flat)))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_marginal_recovers_factor() {
        let p = DiscreteMeasure::new(vec![2], vec![0.3, 0.7]).unwrap();
        let q = DiscreteMeasure::new(vec![3], vec![0.2, 0.5, 0.3]).unwrap();
        let joint = p.product(&q);
        let back = joint.marginalize(&[0]).unwrap();
        for (a, b) in back.weights.iter().zip(&p.weights) {
            assert!((a - b).abs() < 1e-12);
        }
        // keeping all axes is the identity
        let full = joint.marginalize(&[0, 1]).unwrap();
        for (a, b) in full.weights.iter().zip(&joint.weights) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ising_two_spin_marginal_by_enumeration() {
        // d=2 Ising joint: weights ∝ exp(βJ u1 u2 + βh(u1+u2)), spins ±1;
        // oracle by 4-state enumeration.
        let (beta, j, h) = (0.7, 1.3, 0.2);
        let spin = |s: usize| -> f64 { if s == 0 { -1.0 } else { 1.0 } };
        let mut w = Vec::new();
        for s1 in 0..2 {
            for s2 in 0..2 {
                let (u1, u2) = (spin(s1), spin(s2));
                w.push((beta * (j * u1 * u2 + h * (u1 + u2))).exp());
            }
        }
        let joint = DiscreteMeasure::from_unnormalized(vec![2, 2], w.clone()).unwrap();
        let marg = joint.marginalize(&[0]).unwrap();
        let z: f64 = w.iter().sum();
        let expect0 = (w[0] + w[1]) / z;
        assert!((marg.weights[0] - expect0).abs() < 1e-12);
    }

    #[test]
    fn group_axes_merges_indices() {
        // 2x3x2 tensor grouped as [[0,1],[2]]
        let total = 12;
        let weights: Vec<f64> = (0..total).map(|i| (i + 1) as f64 / 78.0).collect();
        let m = DiscreteMeasure::new(vec![2, 3, 2], weights).unwrap();
        let g = m.group_axes(&[vec![0, 1], vec![2]]).unwrap();
        assert_eq!(g.axes, vec![6, 2]);
        // entry (i,j,k) lands at merged ((i*3+j), k)
        let idx = m.ravel(&[1, 2, 0]);
        let gdx = g.ravel(&[5, 0]);
        assert_eq!(m.weights[idx], g.weights[gdx]);
    }

    #[test]
    fn cluster_spec_validation() {
        assert!(ClusterSpec::new(vec![vec![0], vec![1]], vec![vec![0], vec![1]]).is_ok());
        // empty cluster rejected
        assert!(ClusterSpec::new(vec![vec![0, 1], vec![]], vec![vec![0], vec![1]]).is_err());
        // duplicate coordinate rejected
        assert!(ClusterSpec::new(vec![vec![0], vec![0]], vec![vec![0], vec![1]]).is_err());
        // mismatched cluster counts rejected
        assert!(ClusterSpec::new(vec![vec![0, 1]], vec![vec![0], vec![1]]).is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(DiscreteMeasure::new(vec![2], vec![0.6, 0.6]).is_err());
        assert!(DiscreteMeasure::new(vec![2], vec![-0.1, 1.1]).is_err());
        assert!(DiscreteMeasure::new(vec![2], vec![0.5]).is_err());
    }
}
