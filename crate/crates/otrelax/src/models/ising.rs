//! 1-D Ising chains: explicit density tables, exact cluster marginals via
//! transfer matrices, cluster partitions of consecutive spins, and an exact
//! chain sampler (forward filter, backward sample).

use crate::error::{Error, Result};
use crate::measure::{ClusterSpec, DiscreteMeasure};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameters of the chain measure ∝ exp[β(J Σ uᵢuᵢ₊₁ + h Σ uₖ)], spins ±1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub j: f64,
    pub h: f64,
    pub beta: f64,
    pub d: usize,
}

impl IsingParams {
    pub fn new(j: f64, h: f64, beta: f64, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("chain length d must be at least 1".into()));
        }
        Ok(Self { j, h, beta, d })
    }
}

#[inline]
fn spin(state: usize) -> f64 {
    if state == 0 {
        -1.0
    } else {
        1.0
    }
}

/// The full 2^d probability table (axes all of size 2; state 0 is spin −1).
/// Refuses d > 20, where the table stops being storable.
pub fn ising_measure(p: &IsingParams) -> Result<DiscreteMeasure> {
    if p.d > 20 {
        return Err(Error::InvalidConfig(format!(
            "full Ising table limited to d <= 20, got {}",
            p.d
        )));
    }
    let d = p.d;
    let total = 1usize << d;
    let mut weights = Vec::with_capacity(total);
    // log-weights shifted by the maximum for a stable exponential
    let mut logs = Vec::with_capacity(total);
    let mut max_log = f64::NEG_INFINITY;
    for flat in 0..total {
        // axis i has stride 2^(d-1-i)
        let u = |i: usize| spin((flat >> (d - 1 - i)) & 1);
        let mut energy = 0.0;
        for i in 0..d - 1 {
            energy += p.j * u(i) * u(i + 1);
        }
        for i in 0..d {
            energy += p.h * u(i);
        }
        let lw = p.beta * energy;
        max_log = max_log.max(lw);
        logs.push(lw);
    }
    for lw in logs {
        weights.push((lw - max_log).exp());
    }
    DiscreteMeasure::from_unnormalized(vec![2; d], weights)
}

/// Clusters of ω consecutive spins; the last cluster may be smaller.
pub fn ising_clusters(d: usize, omega: usize) -> Result<ClusterSpec> {
    if omega == 0 || omega > d {
        return Err(Error::InvalidConfig(format!("omega must lie in 1..={d}")));
    }
    let k = d.div_ceil(omega);
    let mut clusters = Vec::with_capacity(k);
    for c in 0..k {
        let lo = c * omega;
        let hi = ((c + 1) * omega).min(d);
        clusters.push((lo..hi).collect::<Vec<usize>>());
    }
    ClusterSpec::new(clusters.clone(), clusters)
}

/// Intra-cluster weight tables and inter-cluster transfer matrices for a
/// consecutive-spin cluster partition.
struct ClusterChain {
    /// node[k][s]: intra-cluster Boltzmann weight of local state s
    node: Vec<Vec<f64>>,
    /// trans[k][s][t]: coupling between cluster k (state s) and k+1 (state t)
    trans: Vec<Vec<Vec<f64>>>,
    sizes: Vec<usize>,
}

fn consecutive_starts(spec: &ClusterSpec) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(spec.k());
    let mut expect = 0usize;
    for c in &spec.x_clusters {
        for (offset, &coord) in c.iter().enumerate() {
            if coord != expect + offset {
                return Err(Error::InvalidClusterSpec(
                    "transfer-matrix marginals need consecutive-spin clusters".into(),
                ));
            }
        }
        out.push((expect, c.len()));
        expect += c.len();
    }
    Ok(out)
}

impl ClusterChain {
    fn build(p: &IsingParams, spec: &ClusterSpec) -> Result<Self> {
        let ranges = consecutive_starts(spec)?;
        if ranges.iter().map(|r| r.1).sum::<usize>() != p.d {
            return Err(Error::DimensionMismatch("cluster spec does not cover the chain".into()));
        }
        let kk = ranges.len();
        let mut node = Vec::with_capacity(kk);
        let mut sizes = Vec::with_capacity(kk);
        for &(_, len) in &ranges {
            let states = 1usize << len;
            sizes.push(states);
            let mut w = Vec::with_capacity(states);
            for s in 0..states {
                // bit (len-1-offset) holds the spin at (start+offset)
                let u = |offset: usize| spin((s >> (len - 1 - offset)) & 1);
                let mut energy = 0.0;
                for o in 0..len - 1 {
                    energy += p.j * u(o) * u(o + 1);
                }
                for o in 0..len {
                    energy += p.h * u(o);
                }
                w.push((p.beta * energy).exp());
            }
            node.push(w);
        }
        let mut trans = Vec::with_capacity(kk.saturating_sub(1));
        for k in 0..kk.saturating_sub(1) {
            let (_, len_k) = ranges[k];
            let (_, len_n) = ranges[k + 1];
            let mut t = vec![vec![0.0; 1 << len_n]; 1 << len_k];
            for (s, row) in t.iter_mut().enumerate() {
                let u_last = spin(s & 1);
                let _ = len_k;
                for (snext, v) in row.iter_mut().enumerate() {
                    let u_first = spin((snext >> (len_n - 1)) & 1);
                    *v = (p.beta * p.j * u_last * u_first).exp();
                }
            }
            trans.push(t);
        }
        Ok(Self { node, trans, sizes })
    }

    /// Forward/backward messages, each normalized to unit sum; returns the
    /// log normalizer log Z as well.
    fn messages(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, f64) {
        let kk = self.node.len();
        let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(kk);
        let mut log_z = 0.0f64;
        let mut cur = self.node[0].clone();
        let s: f64 = cur.iter().sum();
        log_z += s.ln();
        cur.iter_mut().for_each(|v| *v /= s);
        alpha.push(cur);
        for k in 1..kk {
            let prev = &alpha[k - 1];
            let mut nxt = vec![0.0; self.sizes[k]];
            for (s_prev, &a) in prev.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &self.trans[k - 1][s_prev];
                for (t, v) in nxt.iter_mut().enumerate() {
                    *v += a * row[t] * self.node[k][t];
                }
            }
            let s: f64 = nxt.iter().sum();
            log_z += s.ln();
            nxt.iter_mut().for_each(|v| *v /= s);
            alpha.push(nxt);
        }
        let mut beta: Vec<Vec<f64>> = vec![Vec::new(); kk];
        beta[kk - 1] = vec![1.0 / self.sizes[kk - 1] as f64; self.sizes[kk - 1]];
        for k in (0..kk - 1).rev() {
            let mut cur = vec![0.0; self.sizes[k]];
            for (s, v) in cur.iter_mut().enumerate() {
                let row = &self.trans[k][s];
                *v = row
                    .iter()
                    .zip(&self.node[k + 1])
                    .zip(&beta[k + 1])
                    .map(|((t, n), b)| t * n * b)
                    .sum();
            }
            let s: f64 = cur.iter().sum();
            cur.iter_mut().for_each(|v| *v /= s);
            beta[k] = cur;
        }
        (alpha, beta, log_z)
    }
}

/// Exact cluster marginals by transfer matrices: the one-cluster marginals
/// for every cluster and the two-cluster marginals for the requested pairs
/// (any i < j, adjacent or not). Also returns log Z.
pub struct ClusterMarginals {
    pub singles: Vec<DiscreteMeasure>,
    pub pairs: Vec<((usize, usize), DiscreteMeasure)>,
    pub log_z: f64,
}

pub fn ising_cluster_marginals(
    p: &IsingParams,
    spec: &ClusterSpec,
    pairs: &[(usize, usize)],
) -> Result<ClusterMarginals> {
    let chain = ClusterChain::build(p, spec)?;
    let (alpha, beta, log_z) = chain.messages();
    let kk = chain.node.len();
    let mut singles = Vec::with_capacity(kk);
    for k in 0..kk {
        let w: Vec<f64> = alpha[k].iter().zip(&beta[k]).map(|(a, b)| a * b).collect();
        singles.push(DiscreteMeasure::from_unnormalized(vec![chain.sizes[k]], w)?);
    }
    let mut out_pairs = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i >= j || j >= kk {
            return Err(Error::InvalidConfig(format!("bad cluster pair ({i},{j})")));
        }
        // M(s_i, s_j) = Π_{k=i..j-1} trans[k]·diag(node[k+1]) with the
        // backward message folded in at j.
        let mut m: Vec<Vec<f64>> = (0..chain.sizes[i])
            .map(|s| {
                let mut row = vec![0.0; chain.sizes[i]];
                row[s] = 1.0;
                row
            })
            .collect();
        for k in i..j {
            let mut next: Vec<Vec<f64>> = vec![vec![0.0; chain.sizes[k + 1]]; chain.sizes[i]];
            for (s0, row) in m.iter().enumerate() {
                for (s, &v) in row.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let t = &chain.trans[k][s];
                    for (snext, out) in next[s0].iter_mut().enumerate() {
                        *out += v * t[snext] * chain.node[k + 1][snext];
                    }
                }
            }
            // renormalize rows jointly to keep the products representable
            let mx = next.iter().flatten().cloned().fold(0.0f64, f64::max);
            if mx > 0.0 {
                next.iter_mut().flatten().for_each(|v| *v /= mx);
            }
            m = next;
        }
        let mut w = Vec::with_capacity(chain.sizes[i] * chain.sizes[j]);
        for (s_i, row) in m.iter().enumerate() {
            for (s_j, &v) in row.iter().enumerate() {
                w.push(alpha[i][s_i] * v * beta[j][s_j]);
            }
        }
        out_pairs.push((
            (i, j),
            DiscreteMeasure::from_unnormalized(vec![chain.sizes[i], chain.sizes[j]], w)?,
        ));
    }
    Ok(ClusterMarginals { singles, pairs: out_pairs, log_z })
}

/// Partition function of the explicit table route, for cross-checks.
pub fn ising_log_z(p: &IsingParams) -> Result<f64> {
    let spec = ising_clusters(p.d, 1)?;
    Ok(ising_cluster_marginals(p, &spec, &[])?.log_z)
}

/// Exact chain sampler: forward filter, backward sample at spin level.
/// Returns 0/1 state rows (state 1 is spin +1).
pub fn ising_sampler(p: &IsingParams, n_samples: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    let spec = ising_clusters(p.d, 1)?;
    let chain = ClusterChain::build(p, &spec)?;
    let (_, beta, _) = chain.messages();
    let d = p.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut row = Vec::with_capacity(d);
        let w0: Vec<f64> =
            chain.node[0].iter().zip(&beta[0]).map(|(n, b)| n * b).collect();
        let mut state = sample_index(&w0, &mut rng);
        row.push(state as u8);
        for k in 1..d {
            let w: Vec<f64> = (0..2)
                .map(|t| chain.trans[k - 1][state][t] * chain.node[k][t] * beta[k][t])
                .collect();
            state = sample_index(&w, &mut rng);
            row.push(state as u8);
        }
        out.push(row);
    }
    Ok(out)
}

fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen_range(0.0..1.0) * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}
