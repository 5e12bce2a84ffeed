//! Discretized 1-D Ginzburg–Landau chain: grid density
//! ∝ exp[−β Σᵢ ((λ/2)((yᵢ−yᵢ₋₁)/h)² + (1/(4λ))(1−yᵢ²)²)] with pinned
//! boundary values y₀ = y_{d+1} = 0, step h = 1/(1+d), on a uniform grid in
//! [−L, L]. The nearest-neighbor structure makes forward-filter /
//! backward-sample dynamic programming exact for the discretized model.

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlParams {
    pub beta: f64,
    pub lambda: f64,
    /// Box half-width L; coordinates live in [−L, L].
    pub box_l: f64,
    pub d: usize,
    /// Grid points per coordinate.
    pub grid_m: usize,
}

impl GlParams {
    pub fn new(beta: f64, lambda: f64, box_l: f64, d: usize, grid_m: usize) -> Result<Self> {
        if beta <= 0.0 || lambda <= 0.0 || box_l <= 0.0 {
            return Err(Error::InvalidConfig("beta, lambda, L must be positive".into()));
        }
        if grid_m < 16 {
            return Err(Error::InvalidConfig("grid_m must be at least 16".into()));
        }
        if d == 0 {
            return Err(Error::InvalidConfig("d must be at least 1".into()));
        }
        Ok(Self { beta, lambda, box_l, d, grid_m })
    }

    /// Cell-center grid values.
    pub fn grid(&self) -> Vec<f64> {
        let m = self.grid_m as f64;
        (0..self.grid_m)
            .map(|t| -self.box_l + (2.0 * self.box_l) * (t as f64 + 0.5) / m)
            .collect()
    }

    pub fn step(&self) -> f64 {
        1.0 / (1.0 + self.d as f64)
    }
}

struct GlChain {
    grid: Vec<f64>,
    /// node[t]: on-site quartic factor exp(−β (1−g²)²/(4λ))
    node: Vec<f64>,
    /// kernel[t][t']: kinetic factor exp(−β λ (g−g')²/(2h²))
    kernel: Vec<Vec<f64>>,
    /// boundary[t]: kinetic factor against the pinned value 0
    boundary: Vec<f64>,
    d: usize,
}

impl GlChain {
    fn build(p: &GlParams) -> Self {
        let grid = p.grid();
        let h = p.step();
        let kin = p.beta * p.lambda / (2.0 * h * h);
        let quart = p.beta / (4.0 * p.lambda);
        let node: Vec<f64> =
            grid.iter().map(|g| (-quart * (1.0 - g * g) * (1.0 - g * g)).exp()).collect();
        let kernel: Vec<Vec<f64>> = grid
            .iter()
            .map(|a| grid.iter().map(|b| (-kin * (a - b) * (a - b)).exp()).collect())
            .collect();
        let boundary: Vec<f64> = grid.iter().map(|g| (-kin * g * g).exp()).collect();
        Self { grid, node, kernel, boundary, d: p.d }
    }

    /// Normalized forward and backward messages.
    fn messages(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let m = self.grid.len();
        let d = self.d;
        let mut alpha = Vec::with_capacity(d);
        let mut cur: Vec<f64> =
            (0..m).map(|t| self.boundary[t] * self.node[t]).collect();
        normalize(&mut cur);
        alpha.push(cur);
        for i in 1..d {
            let prev = &alpha[i - 1];
            let mut nxt = vec![0.0; m];
            for (s, &a) in prev.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &self.kernel[s];
                for (t, v) in nxt.iter_mut().enumerate() {
                    *v += a * row[t] * self.node[t];
                }
            }
            normalize(&mut nxt);
            alpha.push(nxt);
        }
        let mut beta_msgs: Vec<Vec<f64>> = vec![Vec::new(); d];
        // final coordinate couples back to the pinned boundary value
        let mut cur: Vec<f64> = self.boundary.clone();
        normalize(&mut cur);
        beta_msgs[d - 1] = cur;
        for i in (0..d - 1).rev() {
            let nxt = &beta_msgs[i + 1];
            let mut cur = vec![0.0; m];
            for (s, v) in cur.iter_mut().enumerate() {
                let row = &self.kernel[s];
                *v = row
                    .iter()
                    .zip(&self.node)
                    .zip(nxt)
                    .map(|((k, n), b)| k * n * b)
                    .sum();
            }
            normalize(&mut cur);
            beta_msgs[i] = cur;
        }
        (alpha, beta_msgs)
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Exact pair marginal of coordinates (i, j), i < j, on the grid.
pub fn gl_pair_marginal(p: &GlParams, i: usize, j: usize) -> Result<DiscreteMeasure> {
    if i >= j || j >= p.d {
        return Err(Error::InvalidConfig(format!("bad coordinate pair ({i},{j})")));
    }
    let chain = GlChain::build(p);
    let (alpha, beta) = chain.messages();
    let m = chain.grid.len();
    // M(s_i, s_j): product of kernels and node factors strictly between
    let mut mat: Vec<Vec<f64>> = (0..m)
        .map(|s| {
            let mut row = vec![0.0; m];
            row[s] = 1.0;
            row
        })
        .collect();
    for _k in i..j {
        let mut next = vec![vec![0.0; m]; m];
        for (s0, row) in mat.iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let ker = &chain.kernel[s];
                for (t, out) in next[s0].iter_mut().enumerate() {
                    *out += v * ker[t] * chain.node[t];
                }
            }
        }
        let mx = next.iter().flatten().cloned().fold(0.0f64, f64::max);
        if mx > 0.0 {
            next.iter_mut().flatten().for_each(|v| *v /= mx);
        }
        mat = next;
    }
    let mut w = Vec::with_capacity(m * m);
    for (si, row) in mat.iter().enumerate() {
        for (sj, &v) in row.iter().enumerate() {
            w.push(alpha[i][si] * v * beta[j][sj]);
        }
    }
    DiscreteMeasure::from_unnormalized(vec![m, m], w)
}

/// Exact single-coordinate marginal on the grid.
pub fn gl_single_marginal(p: &GlParams, i: usize) -> Result<DiscreteMeasure> {
    if i >= p.d {
        return Err(Error::InvalidConfig(format!("coordinate {i} out of range")));
    }
    let chain = GlChain::build(p);
    let (alpha, beta) = chain.messages();
    let w: Vec<f64> = alpha[i].iter().zip(&beta[i]).map(|(a, b)| a * b).collect();
    DiscreteMeasure::from_unnormalized(vec![chain.grid.len()], w)
}

/// Grid second moment E[y_i y_j] of the exact pair marginal.
pub fn gl_pair_second_moment(p: &GlParams, i: usize, j: usize) -> Result<f64> {
    let pm = gl_pair_marginal(p, i, j)?;
    let grid = p.grid();
    Ok(pm.expect(|idx| grid[idx[0]] * grid[idx[1]]))
}

/// Exact sampler of the discretized chain; one row of grid values per
/// sample.
pub fn gl_sampler(p: &GlParams, n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let chain = GlChain::build(p);
    let (_, beta) = chain.messages();
    let m = chain.grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut row = Vec::with_capacity(p.d);
        let w0: Vec<f64> = (0..m)
            .map(|t| chain.boundary[t] * chain.node[t] * beta[0][t])
            .collect();
        let mut state = sample_index(&w0, &mut rng);
        row.push(chain.grid[state]);
        for k in 1..p.d {
            let w: Vec<f64> = (0..m)
                .map(|t| chain.kernel[state][t] * chain.node[t] * beta[k][t])
                .collect();
            state = sample_index(&w, &mut rng);
            row.push(chain.grid[state]);
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
