//! First-order operator-splitting solver for block conic programs.
//!
//! The iteration alternates a projection onto the affine subspace
//! `{x : Ax = b}` (through a cached LDLᵀ factorization of the
//! normal-equations matrix `AAᵀ`) with a projection onto the cone product,
//! using over-relaxation 1.5 and diagonal rescaling of the constraints.
//! Dual multipliers fall out of the affine projection and the cone-projection
//! residual, which is what the transport-map extraction consumes.

use super::ldl::NormalFactor;
use super::polish::polish;
use super::{BlockValue, Cone, ConicProgram, ConicSolution, Status};
use crate::error::{Error, Result};
use crate::matfun::{self, SymMatrix};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const DENSE_FACTOR_LIMIT: usize = 900;
const CHECK_EVERY: usize = 25;
const RHO_ADAPT_EVERY: usize = 50;
const RHO_ADAPT_UNTIL: usize = 20_000;
const POLISH_EVERY: usize = 250;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Target for all three relative residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Reserved for reproducibility bookkeeping; the iteration itself is
    /// deterministic.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 100_000, seed: 0 }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

struct Csr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: usize, cols: usize, entries: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in entries {
            for (j, v) in row {
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { rows, cols, row_ptr, col_idx, vals }
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for i in 0..self.rows {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[idx] * x[self.col_idx[idx]];
            }
            out[i] = acc;
        }
    }

    fn matvec_t(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        out.fill(0.0);
        for i in 0..self.rows {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[idx]] += self.vals[idx] * yi;
            }
        }
    }
}

/// Flattened view: blocks concatenated in scaled-vectorization (svec) form,
/// where PSD off-diagonal entries carry a factor √2 so that Euclidean inner
/// products agree with the matrix Frobenius products.
struct Layout {
    offsets: Vec<usize>,
    cones: Vec<Cone>,
    total: usize,
}

impl Layout {
    fn new(prog: &ConicProgram) -> Self {
        let mut offsets = Vec::with_capacity(prog.blocks.len());
        let mut total = 0;
        let mut cones = Vec::with_capacity(prog.blocks.len());
        for b in &prog.blocks {
            offsets.push(total);
            total += b.cone.entry_count();
            cones.push(b.cone);
        }
        Self { offsets, cones, total }
    }

    /// Flat svec coordinate and functional weight of one entry address.
    fn locate(&self, block: usize, entry: super::Entry) -> (usize, f64) {
        match entry.canonical() {
            super::Entry::Mat(i, j) => {
                // entry (i,j), i <= j: packed lower-triangle index of (j,i)
                let packed = j * (j + 1) / 2 + i;
                let w = if i == j { 1.0 } else { 1.0 / SQRT2 };
                (self.offsets[block] + packed, w)
            }
            super::Entry::Vec(k) => (self.offsets[block] + k, 1.0),
        }
    }

    fn to_blocks(&self, x: &[f64], scale: f64) -> Vec<BlockValue> {
        let mut out = Vec::with_capacity(self.cones.len());
        for (b, cone) in self.cones.iter().enumerate() {
            let off = self.offsets[b];
            match *cone {
                Cone::Psd(d) => {
                    let mut m = SymMatrix::zeros(d);
                    let mut idx = off;
                    for i in 0..d {
                        for j in 0..=i {
                            let v = x[idx] * scale;
                            m.set(i, j, if i == j { v } else { v / SQRT2 });
                            idx += 1;
                        }
                    }
                    out.push(BlockValue::Mat(m));
                }
                Cone::Nonneg(n) | Cone::Free(n) => {
                    out.push(BlockValue::Vec(x[off..off + n].iter().map(|v| v * scale).collect()));
                }
            }
        }
        out
    }
}

/// Projects each block segment of `x` onto its cone, in place.
fn project_cones(layout: &Layout, x: &mut [f64]) {
    for (b, cone) in layout.cones.iter().enumerate() {
        let off = layout.offsets[b];
        match *cone {
            Cone::Free(_) => {}
            Cone::Nonneg(n) => {
                for v in &mut x[off..off + n] {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Cone::Psd(d) => {
                if d == 1 {
                    if x[off] < 0.0 {
                        x[off] = 0.0;
                    }
                    continue;
                }
                let mut m = SymMatrix::zeros(d);
                let mut idx = off;
                for i in 0..d {
                    for j in 0..=i {
                        m.set(i, j, if i == j { x[idx] } else { x[idx] / SQRT2 });
                        idx += 1;
                    }
                }
                let p = matfun::psd_project(&m);
                let mut idx = off;
                for i in 0..d {
                    for j in 0..=i {
                        x[idx] = if i == j { p.get(i, j) } else { p.get(i, j) * SQRT2 };
                        idx += 1;
                    }
                }
            }
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves a block conic program.
///
/// Deterministic given (program, options). `status == Optimal` guarantees
/// that the returned residuals, recomputable through
/// [`ConicProgram::residuals_of`], are all at most `opts.tol`.
pub fn solve(prog: &ConicProgram, opts: &SolveOptions) -> Result<ConicSolution> {
    if !(1e-12..=1e-2).contains(&opts.tol) {
        return Err(Error::InvalidProgram(format!("tol {} outside [1e-12, 1e-2]", opts.tol)));
    }
    let mut prog = prog.clone();
    prog.canonicalize()?;
    let layout = Layout::new(&prog);
    let n = layout.total;
    let m = prog.constraints.len();

    // Flatten objective and constraints.
    let mut c = vec![0.0; n];
    for coeff in &prog.objective {
        let (pos, w) = layout.locate(coeff.block, coeff.entry);
        c[pos] += coeff.value * w;
    }
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    for cons in &prog.constraints {
        let mut row: Vec<(usize, f64)> = cons
            .coeffs
            .iter()
            .map(|coeff| {
                let (pos, w) = layout.locate(coeff.block, coeff.entry);
                (pos, coeff.value * w)
            })
            .collect();
        row.sort_unstable_by_key(|e| e.0);
        rows.push(row);
        b.push(cons.rhs);
    }

    // Row equilibration, then norm scaling of b and c.
    let mut row_scale = vec![1.0; m];
    for (i, row) in rows.iter_mut().enumerate() {
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            let d = 1.0 / norm;
            row_scale[i] = d;
            for (_, v) in row.iter_mut() {
                *v *= d;
            }
        } else if b[i].abs() > 1e-10 {
            // Zero row with nonzero right-hand side: trivially infeasible.
            return Ok(infeasible_solution(&prog, &layout, m));
        }
    }
    let mut b_scaled: Vec<f64> = b.iter().zip(&row_scale).map(|(bi, d)| bi * d).collect();
    let sigma_b = norm2(&b_scaled).max(1.0);
    for v in &mut b_scaled {
        *v /= sigma_b;
    }
    let sigma_c = norm2(&c).max(1.0);
    let c_scaled: Vec<f64> = c.iter().map(|v| v / sigma_c).collect();

    let a = Csr::from_rows(m, n, rows);

    // Normal-equations matrix AAᵀ in lower-triplet form via column lists.
    let factor = if m > 0 {
        let mut col_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..m {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                col_rows[a.col_idx[idx]].push((i, a.vals[idx]));
            }
        }
        let mut gram: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
        for col in &col_rows {
            for (ai, &(i, vi)) in col.iter().enumerate() {
                for &(j, vj) in &col[ai..] {
                    let key = if i >= j { (i, j) } else { (j, i) };
                    *gram.entry(key).or_insert(0.0) += vi * vj;
                }
            }
        }
        let triplets: Vec<(usize, usize, f64)> =
            gram.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        Some(NormalFactor::factor(m, &triplets, DENSE_FACTOR_LIMIT))
    } else {
        None
    };

    // Affine-consistency check: an inconsistent equality system is
    // infeasible regardless of the cones.
    if let Some(f) = &factor {
        let lambda = f.solve(&b_scaled);
        let mut x0 = vec![0.0; n];
        a.matvec_t(&lambda, &mut x0);
        let mut ax = vec![0.0; m];
        a.matvec(&x0, &mut ax);
        let mut err = 0.0f64;
        for i in 0..m {
            err += (ax[i] - b_scaled[i]).powi(2);
        }
        if err.sqrt() / (1.0 + norm2(&b_scaled)) > 1e-6 {
            return Ok(infeasible_solution(&prog, &layout, m));
        }
    }

    // Splitting state: (z, u) is the iterate the fixed-point map is applied
    // to; after an acceleration step it need not be cone-feasible, so all
    // reported candidates come from the post-projection quantities instead.
    let alpha = 1.5;
    let mut rho = std::env::var("OTRELAX_RHO")
        .ok()
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap_or(1.0);
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut z_post = vec![0.0; n];
    let mut u_post = vec![0.0; n];
    let mut lambda = vec![0.0; m];
    let mut w = vec![0.0; n];
    let mut aw = vec![0.0; m];
    let mut atl = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut rp_norm;
    let mut rd_norm;

    let mut best: Option<(f64, ConicSolution)> = None;
    let mut y_prev: Vec<f64> = vec![0.0; m];
    let mut iterations = 0;

    // Safeguarded type-II Anderson acceleration over the stacked (z, u).
    let mut aa = Anderson::new(2 * n, AA_MEMORY);
    let mut best_gnorm = f64::INFINITY;
    let mut best_state: Option<(Vec<f64>, Vec<f64>)> = None;

    let unscale_candidate = |z: &[f64],
                             lambda: &[f64],
                             u: &[f64],
                             rho: f64,
                             iterations: usize|
     -> ConicSolution {
        let primal = layout.to_blocks(z, sigma_b);
        // y = -ρ·σ_c·D·λ maps the scaled multiplier back to the original
        // constraint rows.
        let dual: Vec<f64> =
            lambda.iter().zip(&row_scale).map(|(l, d)| -rho * sigma_c * l * d).collect();
        let slack_flat: Vec<f64> = u.iter().map(|ui| -rho * sigma_c * ui).collect();
        let slack = layout.to_blocks(&slack_flat, 1.0);
        let residuals = prog.residuals_of(&primal, &dual, &slack);
        let objective = prog.objective_value(&primal);
        let dual_objective = prog.dual_objective(&dual);
        ConicSolution {
            status: Status::MaxIter,
            primal,
            dual,
            slack,
            residuals,
            objective,
            dual_objective,
            iterations,
        }
    };

    loop {
        // x-update: projection onto {x : Ax = b} shifted by the objective.
        for i in 0..n {
            w[i] = z[i] - u[i] - c_scaled[i] / rho;
        }
        if let Some(f) = &factor {
            a.matvec(&w, &mut aw);
            for i in 0..m {
                aw[i] -= b_scaled[i];
            }
            lambda = f.solve(&aw);
            a.matvec_t(&lambda, &mut atl);
            for i in 0..n {
                x[i] = w[i] - atl[i];
            }
        } else {
            x.copy_from_slice(&w);
        }

        // Over-relaxed cone projection.
        let mut rd_acc = 0.0;
        let mut rp_acc = 0.0;
        for i in 0..n {
            let xhat = alpha * x[i] + (1.0 - alpha) * z[i];
            w[i] = xhat + u[i]; // reuse as projection input
            rp_acc += (x[i] - z[i]) * (x[i] - z[i]);
        }
        project_cones(&layout, &mut w);
        let mut gnorm2 = 0.0;
        for i in 0..n {
            let z_new = w[i];
            rd_acc += (z_new - z[i]) * (z_new - z[i]);
            let u_new = (alpha * x[i] + (1.0 - alpha) * z[i]) + u[i] - z_new;
            gnorm2 += (z_new - z[i]) * (z_new - z[i]) + (u_new - u[i]) * (u_new - u[i]);
            z_post[i] = z_new;
            u_post[i] = u_new;
        }
        let gnorm = gnorm2.sqrt();
        rp_norm = rp_acc.sqrt();
        rd_norm = rho * rd_acc.sqrt();
        iterations += 1;

        let done_budget = iterations >= opts.max_iter;
        if iterations % CHECK_EVERY == 0 || done_budget {
            let cand = unscale_candidate(&z_post, &lambda, &u_post, rho, iterations);
            let score = cand.residuals.max();
            if std::env::var("OTRELAX_SOLVER_TRACE").is_ok() && iterations % 2000 == 0 {
                eprintln!(
                    "iter {iterations} rho {rho:.2e} rp {:.2e} rd {:.2e} gap {:.2e} obj {:.8e}",
                    cand.residuals.primal_infeasibility,
                    cand.residuals.dual_infeasibility,
                    cand.residuals.duality_gap,
                    cand.objective
                );
            }
            if score <= opts.tol {
                let mut cand = cand;
                cand.status = Status::Optimal;
                return Ok(cand);
            }
            if best.as_ref().map_or(true, |(s, _)| score < *s) {
                best = Some((score, cand));
            }
            // Face-restricted refinement once the iterate is close enough
            // for the optimal face to be readable.
            let near = score <= (1e5 * opts.tol).clamp(1e-4, 1e-2);
            if (near && iterations % POLISH_EVERY == 0) || done_budget {
                let primal = layout.to_blocks(&z_post, sigma_b);
                for threshold in [1e-3, 1e-5] {
                    let Some(p) = polish(&prog, &primal, threshold) else {
                        if std::env::var("OTRELAX_SOLVER_TRACE").is_ok() {
                            eprintln!("polish skipped at iter {iterations} thr {threshold:.0e}");
                        }
                        continue;
                    };
                    let residuals = prog.residuals_of(&p.primal, &p.dual, &p.slack);
                    let pscore = residuals.max();
                    if std::env::var("OTRELAX_SOLVER_TRACE").is_ok() {
                        eprintln!(
                            "polish iter {iterations} thr {threshold:.0e}: rp {:.2e} (cons {:.2e} cone {:.2e}) rd {:.2e} gap {:.2e}",
                            residuals.primal_infeasibility,
                            prog.max_constraint_violation(&p.primal),
                            prog.cone_violation(&p.primal),
                            residuals.dual_infeasibility,
                            residuals.duality_gap
                        );
                    }
                    if pscore <= best.as_ref().map_or(f64::INFINITY, |(s, _)| *s) {
                        let objective = prog.objective_value(&p.primal);
                        let dual_objective = prog.dual_objective(&p.dual);
                        let sol = ConicSolution {
                            status: if pscore <= opts.tol {
                                Status::Optimal
                            } else {
                                Status::MaxIter
                            },
                            primal: p.primal,
                            dual: p.dual,
                            slack: p.slack,
                            residuals,
                            objective,
                            dual_objective,
                            iterations,
                        };
                        if pscore <= opts.tol {
                            return Ok(sol);
                        }
                        best = Some((pscore, sol));
                    }
                }
            }
        }

        // Primal-infeasibility certificate check: a diverging dual ray y
        // with -Aᵀy in the dual cone and ⟨b, y⟩ > 0 proves infeasibility.
        if m > 0 && iterations % 200 == 0 {
            let y_now: Vec<f64> =
                lambda.iter().zip(&row_scale).map(|(l, d)| -rho * sigma_c * l * d).collect();
            let dir: Vec<f64> = y_now.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
            let dn = norm2(&dir);
            if dn > 1e-4 * (1.0 + norm2(&y_now)) {
                let dir: Vec<f64> = dir.iter().map(|v| v / dn).collect();
                // v = -Aᵀ(D·dir) in original variable space
                let scaled_dir: Vec<f64> =
                    dir.iter().zip(&row_scale).map(|(v, d)| v * d).collect();
                let mut v = vec![0.0; n];
                a.matvec_t(&scaled_dir, &mut v);
                for vi in &mut v {
                    *vi = -*vi;
                }
                let mut proj = v.clone();
                project_cones(&layout, &mut proj);
                let dist: f64 = v
                    .iter()
                    .zip(&proj)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let b_dir: f64 = b.iter().zip(&dir).map(|(bi, yi)| bi * yi).sum();
                if dist <= 1e-9 * (1.0 + norm2(&v)) && b_dir > 1e-7 * (1.0 + norm2(&b)) {
                    return Ok(infeasible_solution(&prog, &layout, m));
                }
            }
            y_prev = y_now;
        }

        if done_budget {
            let (_, sol) = best.unwrap_or_else(|| {
                (f64::INFINITY, unscale_candidate(&z_post, &lambda, &u_post, rho, iterations))
            });
            return Ok(sol);
        }

        // Safeguard: if an accelerated trajectory degrades the fixed-point
        // residual far beyond the best plain value, restart from the best
        // post-projection state.
        if gnorm.is_finite() && gnorm <= 10.0 * best_gnorm {
            if gnorm < best_gnorm {
                best_gnorm = gnorm;
                best_state = Some((z_post.clone(), u_post.clone()));
            }
            // Record (s, g) and propose the next state.
            aa.push(&z, &u, &z_post, &u_post);
            if !aa.propose(&z_post, &u_post, &mut z, &mut u) {
                z.copy_from_slice(&z_post);
                u.copy_from_slice(&u_post);
            }
        } else {
            let (bz, bu) = best_state.clone().unwrap_or((z_post.clone(), u_post.clone()));
            z = bz;
            u = bu;
            aa.clear();
        }

        // Residual balancing keeps the splitting well conditioned.
        if iterations % RHO_ADAPT_EVERY == 0 && iterations <= RHO_ADAPT_UNTIL {
            let mut changed = false;
            if rp_norm > 10.0 * rd_norm && rho < 1e8 {
                rho *= 2.0;
                for ui in u.iter_mut().chain(u_post.iter_mut()) {
                    *ui *= 0.5;
                }
                changed = true;
            } else if rd_norm > 10.0 * rp_norm && rho > 1e-8 {
                rho *= 0.5;
                for ui in u.iter_mut().chain(u_post.iter_mut()) {
                    *ui *= 2.0;
                }
                changed = true;
            }
            if changed {
                // the fixed-point map changed: stale history is invalid
                aa.clear();
                best_gnorm = f64::INFINITY;
                best_state = None;
            }
        }
    }
}

const AA_MEMORY: usize = 10;

/// Type-II Anderson acceleration over a fixed-point map s ↦ G(s), with the
/// iterate stacked as s = [z; u]. `push` records the latest (s, G(s)−s)
/// pair; `propose` writes the extrapolated next state.
struct Anderson {
    dim: usize,
    memory: usize,
    prev_s: Option<Vec<f64>>,
    prev_g: Option<Vec<f64>>,
    ds: std::collections::VecDeque<Vec<f64>>,
    dg: std::collections::VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(dim: usize, memory: usize) -> Self {
        Self {
            dim,
            memory,
            prev_s: None,
            prev_g: None,
            ds: std::collections::VecDeque::new(),
            dg: std::collections::VecDeque::new(),
        }
    }

    fn clear(&mut self) {
        self.prev_s = None;
        self.prev_g = None;
        self.ds.clear();
        self.dg.clear();
    }

    fn push(&mut self, z: &[f64], u: &[f64], z_post: &[f64], u_post: &[f64]) {
        let n = z.len();
        let mut s = Vec::with_capacity(self.dim);
        s.extend_from_slice(z);
        s.extend_from_slice(u);
        let mut g = Vec::with_capacity(self.dim);
        for i in 0..n {
            g.push(z_post[i] - z[i]);
        }
        for i in 0..n {
            g.push(u_post[i] - u[i]);
        }
        if let (Some(ps), Some(pg)) = (&self.prev_s, &self.prev_g) {
            let ds: Vec<f64> = s.iter().zip(ps).map(|(a, b)| a - b).collect();
            let dg: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            if self.ds.len() == self.memory {
                self.ds.pop_front();
                self.dg.pop_front();
            }
            self.ds.push_back(ds);
            self.dg.push_back(dg);
        }
        self.prev_s = Some(s);
        self.prev_g = Some(g);
    }

    /// Solves the window least-squares problem and writes the accelerated
    /// state; returns false when no history is available or the solve is
    /// unusable (caller then takes the plain step).
    fn propose(&self, z_post: &[f64], u_post: &[f64], z: &mut [f64], u: &mut [f64]) -> bool {
        let k = self.ds.len();
        if k == 0 {
            return false;
        }
        let g = match &self.prev_g {
            Some(g) => g,
            None => return false,
        };
        // normal equations of min ||g - ΔG γ|| with a small ridge
        let mut m = crate::matfun::dense::Mat::zeros(k, k);
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            for j in 0..=i {
                let v: f64 =
                    self.dg[i].iter().zip(&self.dg[j]).map(|(a, b)| a * b).sum();
                m.set(i, j, v);
                m.set(j, i, v);
            }
            rhs[i] = self.dg[i].iter().zip(g).map(|(a, b)| a * b).sum();
        }
        let trace: f64 = (0..k).map(|i| m.get(i, i)).sum();
        let ridge = 1e-12 * trace.max(1e-300);
        for i in 0..k {
            m.add_at(i, i, ridge);
        }
        let Some(gamma) = crate::matfun::dense::lu_solve(&m, &rhs) else {
            return false;
        };
        if gamma.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let n = z.len();
        z.copy_from_slice(z_post);
        u.copy_from_slice(u_post);
        for (j, gj) in gamma.iter().enumerate() {
            if *gj == 0.0 {
                continue;
            }
            let ds = &self.ds[j];
            let dg = &self.dg[j];
            for i in 0..n {
                z[i] -= gj * (ds[i] + dg[i]);
                u[i] -= gj * (ds[n + i] + dg[n + i]);
            }
        }
        true
    }
}

fn infeasible_solution(prog: &ConicProgram, layout: &Layout, m: usize) -> ConicSolution {
    let primal = layout.to_blocks(&vec![0.0; layout.total], 1.0);
    let slack = primal.clone();
    let dual = vec![0.0; m];
    let residuals = prog.residuals_of(&primal, &dual, &slack);
    ConicSolution {
        status: Status::InfeasibleDetected,
        primal,
        dual,
        slack,
        residuals,
        objective: 0.0,
        dual_objective: 0.0,
        iterations: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{BlockSpec, Coeff};

    fn correlation_toy() -> ConicProgram {
        // maximize X12 over 2x2 PSD with unit diagonal = minimize -X12
        let mut p = ConicProgram::new(vec![BlockSpec { name: "x".into(), cone: Cone::Psd(2) }]);
        p.add_objective(Coeff::mat(0, 0, 1, -1.0));
        p.add_constraint(vec![Coeff::mat(0, 0, 0, 1.0)], 1.0, None);
        p.add_constraint(vec![Coeff::mat(0, 1, 1, 1.0)], 1.0, None);
        p
    }

    #[test]
    fn psd_correlation_toy() {
        let p = correlation_toy();
        let sol = solve(&p, &SolveOptions::with_tol(1e-9)).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-7);
        let x = sol.primal[0].as_mat();
        assert!((x.get(0, 1) - 1.0).abs() < 1e-6);
        // invariant: reported residuals match recomputation
        let rec = p.residuals_of(&sol.primal, &sol.dual, &sol.slack);
        assert!((rec.max() - sol.residuals.max()).abs() < 1e-12);
    }

    #[test]
    fn nonneg_lp_toy() {
        // min x1 + 2 x2 s.t. x1 + x2 = 1, x >= 0 -> 1 at (1, 0)
        let mut p =
            ConicProgram::new(vec![BlockSpec { name: "x".into(), cone: Cone::Nonneg(2) }]);
        p.add_objective(Coeff::vec(0, 0, 1.0));
        p.add_objective(Coeff::vec(0, 1, 2.0));
        p.add_constraint(vec![Coeff::vec(0, 0, 1.0), Coeff::vec(0, 1, 1.0)], 1.0, None);
        let sol = solve(&p, &SolveOptions::with_tol(1e-9)).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-7);
        let x = sol.primal[0].as_vec();
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6);
    }

    #[test]
    fn inconsistent_free_scalar_detected() {
        let mut p = ConicProgram::new(vec![BlockSpec { name: "x".into(), cone: Cone::Free(1) }]);
        p.add_constraint(vec![Coeff::vec(0, 0, 1.0)], 1.0, None);
        p.add_constraint(vec![Coeff::vec(0, 0, 1.0)], 2.0, None);
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::InfeasibleDetected);
    }

    #[test]
    fn cone_infeasible_negative_diagonal() {
        // X PSD with X11 = -1: affine part consistent, conic part empty.
        let mut p = ConicProgram::new(vec![BlockSpec { name: "x".into(), cone: Cone::Psd(2) }]);
        p.add_objective(Coeff::mat(0, 1, 1, 1.0));
        p.add_constraint(vec![Coeff::mat(0, 0, 0, 1.0)], -1.0, None);
        let sol = solve(&p, &SolveOptions { tol: 1e-8, max_iter: 20_000, seed: 0 }).unwrap();
        assert_ne!(sol.status, Status::Optimal);
    }

    #[test]
    fn objective_scaling_leaves_argmin() {
        let p1 = correlation_toy();
        let mut p2 = correlation_toy();
        for c in &mut p2.objective {
            c.value *= 50.0;
        }
        let s1 = solve(&p1, &SolveOptions::with_tol(1e-9)).unwrap();
        let s2 = solve(&p2, &SolveOptions::with_tol(1e-9)).unwrap();
        let x1 = s1.primal[0].as_mat();
        let x2 = s2.primal[0].as_mat();
        for i in 0..2 {
            for j in 0..=i {
                assert!((x1.get(i, j) - x2.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn weak_duality_on_solution() {
        let p = correlation_toy();
        let sol = solve(&p, &SolveOptions::with_tol(1e-9)).unwrap();
        // minimization: primal objective >= dual objective - gap slack
        assert!(sol.objective >= sol.dual_objective - 1e-6);
    }

    #[test]
    fn mixed_blocks_with_free() {
        // min t s.t. t - X11 = 0, X11 = 2, X PSD, t free -> t = 2
        let mut p = ConicProgram::new(vec![
            BlockSpec { name: "x".into(), cone: Cone::Psd(2) },
            BlockSpec { name: "t".into(), cone: Cone::Free(1) },
        ]);
        p.add_objective(Coeff::vec(1, 0, 1.0));
        p.add_constraint(vec![Coeff::vec(1, 0, 1.0), Coeff::mat(0, 0, 0, -1.0)], 0.0, None);
        p.add_constraint(vec![Coeff::mat(0, 0, 0, 1.0)], 2.0, None);
        let sol = solve(&p, &SolveOptions::with_tol(1e-9)).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-6);
    }
}
