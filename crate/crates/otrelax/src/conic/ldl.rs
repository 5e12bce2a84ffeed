//! Cached LDLᵀ factorizations of the solver's normal-equations matrix
//! `A Aᵀ`, with pivot clamping so that consistent-but-redundant constraint
//! systems still solve cleanly.
//!
//! Small systems use a dense factorization; larger ones a sparse
//! up-looking LDLᵀ after a reverse Cuthill–McKee reordering (the
//! relaxation programs have chain-like constraint graphs, so RCM keeps the
//! fill small).

use crate::matfun::dense::Mat;

/// Relative pivot threshold below which a pivot is treated as zero.
const PIVOT_REL_TOL: f64 = 1e-12;

pub enum NormalFactor {
    Dense(DenseLdl),
    Sparse(SparseLdl),
}

impl NormalFactor {
    /// Factorizes M = A Aᵀ given in lower-triangular triplet form
    /// ((row ≥ col), value), with `dim` rows.
    pub fn factor(dim: usize, triplets: &[(usize, usize, f64)], dense_limit: usize) -> Self {
        if dim <= dense_limit {
            NormalFactor::Dense(DenseLdl::factor(dim, triplets))
        } else {
            NormalFactor::Sparse(SparseLdl::factor(dim, triplets))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            NormalFactor::Dense(f) => f.solve(b),
            NormalFactor::Sparse(f) => f.solve(b),
        }
    }
}

pub struct DenseLdl {
    n: usize,
    /// Unit lower triangle packed row-major together with D on the diagonal.
    l: Mat,
    d: Vec<f64>,
}

impl DenseLdl {
    pub fn factor(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut m = Mat::zeros(n, n);
        for &(i, j, v) in triplets {
            m.add_at(i, j, v);
            if i != j {
                m.add_at(j, i, v);
            }
        }
        let max_diag = (0..n).map(|i| m.get(i, i).abs()).fold(0.0_f64, f64::max).max(1.0);
        let floor = PIVOT_REL_TOL * max_diag;
        let mut l = Mat::zeros(n, n);
        let mut d = vec![0.0; n];
        for j in 0..n {
            let mut dj = m.get(j, j);
            for k in 0..j {
                dj -= l.get(j, k) * l.get(j, k) * d[k];
            }
            if dj.abs() <= floor {
                d[j] = 0.0;
                l.set(j, j, 1.0);
                continue;
            }
            d[j] = dj;
            l.set(j, j, 1.0);
            for i in j + 1..n {
                let mut v = m.get(i, j);
                for k in 0..j {
                    v -= l.get(i, k) * l.get(j, k) * d[k];
                }
                l.set(i, j, v / dj);
            }
        }
        Self { n, l, d }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = i * n;
            let mut acc = y[i];
            for k in 0..i {
                acc -= self.l.data[row + k] * y[k];
            }
            y[i] = acc;
        }
        for i in 0..n {
            // Clamped pivots drop their component (pseudo-inverse behavior
            // on redundant constraints).
            y[i] = if self.d[i] == 0.0 { 0.0 } else { y[i] / self.d[i] };
        }
        for i in (0..n).rev() {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for k in 0..i {
                y[k] -= self.l.get(i, k) * yi;
            }
        }
        y
    }
}

pub struct SparseLdl {
    n: usize,
    iperm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl SparseLdl {
    pub fn factor(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        // Adjacency for RCM (strict lower entries only).
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i != j && v != 0.0 {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let perm = rcm_order(&adj);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Permuted matrix: strict upper triangle by column, diagonal apart.
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut diag = vec![0.0; n];
        for &(i, j, v) in triplets {
            let (pi, pj) = (iperm[i], iperm[j]);
            if pi == pj {
                diag[pi] += v;
            } else {
                let (r, c) = (pi.min(pj), pi.max(pj));
                cols[c].push((r, v));
            }
        }
        for c in &mut cols {
            c.sort_unstable_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
            for &(r, v) in c.iter() {
                if let Some(last) = merged.last_mut() {
                    if last.0 == r {
                        last.1 += v;
                        continue;
                    }
                }
                merged.push((r, v));
            }
            *c = merged;
        }

        let max_diag = diag.iter().map(|v| v.abs()).fold(0.0_f64, f64::max).max(1.0);
        let floor = PIVOT_REL_TOL * max_diag;
        let (lp, li, lx, d) = Self::factor_columns(n, &cols, &diag, floor);
        Self { n, iperm, lp, li, lx, d }
    }

    /// Up-looking LDLᵀ over explicit column lists (the LDL algorithm of
    /// Davis). `cols_upper[k]` holds the strict upper-triangle entries
    /// (r, v) of column k, i.e. A(r, k) with r < k.
    fn factor_columns(
        n: usize,
        cols_upper: &[Vec<(usize, f64)>],
        diag: &[f64],
        floor: f64,
    ) -> (Vec<usize>, Vec<usize>, Vec<f64>, Vec<f64>) {
        // Elimination tree and per-row patterns: the pattern of row k of L
        // is found by walking flags up the etree from each nonzero of
        // A(0..k, k).
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        let mut patterns: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..n {
            flag[k] = k;
            let mut pat = Vec::new();
            for &(j0, _) in &cols_upper[k] {
                let mut j = j0;
                let mut path = Vec::new();
                while flag[j] != k {
                    if parent[j] == usize::MAX {
                        parent[j] = k;
                    }
                    path.push(j);
                    flag[j] = k;
                    j = parent[j];
                }
                for &p in path.iter().rev() {
                    pat.push(p);
                }
            }
            pat.sort_unstable();
            for &j in &pat {
                lnz[j] += 1;
            }
            patterns[k] = pat;
        }

        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + lnz[j];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut lcount = vec![0usize; n];
        let mut d = vec![0.0f64; n];
        let mut y = vec![0.0f64; n];

        for k in 0..n {
            for &(j, v) in &cols_upper[k] {
                y[j] = v;
            }
            let mut dk = diag[k];
            // Sparse triangular solve over the pattern (ascending order),
            // producing row k of L.
            for &j in &patterns[k] {
                let yj = y[j];
                y[j] = 0.0;
                // y(i) -= L(i,j)·yj for stored entries i of column j (all
                // have i > j; entries with i >= k are not stored yet).
                for idx in lp[j]..lp[j] + lcount[j] {
                    y[li[idx]] -= lx[idx] * yj;
                }
                let lkj = if d[j] == 0.0 { 0.0 } else { yj / d[j] };
                let p = lp[j] + lcount[j];
                li[p] = k;
                lx[p] = lkj;
                lcount[j] += 1;
                dk -= lkj * yj;
            }
            d[k] = if dk.abs() <= floor { 0.0 } else { dk };
        }
        (lp, li, lx, d)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[self.iperm[i]] = b[i];
        }
        // L y' = y (unit lower, stored by columns)
        for j in 0..n {
            let yj = y[j];
            if yj == 0.0 {
                continue;
            }
            for idx in self.lp[j]..self.lp[j + 1] {
                y[self.li[idx]] -= self.lx[idx] * yj;
            }
        }
        for j in 0..n {
            y[j] = if self.d[j] == 0.0 { 0.0 } else { y[j] / self.d[j] };
        }
        // Lᵀ x = y
        for j in (0..n).rev() {
            let mut acc = y[j];
            for idx in self.lp[j]..self.lp[j + 1] {
                acc -= self.lx[idx] * y[self.li[idx]];
            }
            y[j] = acc;
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = y[self.iperm[i]];
        }
        x
    }
}

/// Reverse Cuthill–McKee ordering of a symmetric sparsity graph.
fn rcm_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        // lowest-degree unvisited start vertex
        let start = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (adj[v].len(), v));
        let Some(start) = start else { break };
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> =
                adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (adj[u].len(), u));
            for u in next {
                if !visited[u] {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order.reverse();
    order
}
