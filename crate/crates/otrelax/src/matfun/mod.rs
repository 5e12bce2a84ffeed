//! Dense symmetric matrices and the matrix functions built on their
//! eigendecompositions: square roots, inverse square roots, PSD projection
//! and the spectral norm.
//!
//! The eigensolver is a cyclic Jacobi iteration. All matrices in this crate
//! are small after chordal conversion, where Jacobi is simple, deterministic
//! and accurate; that determinism is relied upon by the conic solver.

pub(crate) mod dense;

use crate::error::{Error, Result};
pub(crate) use dense::Mat;
use serde::{Deserialize, Serialize};

/// Dense symmetric matrix with a single stored value per unordered index
/// pair (packed lower triangle), so `a[i][j] == a[j][i]` holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    /// Packed lower triangle, row by row: (0,0), (1,0), (1,1), (2,0), ...
    entries: Vec<f64>,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![0.0; dim * (dim + 1) / 2] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    /// Builds from a full row-major square array, averaging the two
    /// triangles (exact when the input is symmetric).
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            assert_eq!(rows[i].len(), n, "not square");
            for j in 0..=i {
                m.set(i, j, 0.5 * (rows[i][j] + rows[j][i]));
            }
        }
        m
    }

    pub(crate) fn from_mat(a: &Mat) -> Self {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, 0.5 * (a.get(i, j) + a.get(j, i)));
            }
        }
        m
    }

    pub(crate) fn to_mat(&self) -> Mat {
        let mut a = Mat::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                a.set(i, j, self.get(i, j));
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[packed_index(i, j)]
    }

    /// Sets the unordered pair {i, j}; symmetry is structural.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[packed_index(i, j)] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.entries[packed_index(i, j)] += v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product ⟨A, B⟩ = Σᵢⱼ AᵢⱼBᵢⱼ.
    pub fn frob_inner(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.get(i, i) * other.get(i, i);
            for j in 0..i {
                acc += 2.0 * self.get(i, j) * other.get(i, j);
            }
        }
        acc
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_inner(self).sqrt()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn add_scaled(&mut self, other: &SymMatrix, t: f64) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += t * b;
        }
    }

    pub fn scaled(&self, t: f64) -> SymMatrix {
        let mut m = self.clone();
        for v in &mut m.entries {
            *v *= t;
        }
        m
    }

    /// Row-major full array, for serialization and display.
    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// Eigendecomposition A = Q Λ Qᵀ with eigenvalues in ascending order and
/// eigenvector columns paired with them.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: Vec<f64>,
    /// Orthogonal matrix; column i is the eigenvector for `values[i]`.
    pub vectors: Mat,
}

impl EigenPair {
    /// Rebuilds Q f(Λ) Qᵀ for an entrywise spectral map f.
    pub fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let mut out = SymMatrix::zeros(n);
        for k in 0..n {
            let fv = f(self.values[k]);
            if fv == 0.0 {
                continue;
            }
            for i in 0..n {
                let qi = self.vectors.get(i, k);
                if qi == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    out.add_at(i, j, fv * qi * self.vectors.get(j, k));
                }
            }
        }
        out
    }
}

const QL_MAX_ITER: usize = 60;

/// Eigendecomposition of a symmetric matrix: Householder tridiagonalization
/// followed by the implicit-shift QL iteration, the classic dense symmetric
/// path.
///
/// Deterministic for identical input: fixed reduction order, ascending sort,
/// and a fixed sign convention for the eigenvectors.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenPair> {
    let n = a.dim();
    if n == 0 {
        return Ok(EigenPair { values: Vec::new(), vectors: Mat::zeros(0, 0) });
    }
    if n == 1 {
        return Ok(EigenPair { values: vec![a.get(0, 0)], vectors: Mat::identity(1) });
    }
    // vt is column-major: vt[col*n + row] = V[row][col], so eigenvector
    // columns are contiguous.
    let mut vt = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            vt[j * n + i] = a.get(i, j);
        }
    }
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(n, &mut vt, &mut d, &mut e);
    tql2(n, &mut vt, &mut d, &mut e)?;

    // Ascending order with a deterministic sign convention.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap().then(i.cmp(&j)));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Mat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        values.push(d[k]);
        let column = &vt[k * n..(k + 1) * n];
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for (i, v) in column.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        let sign = if column[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors.set(i, col, sign * column[i]);
        }
    }
    Ok(EigenPair { values, vectors })
}

/// Householder reduction to tridiagonal form (EISPACK tred2, as in JAMA).
/// `vt` holds the matrix column-major on input and the accumulated
/// transformation on output; `d` receives the diagonal, `e` the
/// subdiagonal.
fn tred2(n: usize, vt: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = vt[j * n + (n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = vt[j * n + (i - 1)];
                vt[i * n + j] = 0.0;
                vt[j * n + i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                vt[i * n + j] = f;
                let mut g = e[j] + vt[j * n + j] * f;
                for k in j + 1..i {
                    g += vt[j * n + k] * d[k];
                    e[k] += vt[j * n + k] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    vt[j * n + k] -= f * e[k] + g * d[k];
                }
                d[j] = vt[j * n + (i - 1)];
                vt[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }
    // Accumulate transformations.
    for i in 0..n - 1 {
        vt[i * n + (n - 1)] = vt[i * n + i];
        vt[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = vt[(i + 1) * n + k] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += vt[(i + 1) * n + k] * vt[j * n + k];
                }
                for k in 0..=i {
                    vt[j * n + k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            vt[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = vt[j * n + (n - 1)];
        vt[j * n + (n - 1)] = 0.0;
    }
    vt[(n - 1) * n + (n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on the tridiagonal form (EISPACK tql2).
fn tql2(n: usize, vt: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = 2.0f64.powi(-52);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(Error::EigenNoConvergence);
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    // Accumulate the rotation on columns i and i+1.
                    let (lo, hi) = vt.split_at_mut((i + 1) * n);
                    let col_i = &mut lo[i * n..(i + 1) * n];
                    let col_i1 = &mut hi[..n];
                    for k in 0..n {
                        let h = col_i1[k];
                        col_i1[k] = s * col_i[k] + c * h;
                        col_i[k] = c * col_i[k] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Symmetric PSD square root. Fails when the input has an eigenvalue below
/// `-1e-10 * ||a||₂`; small negatives above that threshold are clipped.
pub fn sqrt_psd(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    let spec = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = -1e-10 * spec;
    if let Some(min) = eig.values.first() {
        if *min < floor {
            return Err(Error::NotPositiveDefinite(format!(
                "minimum eigenvalue {min:.3e} below PSD tolerance"
            )));
        }
    }
    Ok(eig.apply_spectral(|v| v.max(0.0).sqrt()))
}

/// Inverse square root of a positive definite matrix.
pub fn invsqrt_pd(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    if let Some(min) = eig.values.first() {
        if *min <= 1e-12 {
            return Err(Error::NotPositiveDefinite(format!(
                "minimum eigenvalue {min:.3e} too small for inverse square root"
            )));
        }
    }
    Ok(eig.apply_spectral(|v| 1.0 / v.sqrt()))
}

/// Inverse of a positive definite matrix via its eigendecomposition.
pub fn inv_pd(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    if let Some(min) = eig.values.first() {
        if *min <= 1e-12 {
            return Err(Error::NotPositiveDefinite(format!(
                "minimum eigenvalue {min:.3e} too small for inversion"
            )));
        }
    }
    Ok(eig.apply_spectral(|v| 1.0 / v))
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
pub fn psd_project(a: &SymMatrix) -> SymMatrix {
    match sym_eig(a) {
        Ok(eig) => {
            if eig.values.first().map_or(true, |v| *v >= 0.0) {
                a.clone()
            } else {
                eig.apply_spectral(|v| v.max(0.0))
            }
        }
        // Jacobi only fails to converge on pathological input; identity
        // fallback keeps the projection total.
        Err(_) => a.clone(),
    }
}

/// Spectral norm: the largest eigenvalue magnitude.
pub fn spectral_norm(a: &SymMatrix) -> f64 {
    match sym_eig(a) {
        Ok(eig) => eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        Err(_) => a.frob_norm(),
    }
}

/// Smallest eigenvalue, used for PSD verification in tests and certificates.
pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    Ok(*sym_eig(a)?.values.first().unwrap_or(&0.0))
}

/// Symmetric part of a dense product A·B, as a `SymMatrix`.
pub(crate) fn sym_product(a: &Mat, b: &Mat) -> SymMatrix {
    SymMatrix::from_mat(&a.matmul(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        m
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let g = random_sym(n, rng).to_mat();
        let mut a = SymMatrix::from_mat(&g.transpose().matmul(&g));
        for i in 0..n {
            a.add_at(i, i, 0.5);
        }
        a
    }

    #[test]
    fn eig_identity() {
        let eig = sym_eig(&SymMatrix::identity(3)).unwrap();
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_diagonal() {
        let eig = sym_eig(&SymMatrix::diag(&[9.0, 4.0])).unwrap();
        assert!((eig.values[0] - 4.0).abs() < 1e-12);
        assert!((eig.values[1] - 9.0).abs() < 1e-12);
        // Axis basis up to sign; sign convention makes entries positive.
        assert!((eig.vectors.get(1, 0) - 1.0).abs() < 1e-12);
        assert!((eig.vectors.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_two_by_two_by_hand() {
        // [[2,1],[1,2]] has characteristic roots 1 and 3.
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let eig = sym_eig(&a).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstruction_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 5, 17, 40] {
            let a = random_sym(n, &mut rng);
            let eig = sym_eig(&a).unwrap();
            let recon = eig.apply_spectral(|v| v);
            let mut diff = recon.clone();
            diff.add_scaled(&a, -1.0);
            assert!(diff.frob_norm() <= 1e-10 * (1.0 + a.frob_norm()), "n={n}");
            let qtq = eig.vectors.transpose().matmul(&eig.vectors);
            let mut err: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { 1.0 } else { 0.0 };
                    err = err.max((qtq.get(i, j) - target).abs());
                }
            }
            assert!(err < 1e-10, "n={n} orthogonality {err:.3e}");
        }
    }

    #[test]
    fn eig_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sym(12, &mut rng);
        let e1 = sym_eig(&a).unwrap();
        let e2 = sym_eig(&a).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors.data, e2.vectors.data);
    }

    #[test]
    fn sqrt_identity_and_diag() {
        let s = sqrt_psd(&SymMatrix::identity(4)).unwrap();
        let mut diff = s.clone();
        diff.add_scaled(&SymMatrix::identity(4), -1.0);
        assert!(diff.frob_norm() < 1e-12);
        let s = sqrt_psd(&SymMatrix::diag(&[4.0])).unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_roundtrip_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 8, 20] {
            let a = random_spd(n, &mut rng);
            let r = sqrt_psd(&a).unwrap();
            let rr = sym_product(&r.to_mat(), &r.to_mat());
            let mut diff = rr.clone();
            diff.add_scaled(&a, -1.0);
            assert!(diff.frob_norm() <= 1e-8 * a.frob_norm());
        }
    }

    #[test]
    fn sqrt_twice_fourth_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_spd(6, &mut rng);
        let r = sqrt_psd(&sqrt_psd(&a).unwrap()).unwrap();
        let r2 = sym_product(&r.to_mat(), &r.to_mat());
        let r4 = sym_product(&r2.to_mat(), &r2.to_mat());
        let mut diff = r4.clone();
        diff.add_scaled(&a, -1.0);
        assert!(diff.frob_norm() <= 1e-6 * a.frob_norm());
    }

    #[test]
    fn invsqrt_recovers_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_spd(7, &mut rng);
        let r = invsqrt_pd(&a).unwrap();
        let ra = r.to_mat().matmul(&a.to_mat());
        let rar = sym_product(&ra, &r.to_mat());
        let mut diff = rar.clone();
        diff.add_scaled(&SymMatrix::identity(7), -1.0);
        assert!(diff.frob_norm() <= 1e-8 * (1.0 + a.frob_norm()));
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let a = SymMatrix::diag(&[1.0, -0.5]);
        assert!(sqrt_psd(&a).is_err());
    }

    #[test]
    fn psd_project_examples() {
        let p = psd_project(&SymMatrix::diag(&[1.0, -2.0]));
        assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(p.get(1, 1).abs() < 1e-12);
        assert!((spectral_norm(&SymMatrix::diag(&[1.0, -2.0])) - 2.0).abs() < 1e-12);
        // PSD input is untouched.
        let a = SymMatrix::diag(&[0.3, 2.0]);
        assert_eq!(psd_project(&a), a);
        // Off-diagonal 2x2: spectral norm |f|.
        let mut f = SymMatrix::zeros(2);
        f.set(0, 1, -0.7);
        assert!((spectral_norm(&f) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn psd_project_is_frobenius_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let a = random_sym(5, &mut rng);
            let p = psd_project(&a);
            let b = random_spd(5, &mut rng);
            let mut dp = p.clone();
            dp.add_scaled(&a, -1.0);
            let mut db = b.clone();
            db.add_scaled(&a, -1.0);
            assert!(dp.frob_norm() <= db.frob_norm() + 1e-10);
        }
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        // Independent oracle: plain power iteration on A² (covers the
        // negative-extreme case).
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let a = random_sym(6, &mut rng);
            let mut x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut lam2 = 0.0;
            for _ in 0..2000 {
                let y = a.matvec(&a.matvec(&x));
                let n = dense::norm2(&y);
                lam2 = n / dense::norm2(&x).max(1e-300);
                x = y.iter().map(|v| v / n.max(1e-300)).collect();
            }
            let oracle = lam2.sqrt();
            assert!((spectral_norm(&a) - oracle).abs() <= 1e-8 * (1.0 + oracle));
        }
    }
}
