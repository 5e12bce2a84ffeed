//! Optimal transport between Gaussian marginals: the closed-form value, the
//! second-moment SDP relaxation over a reference graph, its clique-tree
//! conversion, a computable error certificate with a feasible dual point,
//! and the closed-form optimal map.

use crate::conic::{BlockValue, Coeff, ConicProgram, ConicSolution, Cone};
use crate::error::{Error, Result};
use crate::graph::{graph_power, maximal_cliques, project_pattern, Graph, PatternMode};
use crate::matfun::{
    invsqrt_pd, min_eigenvalue, spectral_norm, sqrt_psd, sym_eig, SymMatrix,
};
use serde::{Deserialize, Serialize};

/// A pair of Gaussian measures N(m₁, Σ₁), N(m₂, Σ₂) together with the
/// sparsity pattern of their precision matrices.
#[derive(Debug, Clone)]
pub struct GaussianInstance {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub sigma1: SymMatrix,
    pub sigma2: SymMatrix,
    /// Sparsity pattern of Σ₁⁻¹ and Σ₂⁻¹.
    pub precision_pattern: Graph,
}

impl GaussianInstance {
    /// Validates dimensions and positive definiteness; when `pattern` is
    /// omitted the complete graph is recorded (every Gaussian is Markovian
    /// with respect to it).
    pub fn new(
        m1: Vec<f64>,
        m2: Vec<f64>,
        sigma1: SymMatrix,
        sigma2: SymMatrix,
        pattern: Option<Graph>,
    ) -> Result<Self> {
        let d = m1.len();
        if m2.len() != d || sigma1.dim() != d || sigma2.dim() != d {
            return Err(Error::DimensionMismatch("means and covariances must share d".into()));
        }
        for (name, s) in [("sigma1", &sigma1), ("sigma2", &sigma2)] {
            let min = min_eigenvalue(s)?;
            if min <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!(
                    "{name}: minimum eigenvalue {min:.3e}"
                )));
            }
        }
        let pattern = match pattern {
            Some(g) => {
                if g.n_vertices() != d {
                    return Err(Error::DimensionMismatch(
                        "pattern vertex count must equal d".into(),
                    ));
                }
                for (name, s) in [("sigma1", &sigma1), ("sigma2", &sigma2)] {
                    let prec = precision_of(s)?;
                    let off = project_pattern(&prec, &g, PatternMode::Complement)?;
                    if spectral_norm(&off) > 1e-8 * (1.0 + spectral_norm(&prec)) {
                        return Err(Error::InvalidGraph(format!(
                            "declared pattern does not cover the precision of {name}"
                        )));
                    }
                }
                g
            }
            None => Graph::complete(d),
        };
        Ok(Self { m1, m2, sigma1, sigma2, precision_pattern: pattern })
    }

    pub fn d(&self) -> usize {
        self.m1.len()
    }

    /// Extreme covariance eigenvalues (a, b) with a·I ⪯ Σ₁, Σ₂ ⪯ b·I.
    pub fn eigenvalue_range(&self) -> Result<(f64, f64)> {
        let e1 = sym_eig(&self.sigma1)?;
        let e2 = sym_eig(&self.sigma2)?;
        let a = e1.values[0].min(e2.values[0]);
        let b = e1.values[self.d() - 1].max(e2.values[self.d() - 1]);
        Ok((a, b))
    }

    /// Second moment matrix Σ + m mᵀ of the first marginal.
    pub fn second_moment1(&self) -> SymMatrix {
        second_moment(&self.sigma1, &self.m1)
    }

    pub fn second_moment2(&self) -> SymMatrix {
        second_moment(&self.sigma2, &self.m2)
    }
}

fn second_moment(sigma: &SymMatrix, m: &[f64]) -> SymMatrix {
    let d = m.len();
    let mut out = sigma.clone();
    for i in 0..d {
        for j in 0..=i {
            out.add_at(i, j, m[i] * m[j]);
        }
    }
    out
}

fn precision_of(sigma: &SymMatrix) -> Result<SymMatrix> {
    // Eigenvalue floor 1e-10: instances are generated in floating point.
    let eig = sym_eig(sigma)?;
    if eig.values[0] <= 1e-10 {
        return Err(Error::NotPositiveDefinite(format!(
            "covariance nearly singular: min eigenvalue {:.3e}",
            eig.values[0]
        )));
    }
    Ok(eig.apply_spectral(|v| 1.0 / v))
}

/// Cross-covariance kernel (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2} shared by the
/// closed-form value, the certificate and the optimal map.
fn middle_sqrt(inst: &GaussianInstance) -> Result<(SymMatrix, SymMatrix)> {
    let s1h = sqrt_psd(&inst.sigma1)?;
    let inner = SymMatrix::from_mat(
        &s1h.to_mat().matmul(&inst.sigma2.to_mat()).matmul(&s1h.to_mat()),
    );
    let c = sqrt_psd(&inner)?;
    Ok((s1h, c))
}

/// Squared Wasserstein-2 distance between the two Gaussians:
/// ‖m₁−m₂‖² + Tr(Σ₁+Σ₂−2(Σ₁^{1/2}Σ₂Σ₁^{1/2})^{1/2}).
pub fn bures_w2(inst: &GaussianInstance) -> Result<f64> {
    let (_, c) = middle_sqrt(inst)?;
    let dm: f64 = inst.m1.iter().zip(&inst.m2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(dm + inst.sigma1.trace() + inst.sigma2.trace() - 2.0 * c.trace())
}

/// The moment SDP over a reference graph 𝒢, in the single-block form
///
/// ```text
/// min  Tr(Z₁) + Tr(Z₂) − 2 Tr(Y)
/// s.t. first row of X pinned to (1, m₁ᵀ, m₂ᵀ),
///      diagonal and 𝒢-edges of Z₁, Z₂ pinned to the second moments,
///      X = [1 m₁ᵀ m₂ᵀ; m₁ Z₁ Y; m₂ Yᵀ Z₂] ⪰ 0   (size 2d+1).
/// ```
#[derive(Debug, Clone)]
pub struct GsmomAssembly {
    pub program: ConicProgram,
    pub reference_graph: Graph,
    d: usize,
    s1: SymMatrix,
    s2: SymMatrix,
    m1: Vec<f64>,
    m2: Vec<f64>,
}

impl GsmomAssembly {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Position of Z₁[i][j] inside the PSD block.
    pub fn z1_pos(&self, i: usize, j: usize) -> (usize, usize) {
        (1 + i, 1 + j)
    }

    pub fn z2_pos(&self, i: usize, j: usize) -> (usize, usize) {
        (1 + self.d + i, 1 + self.d + j)
    }

    /// Position of Y[i][j] (cross covariance block).
    pub fn y_pos(&self, i: usize, j: usize) -> (usize, usize) {
        (1 + i, 1 + self.d + j)
    }

    /// Reads (Z₁, Z₂, Y as full matrix rows) out of a single-block solution.
    pub fn read_blocks(&self, sol: &ConicSolution) -> (SymMatrix, SymMatrix, Vec<Vec<f64>>) {
        let x = sol.primal[0].as_mat();
        let d = self.d;
        let mut z1 = SymMatrix::zeros(d);
        let mut z2 = SymMatrix::zeros(d);
        let mut y = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let (r, c) = self.y_pos(i, j);
                y[i][j] = x.get(r, c);
                if j <= i {
                    let (r, c) = self.z1_pos(i, j);
                    z1.set(i, j, x.get(r, c));
                    let (r, c) = self.z2_pos(i, j);
                    z2.set(i, j, x.get(r, c));
                }
            }
        }
        (z1, z2, y)
    }
}

/// Builds the single-block SDP for an instance and a reference graph.
pub fn build_gsmom(inst: &GaussianInstance, ref_graph: &Graph) -> Result<GsmomAssembly> {
    let d = inst.d();
    if ref_graph.n_vertices() != d {
        return Err(Error::DimensionMismatch(format!(
            "reference graph on {} vertices for d={d}",
            ref_graph.n_vertices()
        )));
    }
    let s1 = inst.second_moment1();
    let s2 = inst.second_moment2();
    let mut prog = ConicProgram::new(vec![crate::conic::BlockSpec {
        name: "X".into(),
        cone: Cone::Psd(2 * d + 1),
    }]);
    // objective Tr(Z1) + Tr(Z2) - 2 Tr(Y)
    for i in 0..d {
        prog.add_objective(Coeff::mat(0, 1 + i, 1 + i, 1.0));
        prog.add_objective(Coeff::mat(0, 1 + d + i, 1 + d + i, 1.0));
        prog.add_objective(Coeff::mat(0, 1 + i, 1 + d + i, -2.0));
    }
    // first-row pins
    prog.add_constraint(vec![Coeff::mat(0, 0, 0, 1.0)], 1.0, Some("pin-one"));
    for i in 0..d {
        prog.add_constraint(vec![Coeff::mat(0, 0, 1 + i, 1.0)], inst.m1[i], Some("mean-x"));
    }
    for i in 0..d {
        prog.add_constraint(vec![Coeff::mat(0, 0, 1 + d + i, 1.0)], inst.m2[i], Some("mean-y"));
    }
    // pattern pins: diagonal plus reference-graph edges, for Z1 and Z2
    let mut pattern_pairs: Vec<(usize, usize)> = (0..d).map(|i| (i, i)).collect();
    pattern_pairs.extend(ref_graph.edges());
    for &(i, j) in &pattern_pairs {
        prog.add_constraint(
            vec![Coeff::mat(0, 1 + i, 1 + j, 1.0)],
            s1.get(i, j),
            Some("moment-x"),
        );
    }
    for &(i, j) in &pattern_pairs {
        prog.add_constraint(
            vec![Coeff::mat(0, 1 + d + i, 1 + d + j, 1.0)],
            s2.get(i, j),
            Some("moment-y"),
        );
    }
    Ok(GsmomAssembly {
        program: prog,
        reference_graph: ref_graph.clone(),
        d,
        s1,
        s2,
        m1: inst.m1.clone(),
        m2: inst.m2.clone(),
    })
}

/// Clique-tree conversion of the single-block SDP: one PSD block of size
/// 2|V_t|+1 per maximal clique V_t of the reference graph, with shared
/// entries tied by equality. Non-chordal graphs are chordally completed
/// first (which only enlarges the relaxation's variable set).
pub fn clique_convert(assembly: &GsmomAssembly) -> Result<ConicProgram> {
    let d = assembly.d;
    let (_, cliques) = maximal_cliques(&assembly.reference_graph);
    // Blown-up cliques over the (2d+1)-index set.
    let big: Vec<Vec<usize>> = cliques
        .iter()
        .map(|v| {
            let mut c = Vec::with_capacity(2 * v.len() + 1);
            c.push(0usize);
            c.extend(v.iter().map(|&i| 1 + i));
            c.extend(v.iter().map(|&i| 1 + d + i));
            c
        })
        .collect();

    let mut prog = ConicProgram::new(Vec::new());
    let mut global_to_local: Vec<std::collections::BTreeMap<usize, usize>> = Vec::new();
    for (t, c) in big.iter().enumerate() {
        prog.add_block(format!("clique{t}"), Cone::Psd(c.len()));
        global_to_local.push(c.iter().enumerate().map(|(l, &g)| (g, l)).collect());
    }

    // All blocks holding a given global pair, first one as representative.
    let occurrences = |p: usize, q: usize| -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (t, map) in global_to_local.iter().enumerate() {
            if let (Some(&a), Some(&b)) = (map.get(&p), map.get(&q)) {
                out.push((t, a.min(b), a.max(b)));
            }
        }
        out
    };
    let mut tie_count = 0usize;
    let mut seen: std::collections::BTreeSet<(usize, usize)> = std::collections::BTreeSet::new();
    let mut tie_shared = |p: usize, q: usize, prog: &mut ConicProgram| {
        if !seen.insert((p, q)) {
            return;
        }
        let occ = occurrences(p, q);
        for w in occ.windows(2) {
            let (t0, a0, b0) = w[0];
            let (t1, a1, b1) = w[1];
            prog.add_constraint(
                vec![Coeff::mat(t0, a0, b0, 1.0), Coeff::mat(t1, a1, b1, -1.0)],
                0.0,
                Some("overlap"),
            );
            tie_count += 1;
        }
    };
    // Tie every pair shared between cliques (pairs inside pairwise
    // intersections of the blown-up cliques).
    for (ti, ci) in big.iter().enumerate() {
        for cj in big.iter().skip(ti + 1) {
            let inter: Vec<usize> = ci.iter().copied().filter(|v| cj.contains(v)).collect();
            for (ai, &p) in inter.iter().enumerate() {
                for &q in &inter[ai..] {
                    tie_shared(p.min(q), p.max(q), &mut prog);
                }
            }
        }
    }
    let _ = tie_count;

    // Objective and pins on representative blocks.
    let place = |p: usize, q: usize| -> Result<(usize, usize, usize)> {
        occurrences(p.min(q), p.max(q)).into_iter().next().ok_or_else(|| {
            Error::InvalidProgram(format!("entry ({p},{q}) outside the clique pattern"))
        })
    };
    for i in 0..d {
        let (t, a, b) = place(1 + i, 1 + i)?;
        prog.add_objective(Coeff::mat(t, a, b, 1.0));
        let (t, a, b) = place(1 + d + i, 1 + d + i)?;
        prog.add_objective(Coeff::mat(t, a, b, 1.0));
        let (t, a, b) = place(1 + i, 1 + d + i)?;
        prog.add_objective(Coeff::mat(t, a, b, -2.0));
    }
    let (t, a, b) = place(0, 0)?;
    prog.add_constraint(vec![Coeff::mat(t, a, b, 1.0)], 1.0, Some("pin-one"));
    for i in 0..d {
        let (t, a, b) = place(0, 1 + i)?;
        prog.add_constraint(vec![Coeff::mat(t, a, b, 1.0)], assembly.m1[i], Some("mean-x"));
    }
    for i in 0..d {
        let (t, a, b) = place(0, 1 + d + i)?;
        prog.add_constraint(vec![Coeff::mat(t, a, b, 1.0)], assembly.m2[i], Some("mean-y"));
    }
    let mut pattern_pairs: Vec<(usize, usize)> = (0..d).map(|i| (i, i)).collect();
    pattern_pairs.extend(assembly.reference_graph.edges());
    for &(i, j) in &pattern_pairs {
        let (t, a, b) = place(1 + i, 1 + j)?;
        prog.add_constraint(
            vec![Coeff::mat(t, a, b, 1.0)],
            assembly.s1.get(i, j),
            Some("moment-x"),
        );
    }
    for &(i, j) in &pattern_pairs {
        let (t, a, b) = place(1 + d + i, 1 + d + j)?;
        prog.add_constraint(
            vec![Coeff::mat(t, a, b, 1.0)],
            assembly.s2.get(i, j),
            Some("moment-y"),
        );
    }
    Ok(prog)
}

/// The dual kernels Λ̂₁ = Σ₁^{-1/2}(Σ₁^{1/2}Σ₂Σ₁^{1/2})^{1/2}Σ₁^{-1/2} and
/// Λ̂₂ = Σ₁^{1/2}(Σ₁^{1/2}Σ₂Σ₁^{1/2})^{-1/2}Σ₁^{1/2} (= Λ̂₁⁻¹).
fn dual_kernels(inst: &GaussianInstance) -> Result<(SymMatrix, SymMatrix)> {
    let (s1h, c) = middle_sqrt(inst)?;
    let s1ih = invsqrt_pd(&inst.sigma1)?;
    let lam1 = SymMatrix::from_mat(&s1ih.to_mat().matmul(&c.to_mat()).matmul(&s1ih.to_mat()));
    let cinv_h = invsqrt_pd(&c)?;
    let cinv = SymMatrix::from_mat(&cinv_h.to_mat().matmul(&cinv_h.to_mat()));
    let lam2 = SymMatrix::from_mat(&s1h.to_mat().matmul(&cinv.to_mat()).matmul(&s1h.to_mat()));
    Ok((lam1, lam2))
}

/// Computable error certificate
/// ε_𝒢 = 2 Tr(Σ₁)·‖[Λ̂₁]_{𝒢,c}‖₂ + 2 Tr(Σ₂)·‖[Λ̂₂]_{𝒢,c}‖₂,
/// bounding the gap between the SDP optimum and the exact value:
/// `bures_w2 − ε_𝒢 ≤ optimum ≤ bures_w2`.
///
/// Evaluated purely through matrix square roots — never through the solver
/// it certifies.
pub fn epsilon_bound(inst: &GaussianInstance, ref_graph: &Graph) -> Result<f64> {
    let (lam1, lam2) = dual_kernels(inst)?;
    let off1 = project_pattern(&lam1, ref_graph, PatternMode::Complement)?;
    let off2 = project_pattern(&lam2, ref_graph, PatternMode::Complement)?;
    Ok(2.0 * inst.sigma1.trace() * spectral_norm(&off1)
        + 2.0 * inst.sigma2.trace() * spectral_norm(&off2))
}

/// Feasible dual point of the pattern-constrained dual: the kernels with
/// their off-pattern parts removed and an identity shift restoring PSD.
/// Returns (Λ̃₁, Λ̃₂, dual value); the dual value lower-bounds the SDP
/// optimum and sits above `bures_w2 − ε_𝒢`.
pub fn dual_certificate(
    inst: &GaussianInstance,
    ref_graph: &Graph,
) -> Result<(SymMatrix, SymMatrix, f64)> {
    let (lam1, lam2) = dual_kernels(inst)?;
    let mut tilde = Vec::with_capacity(2);
    for lam in [&lam1, &lam2] {
        let off = project_pattern(lam, ref_graph, PatternMode::Complement)?;
        let shift = spectral_norm(&off);
        let mut t = lam.clone();
        t.add_scaled(&off, -1.0);
        for i in 0..t.dim() {
            t.add_at(i, i, shift);
        }
        tilde.push(t);
    }
    let t2 = tilde.pop().unwrap();
    let t1 = tilde.pop().unwrap();
    let dm: f64 = inst.m1.iter().zip(&inst.m2).map(|(a, b)| (a - b) * (a - b)).sum();
    let value = dm + inst.sigma1.trace() + inst.sigma2.trace()
        - inst.sigma1.frob_inner(&t1)
        - inst.sigma2.frob_inner(&t2);
    Ok((t1, t2, value))
}

/// Closed-form optimal map T(x) = A x + b between the Gaussians, with
/// A = Σ₁^{-1/2}(Σ₁^{1/2}Σ₂Σ₁^{1/2})^{1/2}Σ₁^{-1/2} and b = m₂ − A m₁.
pub fn gaussian_monge_map(inst: &GaussianInstance) -> Result<(SymMatrix, Vec<f64>)> {
    let (lam1, _) = dual_kernels(inst)?;
    let am1 = lam1.matvec(&inst.m1);
    let b = inst.m2.iter().zip(&am1).map(|(m, a)| m - a).collect();
    Ok((lam1, b))
}

/// Serialized form: means plus row-major covariances.
#[derive(Serialize, Deserialize)]
struct GaussianInstanceJson {
    m1: Vec<f64>,
    m2: Vec<f64>,
    sigma1: Vec<Vec<f64>>,
    sigma2: Vec<Vec<f64>>,
    pattern: Graph,
}

impl Serialize for GaussianInstance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GaussianInstanceJson {
            m1: self.m1.clone(),
            m2: self.m2.clone(),
            sigma1: self.sigma1.to_dense_rows(),
            sigma2: self.sigma2.to_dense_rows(),
            pattern: self.precision_pattern.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GaussianInstanceJson::deserialize(d)?;
        GaussianInstance::new(
            raw.m1,
            raw.m2,
            SymMatrix::from_rows(&raw.sigma1),
            SymMatrix::from_rows(&raw.sigma2),
            Some(raw.pattern),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Relative error floored at a solver tolerance; reported errors cannot
/// resolve below the accuracy the optimum was computed to.
pub fn floored_relative_error(exact: f64, approx: f64, floor: f64) -> f64 {
    ((exact - approx).abs() / exact.abs().max(1e-300)).max(floor)
}

/// Reference-graph power sweep: for h = hs, solve the SDP with 𝒢 = Gᵖᵃᵗᵗᵉʳⁿ
/// raised to h and report (h, optimum, relative error, ε bound).
pub fn h_sweep(
    inst: &GaussianInstance,
    hs: &[usize],
    opts: &crate::conic::SolveOptions,
) -> Result<Vec<HSweepRow>> {
    let exact = bures_w2(inst)?;
    let mut rows = Vec::with_capacity(hs.len());
    for &h in hs {
        let g = graph_power(&inst.precision_pattern, h);
        let assembly = build_gsmom(inst, &g)?;
        let converted = clique_convert(&assembly)?;
        let t0 = std::time::Instant::now();
        let sol = crate::conic::solve(&converted, opts)?;
        let solve_seconds = t0.elapsed().as_secs_f64();
        let eps = epsilon_bound(inst, &g)?;
        let (_, _, dual_value) = dual_certificate(inst, &g)?;
        rows.push(HSweepRow {
            h,
            exact,
            optimum: sol.objective,
            relative_error: floored_relative_error(exact, sol.objective, opts.tol),
            epsilon: eps,
            dual_value,
            status: sol.status,
            solve_seconds,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct HSweepRow {
    pub h: usize,
    pub exact: f64,
    pub optimum: f64,
    pub relative_error: f64,
    pub epsilon: f64,
    pub dual_value: f64,
    pub status: crate::conic::Status,
    pub solve_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, SolveOptions, Status};
    use crate::models::gaussian_instance;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn scalar_instance() -> GaussianInstance {
        GaussianInstance::new(
            vec![0.0],
            vec![1.0],
            SymMatrix::diag(&[1.0]),
            SymMatrix::diag(&[4.0]),
            None,
        )
        .unwrap()
    }

    #[test]
    fn bures_identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = gaussian_instance(4, 7).unwrap();
        let same = GaussianInstance::new(
            inst.m1.clone(),
            inst.m1.clone(),
            inst.sigma1.clone(),
            inst.sigma1.clone(),
            None,
        )
        .unwrap();
        assert!(bures_w2(&same).unwrap().abs() < 1e-9);
        let _ = &mut rng;
    }

    #[test]
    fn bures_scalar_closed_form() {
        // (0,1) vs (1,4): 1 + (1 + 4 - 2*2) = 2
        assert!((bures_w2(&scalar_instance()).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn bures_commuting_diagonal() {
        let s1 = [0.7, 2.0, 1.3];
        let s2 = [1.1, 0.4, 2.5];
        let m1 = vec![0.3, -1.0, 0.5];
        let m2 = vec![1.0, 0.0, -0.2];
        let inst = GaussianInstance::new(
            m1.clone(),
            m2.clone(),
            SymMatrix::diag(&s1),
            SymMatrix::diag(&s2),
            None,
        )
        .unwrap();
        let expect: f64 = m1.iter().zip(&m2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            + s1.iter()
                .zip(&s2)
                .map(|(a, b)| (a.sqrt() - b.sqrt()) * (a.sqrt() - b.sqrt()))
                .sum::<f64>();
        assert!((bures_w2(&inst).unwrap() - expect).abs() < 1e-10);
        // symmetry in the two marginals
        let swapped = GaussianInstance::new(
            m2,
            m1,
            SymMatrix::diag(&s2),
            SymMatrix::diag(&s1),
            None,
        )
        .unwrap();
        assert!((bures_w2(&inst).unwrap() - bures_w2(&swapped).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn gsmom_d1_matches_scalar() {
        let inst = scalar_instance();
        let assembly = build_gsmom(&inst, &Graph::complete(1)).unwrap();
        let sol = solve(&assembly.program, &SolveOptions::with_tol(1e-9)).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-6, "objective {}", sol.objective);
    }

    #[test]
    fn gsmom_complete_graph_is_exact_d3() {
        let inst = gaussian_instance(3, 11).unwrap();
        let exact = bures_w2(&inst).unwrap();
        let assembly = build_gsmom(&inst, &Graph::complete(3)).unwrap();
        // constraint count: 2(d + |E|) pattern pins + first row (2d+1)
        assert_eq!(assembly.program.n_constraints(), 2 * (3 + 3) + 7);
        let sol = solve(&assembly.program, &SolveOptions::with_tol(1e-9)).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!(
            (sol.objective - exact).abs() <= 1e-6 * (1.0 + exact),
            "optimum {} vs exact {exact}",
            sol.objective
        );
    }

    #[test]
    fn clique_convert_block_sizes_on_path() {
        let inst = gaussian_instance(5, 3).unwrap();
        let assembly = build_gsmom(&inst, &Graph::path(5)).unwrap();
        let converted = clique_convert(&assembly).unwrap();
        assert_eq!(converted.blocks.len(), 4);
        for b in &converted.blocks {
            assert_eq!(b.cone, Cone::Psd(5));
        }
        // complete graph: conversion is the identity single block
        let assembly = build_gsmom(&inst, &Graph::complete(5)).unwrap();
        let converted = clique_convert(&assembly).unwrap();
        assert_eq!(converted.blocks.len(), 1);
        assert_eq!(converted.blocks[0].cone, Cone::Psd(11));
    }

    #[test]
    fn clique_convert_preserves_optimum() {
        let inst = gaussian_instance(6, 19).unwrap();
        let g = Graph::path(6);
        let assembly = build_gsmom(&inst, &g).unwrap();
        let s_full = solve(&assembly.program, &SolveOptions::with_tol(1e-9)).unwrap();
        let converted = clique_convert(&assembly).unwrap();
        let s_conv = solve(&converted, &SolveOptions::with_tol(1e-9)).unwrap();
        assert_eq!(s_full.status, Status::Optimal);
        assert_eq!(s_conv.status, Status::Optimal);
        assert!(
            (s_full.objective - s_conv.objective).abs() < 1e-6 * (1.0 + s_full.objective.abs()),
            "full {} vs converted {}",
            s_full.objective,
            s_conv.objective
        );
    }

    #[test]
    fn epsilon_vanishes_on_complete_graph_and_equal_covariances() {
        let inst = gaussian_instance(4, 5).unwrap();
        let eps = epsilon_bound(&inst, &Graph::complete(4)).unwrap();
        assert!(eps.abs() < 1e-8, "eps {eps}");
        // Σ1 = Σ2 = I: kernels are the identity, any reference graph works.
        let iso = GaussianInstance::new(
            vec![0.0; 3],
            vec![1.0; 3],
            SymMatrix::identity(3),
            SymMatrix::identity(3),
            None,
        )
        .unwrap();
        let eps = epsilon_bound(&iso, &Graph::path(3)).unwrap();
        assert!(eps.abs() < 1e-10);
    }

    #[test]
    fn certificate_sandwich_on_path_powers() {
        let inst = gaussian_instance(6, 23).unwrap();
        let exact = bures_w2(&inst).unwrap();
        for h in 1..=3usize {
            let g = graph_power(&inst.precision_pattern, h);
            let assembly = build_gsmom(&inst, &g).unwrap();
            let sol =
                solve(&clique_convert(&assembly).unwrap(), &SolveOptions::with_tol(1e-9))
                    .unwrap();
            assert_eq!(sol.status, Status::Optimal);
            let eps = epsilon_bound(&inst, &g).unwrap();
            assert!(
                exact - eps - 1e-6 <= sol.objective && sol.objective <= exact + 1e-6,
                "h={h}: sandwich failed: {} not in [{}, {}]",
                sol.objective,
                exact - eps,
                exact
            );
            let (t1, t2, dual_value) = dual_certificate(&inst, &g).unwrap();
            // dual point feasibility: [Λ̃1, -I; -I, Λ̃2] PSD
            let d = inst.d();
            let mut big = SymMatrix::zeros(2 * d);
            for i in 0..d {
                for j in 0..=i {
                    big.set(i, j, t1.get(i, j));
                    big.set(d + i, d + j, t2.get(i, j));
                }
                big.set(d + i, i, -1.0);
            }
            let min = min_eigenvalue(&big).unwrap();
            assert!(min >= -1e-8 * (1.0 + spectral_norm(&big)), "dual point not PSD: {min}");
            assert!(dual_value >= exact - eps - 1e-8, "dual value below certificate");
            assert!(dual_value <= sol.objective + 1e-6, "weak duality violated");
        }
    }

    #[test]
    fn dual_certificate_complete_graph_attains_exact() {
        let inst = gaussian_instance(5, 31).unwrap();
        let exact = bures_w2(&inst).unwrap();
        let (_, _, dual_value) = dual_certificate(&inst, &Graph::complete(5)).unwrap();
        assert!((dual_value - exact).abs() < 1e-8 * (1.0 + exact.abs()));
        // equal marginals: everything collapses to zero
        let same = GaussianInstance::new(
            inst.m1.clone(),
            inst.m1.clone(),
            inst.sigma1.clone(),
            inst.sigma1.clone(),
            None,
        )
        .unwrap();
        let (_, _, v) = dual_certificate(&same, &Graph::path(5)).unwrap();
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn monge_map_identity_and_scalar() {
        let inst = gaussian_instance(3, 1).unwrap();
        let same = GaussianInstance::new(
            inst.m1.clone(),
            inst.m1.clone(),
            inst.sigma1.clone(),
            inst.sigma1.clone(),
            None,
        )
        .unwrap();
        let (a, b) = gaussian_monge_map(&same).unwrap();
        for i in 0..3 {
            assert!(b[i].abs() < 1e-9);
            for j in 0..=i {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((a.get(i, j) - expect).abs() < 1e-9);
            }
        }
        let (a, b) = gaussian_monge_map(&scalar_instance()).unwrap();
        assert!((a.get(0, 0) - 2.0).abs() < 1e-10);
        assert!((b[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn monge_map_pushes_covariance() {
        let inst = gaussian_instance(4, 77).unwrap();
        let (a, _) = gaussian_monge_map(&inst).unwrap();
        let as1a = SymMatrix::from_mat(
            &a.to_mat().matmul(&inst.sigma1.to_mat()).matmul(&a.to_mat()),
        );
        let mut diff = as1a;
        diff.add_scaled(&inst.sigma2, -1.0);
        assert!(diff.frob_norm() <= 1e-7 * (1.0 + inst.sigma2.frob_norm()));
    }

    #[test]
    fn optimum_monotone_in_reference_graph() {
        let inst = gaussian_instance(5, 41).unwrap();
        let mut last = f64::NEG_INFINITY;
        for h in 1..=4usize {
            let g = graph_power(&inst.precision_pattern, h);
            let assembly = build_gsmom(&inst, &g).unwrap();
            let sol =
                solve(&clique_convert(&assembly).unwrap(), &SolveOptions::with_tol(1e-9))
                    .unwrap();
            assert!(sol.objective >= last - 1e-6, "h={h}: {} < {last}", sol.objective);
            last = sol.objective;
        }
    }

    #[test]
    fn instance_json_roundtrip() {
        let inst = gaussian_instance(4, 9).unwrap();
        let s = serde_json::to_string(&inst).unwrap();
        let back: GaussianInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back.m1, inst.m1);
        let mut diff = back.sigma1.clone();
        diff.add_scaled(&inst.sigma1, -1.0);
        assert!(diff.frob_norm() < 1e-12);
        assert_eq!(back.precision_pattern, inst.precision_pattern);
    }
}
