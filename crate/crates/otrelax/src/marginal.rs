//! Marginal relaxations of discrete optimal transport: the doubly
//! nonnegative program over one- and two-cluster marginals, its LP
//! weakening (drop the block PSD condition) and its signed-measure
//! weakening (drop entrywise nonnegativity).

use crate::conic::{BlockValue, Coeff, ConicProgram, Cone};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::measure::{ClusterSpec, DiscreteMeasure};
use serde::{Deserialize, Serialize};

/// Which relaxation of the marginal family to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalVariant {
    /// Block PSD matrix plus entrywise nonnegativity (doubly nonnegative).
    Dnn,
    /// Pure LP: nonnegative couplings on the reference-graph edges only.
    Lp,
    /// Block PSD with signed couplings.
    Psd,
}

/// Where the cluster marginals of μ, ν and the per-cluster cost tables
/// live, after grouping coordinate axes cluster-wise.
#[derive(Debug, Clone)]
pub struct MarginalData {
    /// One-cluster marginals μ_k (axes: cluster-level x states).
    pub mu_k: Vec<DiscreteMeasure>,
    pub nu_k: Vec<DiscreteMeasure>,
    /// Two-cluster marginals μ_ij for reference-graph edges, keyed (i, j).
    pub mu_ij: Vec<((usize, usize), DiscreteMeasure)>,
    pub nu_ij: Vec<((usize, usize), DiscreteMeasure)>,
    /// Cluster-level state counts on the x and y side.
    pub x_states: Vec<usize>,
    pub y_states: Vec<usize>,
}

/// Conic encoding of one marginal relaxation.
#[derive(Debug, Clone)]
pub struct MarginalAssembly {
    pub program: ConicProgram,
    pub variant: MarginalVariant,
    pub ref_graph: Graph,
    pub x_states: Vec<usize>,
    pub y_states: Vec<usize>,
    layout: MarginalLayout,
}

/// Addresses of the π_k vectors and π_ij matrices inside the program's
/// blocks.
#[derive(Debug, Clone)]
enum MarginalLayout {
    /// LP / exact form: block index of each π_k, then of each kept π_ij.
    Blocks { pi_k: Vec<usize>, pi_ij: Vec<((usize, usize), usize)> },
    /// PSD forms: single PSD block; offsets of each cluster's state range.
    Psd { offsets: Vec<usize>, nonneg_block: Option<usize> },
}

impl MarginalAssembly {
    /// Number of cluster states |Z_k| = |X_k|·|Y_k|.
    pub fn z_states(&self, k: usize) -> usize {
        self.x_states[k] * self.y_states[k]
    }

    /// Reads π_k from a solution.
    pub fn read_pi_k(&self, primal: &[BlockValue], k: usize) -> Vec<f64> {
        match &self.layout {
            MarginalLayout::Blocks { pi_k, .. } => primal[pi_k[k]].as_vec().to_vec(),
            MarginalLayout::Psd { offsets, .. } => {
                let x = primal[0].as_mat();
                (0..self.z_states(k)).map(|s| x.get(offsets[k] + s, offsets[k] + s)).collect()
            }
        }
    }

    /// Reads π_ij (row-major over z_i × z_j states) from a solution;
    /// returns `None` when the pair is not represented (LP non-edges).
    pub fn read_pi_ij(
        &self,
        primal: &[BlockValue],
        i: usize,
        j: usize,
    ) -> Option<Vec<f64>> {
        let (i, j) = (i.min(j), i.max(j));
        match &self.layout {
            MarginalLayout::Blocks { pi_ij, .. } => {
                let (_, b) = pi_ij.iter().find(|((a, c), _)| (*a, *c) == (i, j))?;
                Some(primal[*b].as_vec().to_vec())
            }
            MarginalLayout::Psd { offsets, .. } => {
                let x = primal[0].as_mat();
                let (ni, nj) = (self.z_states(i), self.z_states(j));
                let mut out = Vec::with_capacity(ni * nj);
                for s in 0..ni {
                    for t in 0..nj {
                        out.push(x.get(offsets[i] + s, offsets[j] + t));
                    }
                }
                Some(out)
            }
        }
    }

    /// Assembles the block matrix [Diag(π_k) | π_ij] from marginal tables,
    /// e.g. to check the PSD witness of a candidate family.
    pub fn witness_matrix(
        &self,
        pi_k: &[Vec<f64>],
        pi_ij: &[((usize, usize), Vec<f64>)],
    ) -> crate::matfun::SymMatrix {
        let k = self.x_states.len();
        let sizes: Vec<usize> = (0..k).map(|c| self.z_states(c)).collect();
        let mut offsets = vec![0usize; k];
        for c in 1..k {
            offsets[c] = offsets[c - 1] + sizes[c - 1];
        }
        let total: usize = sizes.iter().sum();
        let mut m = crate::matfun::SymMatrix::zeros(total);
        for (c, pk) in pi_k.iter().enumerate() {
            for (s, &v) in pk.iter().enumerate() {
                m.set(offsets[c] + s, offsets[c] + s, v);
            }
        }
        for ((i, j), table) in pi_ij {
            let nj = sizes[*j];
            for s in 0..sizes[*i] {
                for t in 0..nj {
                    m.set(offsets[*i] + s, offsets[*j] + t, table[s * nj + t]);
                }
            }
        }
        m
    }
}

/// Squared Euclidean cost tables on ±1 spin clusters: 4 × Hamming distance
/// between the cluster states.
pub fn spin_cost_tables(spec: &ClusterSpec) -> Vec<Vec<f64>> {
    let k = spec.k();
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let w = spec.x_clusters[c].len();
        debug_assert_eq!(w, spec.y_clusters[c].len());
        let states = 1usize << w;
        let mut table = vec![0.0; states * states];
        for (xs, row) in table.chunks_mut(states).enumerate() {
            for (ys, v) in row.iter_mut().enumerate() {
                *v = 4.0 * ((xs ^ ys).count_ones() as f64);
            }
        }
        out.push(table);
    }
    out
}

/// Cluster-level marginal data from full coordinate-level measures.
pub fn marginal_data(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    spec: &ClusterSpec,
    ref_graph: &Graph,
) -> Result<MarginalData> {
    if mu.n_axes() != spec.x_dim() || nu.n_axes() != spec.y_dim() {
        return Err(Error::DimensionMismatch(format!(
            "mu has {} axes for {} x-coordinates; nu has {} for {}",
            mu.n_axes(),
            spec.x_dim(),
            nu.n_axes(),
            spec.y_dim()
        )));
    }
    let mu_c = mu.group_axes(&spec.x_clusters)?;
    let nu_c = nu.group_axes(&spec.y_clusters)?;
    let k = spec.k();
    let mut mu_k = Vec::with_capacity(k);
    let mut nu_k = Vec::with_capacity(k);
    for c in 0..k {
        mu_k.push(mu_c.marginalize(&[c])?);
        nu_k.push(nu_c.marginalize(&[c])?);
    }
    let mut mu_ij = Vec::new();
    let mut nu_ij = Vec::new();
    for (i, j) in ref_graph.edges() {
        mu_ij.push(((i, j), mu_c.marginalize(&[i, j])?));
        nu_ij.push(((i, j), nu_c.marginalize(&[i, j])?));
    }
    Ok(MarginalData {
        mu_k,
        nu_k,
        mu_ij,
        nu_ij,
        x_states: mu_c.axes.clone(),
        y_states: nu_c.axes.clone(),
    })
}

/// Builds a marginal relaxation from full measures over the coordinate
/// axes. The per-cluster cost tables c_k are row-major over
/// (x_k-state, y_k-state); the decomposition c = Σ_k c_k is the structural
/// assumption of the whole family.
pub fn build_otmar(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    spec: &ClusterSpec,
    ref_graph: &Graph,
    variant: MarginalVariant,
    cost: &[Vec<f64>],
) -> Result<MarginalAssembly> {
    let data = marginal_data(mu, nu, spec, ref_graph)?;
    build_otmar_from_marginals(&data, ref_graph, variant, cost)
}

/// Same as [`build_otmar`] but from precomputed cluster marginals, for
/// models whose full table is never materialized.
pub fn build_otmar_from_marginals(
    data: &MarginalData,
    ref_graph: &Graph,
    variant: MarginalVariant,
    cost: &[Vec<f64>],
) -> Result<MarginalAssembly> {
    let k = data.x_states.len();
    if ref_graph.n_vertices() != k {
        return Err(Error::DimensionMismatch(format!(
            "reference graph on {} vertices for K={k}",
            ref_graph.n_vertices()
        )));
    }
    if cost.len() != k {
        return Err(Error::CostNotDecomposable(format!(
            "need {k} per-cluster cost tables, got {}",
            cost.len()
        )));
    }
    for c in 0..k {
        if cost[c].len() != data.x_states[c] * data.y_states[c] {
            return Err(Error::CostNotDecomposable(format!(
                "cost table {c} has {} entries, expected {}",
                cost[c].len(),
                data.x_states[c] * data.y_states[c]
            )));
        }
    }

    // With one or two clusters every variant collapses to the exact
    // transport LP: π_12 is then a full coupling of (μ, ν), the block PSD
    // condition holds automatically for genuine couplings, and consistency
    // makes the objective π_12(c). Building the LP directly keeps the
    // one-big-cluster columns of the experiments solvable.
    if k <= 2 {
        return build_lp(data, ref_graph, variant, cost, true);
    }
    match variant {
        MarginalVariant::Lp => build_lp(data, ref_graph, variant, cost, false),
        MarginalVariant::Dnn | MarginalVariant::Psd => {
            build_psd(data, ref_graph, variant, cost)
        }
    }
}

/// z-state index of (x-state, y-state) for cluster k: row-major x-major.
#[inline]
fn z_index(xs: usize, ys: usize, y_states: usize) -> usize {
    xs * y_states + ys
}

fn build_lp(
    data: &MarginalData,
    ref_graph: &Graph,
    variant: MarginalVariant,
    cost: &[Vec<f64>],
    collapsed: bool,
) -> Result<MarginalAssembly> {
    let k = data.x_states.len();
    let mut prog = ConicProgram::new(Vec::new());
    let mut pi_k = Vec::with_capacity(k);
    for c in 0..k {
        let n = data.x_states[c] * data.y_states[c];
        pi_k.push(prog.add_block(format!("pi{c}"), Cone::Nonneg(n)));
    }
    let mut pi_ij = Vec::new();
    for (i, j) in ref_graph.edges() {
        let n = data.x_states[i] * data.y_states[i] * data.x_states[j] * data.y_states[j];
        pi_ij.push(((i, j), prog.add_block(format!("pi{i}_{j}"), Cone::Nonneg(n))));
    }

    // objective Σ_k π_k(c_k)
    for (c, table) in cost.iter().enumerate() {
        for (s, &v) in table.iter().enumerate() {
            if v != 0.0 {
                prog.add_objective(Coeff::vec(pi_k[c], s, v));
            }
        }
    }

    // per-cluster OT marginals: P_x(π_k) = μ_k, P_y(π_k) = ν_k
    for c in 0..k {
        let (nx, ny) = (data.x_states[c], data.y_states[c]);
        for xs in 0..nx {
            let coeffs =
                (0..ny).map(|ys| Coeff::vec(pi_k[c], z_index(xs, ys, ny), 1.0)).collect();
            prog.add_constraint(coeffs, data.mu_k[c].weights[xs], Some("marginal-x"));
        }
        for ys in 0..ny {
            let coeffs =
                (0..nx).map(|xs| Coeff::vec(pi_k[c], z_index(xs, ys, ny), 1.0)).collect();
            prog.add_constraint(coeffs, data.nu_k[c].weights[ys], Some("marginal-y"));
        }
    }

    // per-edge OT marginals and consistency
    for (edge_pos, &((i, j), block)) in pi_ij.iter().enumerate() {
        let (nxi, nyi) = (data.x_states[i], data.y_states[i]);
        let (nxj, nyj) = (data.x_states[j], data.y_states[j]);
        let zi = nxi * nyi;
        let zj = nxj * nyj;
        let zidx = |si: usize, sj: usize| si * zj + sj;
        // P_x(π_ij) = μ_ij over (x_i, x_j)
        let mu_ij = &data.mu_ij[edge_pos].1;
        for xi in 0..nxi {
            for xj in 0..nxj {
                let mut coeffs = Vec::with_capacity(nyi * nyj);
                for yi in 0..nyi {
                    for yj in 0..nyj {
                        coeffs.push(Coeff::vec(
                            block,
                            zidx(z_index(xi, yi, nyi), z_index(xj, yj, nyj)),
                            1.0,
                        ));
                    }
                }
                prog.add_constraint(
                    coeffs,
                    mu_ij.weights[xi * nxj + xj],
                    Some("marginal-x"),
                );
            }
        }
        let nu_ij = &data.nu_ij[edge_pos].1;
        for yi in 0..nyi {
            for yj in 0..nyj {
                let mut coeffs = Vec::with_capacity(nxi * nxj);
                for xi in 0..nxi {
                    for xj in 0..nxj {
                        coeffs.push(Coeff::vec(
                            block,
                            zidx(z_index(xi, yi, nyi), z_index(xj, yj, nyj)),
                            1.0,
                        ));
                    }
                }
                prog.add_constraint(coeffs, nu_ij.weights[yi * nyj + yj], Some("marginal-y"));
            }
        }
        // consistency P_{z_i}(π_ij) = π_i and P_{z_j}(π_ij) = π_j
        for si in 0..zi {
            let mut coeffs: Vec<Coeff> =
                (0..zj).map(|sj| Coeff::vec(block, zidx(si, sj), 1.0)).collect();
            coeffs.push(Coeff::vec(pi_k[i], si, -1.0));
            prog.add_constraint(coeffs, 0.0, Some("consistency"));
        }
        for sj in 0..zj {
            let mut coeffs: Vec<Coeff> =
                (0..zi).map(|si| Coeff::vec(block, zidx(si, sj), 1.0)).collect();
            coeffs.push(Coeff::vec(pi_k[j], sj, -1.0));
            prog.add_constraint(coeffs, 0.0, Some("consistency"));
        }
    }

    let variant_out = if collapsed { variant } else { MarginalVariant::Lp };
    Ok(MarginalAssembly {
        program: prog,
        variant: variant_out,
        ref_graph: ref_graph.clone(),
        x_states: data.x_states.clone(),
        y_states: data.y_states.clone(),
        layout: MarginalLayout::Blocks { pi_k, pi_ij },
    })
}

fn build_psd(
    data: &MarginalData,
    ref_graph: &Graph,
    variant: MarginalVariant,
    cost: &[Vec<f64>],
) -> Result<MarginalAssembly> {
    let k = data.x_states.len();
    let sizes: Vec<usize> = (0..k).map(|c| data.x_states[c] * data.y_states[c]).collect();
    let mut offsets = vec![0usize; k];
    for c in 1..k {
        offsets[c] = offsets[c - 1] + sizes[c - 1];
    }
    let total: usize = sizes.iter().sum();

    let mut prog = ConicProgram::new(Vec::new());
    let psd = prog.add_block("M", Cone::Psd(total));
    // entrywise nonnegativity through a linked nonnegative copy of the
    // diagonal-block diagonals and the cross blocks
    let nonneg_block = if variant == MarginalVariant::Dnn {
        let live: usize = total
            + (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .map(|(i, j)| sizes[i] * sizes[j])
                .sum::<usize>();
        Some(prog.add_block("nonneg", Cone::Nonneg(live)))
    } else {
        None
    };

    // objective on the diagonal entries
    for (c, table) in cost.iter().enumerate() {
        for (s, &v) in table.iter().enumerate() {
            if v != 0.0 {
                prog.add_objective(Coeff::mat(psd, offsets[c] + s, offsets[c] + s, v));
            }
        }
    }

    // off-diagonal entries of the diagonal blocks vanish
    for c in 0..k {
        for s in 0..sizes[c] {
            for t in 0..s {
                prog.add_constraint(
                    vec![Coeff::mat(psd, offsets[c] + s, offsets[c] + t, 1.0)],
                    0.0,
                    Some("diag-structure"),
                );
            }
        }
    }

    // per-cluster OT marginals on the diagonal
    for c in 0..k {
        let (nx, ny) = (data.x_states[c], data.y_states[c]);
        for xs in 0..nx {
            let coeffs = (0..ny)
                .map(|ys| {
                    let s = offsets[c] + z_index(xs, ys, ny);
                    Coeff::mat(psd, s, s, 1.0)
                })
                .collect();
            prog.add_constraint(coeffs, data.mu_k[c].weights[xs], Some("marginal-x"));
        }
        for ys in 0..ny {
            let coeffs = (0..nx)
                .map(|xs| {
                    let s = offsets[c] + z_index(xs, ys, ny);
                    Coeff::mat(psd, s, s, 1.0)
                })
                .collect();
            prog.add_constraint(coeffs, data.nu_k[c].weights[ys], Some("marginal-y"));
        }
    }

    // per-edge OT marginals on the cross blocks
    for (pos, &((i, j), _)) in data.mu_ij.iter().map(|e| (e, ())).enumerate().map(|(p, (e, _))| (p, e)) {
        let (nxi, nyi) = (data.x_states[i], data.y_states[i]);
        let (nxj, nyj) = (data.x_states[j], data.y_states[j]);
        let mu_ij = &data.mu_ij[pos].1;
        for xi in 0..nxi {
            for xj in 0..nxj {
                let mut coeffs = Vec::with_capacity(nyi * nyj);
                for yi in 0..nyi {
                    for yj in 0..nyj {
                        coeffs.push(Coeff::mat(
                            psd,
                            offsets[i] + z_index(xi, yi, nyi),
                            offsets[j] + z_index(xj, yj, nyj),
                            1.0,
                        ));
                    }
                }
                prog.add_constraint(coeffs, mu_ij.weights[xi * nxj + xj], Some("marginal-x"));
            }
        }
        let nu_ij = &data.nu_ij[pos].1;
        for yi in 0..nyi {
            for yj in 0..nyj {
                let mut coeffs = Vec::with_capacity(nxi * nxj);
                for xi in 0..nxi {
                    for xj in 0..nxj {
                        coeffs.push(Coeff::mat(
                            psd,
                            offsets[i] + z_index(xi, yi, nyi),
                            offsets[j] + z_index(xj, yj, nyj),
                            1.0,
                        ));
                    }
                }
                prog.add_constraint(coeffs, nu_ij.weights[yi * nyj + yj], Some("marginal-y"));
            }
        }
    }

    // consistency for every pair ij ∈ [K]₂: row/column sums of the cross
    // block match the diagonals
    for i in 0..k {
        for j in i + 1..k {
            for si in 0..sizes[i] {
                let mut coeffs: Vec<Coeff> = (0..sizes[j])
                    .map(|sj| Coeff::mat(psd, offsets[i] + si, offsets[j] + sj, 1.0))
                    .collect();
                coeffs.push(Coeff::mat(psd, offsets[i] + si, offsets[i] + si, -1.0));
                prog.add_constraint(coeffs, 0.0, Some("consistency"));
            }
            for sj in 0..sizes[j] {
                let mut coeffs: Vec<Coeff> = (0..sizes[i])
                    .map(|si| Coeff::mat(psd, offsets[i] + si, offsets[j] + sj, 1.0))
                    .collect();
                coeffs.push(Coeff::mat(psd, offsets[j] + sj, offsets[j] + sj, -1.0));
                prog.add_constraint(coeffs, 0.0, Some("consistency"));
            }
        }
    }

    // nonnegativity links for the doubly nonnegative variant
    if let Some(nb) = nonneg_block {
        let mut idx = 0usize;
        for c in 0..k {
            for s in 0..sizes[c] {
                prog.add_constraint(
                    vec![
                        Coeff::mat(psd, offsets[c] + s, offsets[c] + s, 1.0),
                        Coeff::vec(nb, idx, -1.0),
                    ],
                    0.0,
                    Some("dnn-link"),
                );
                idx += 1;
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                for si in 0..sizes[i] {
                    for sj in 0..sizes[j] {
                        prog.add_constraint(
                            vec![
                                Coeff::mat(psd, offsets[i] + si, offsets[j] + sj, 1.0),
                                Coeff::vec(nb, idx, -1.0),
                            ],
                            0.0,
                            Some("dnn-link"),
                        );
                        idx += 1;
                    }
                }
            }
        }
    }

    Ok(MarginalAssembly {
        program: prog,
        variant,
        ref_graph: ref_graph.clone(),
        x_states: data.x_states.clone(),
        y_states: data.y_states.clone(),
        layout: MarginalLayout::Psd { offsets, nonneg_block },
    })
}

/// Closed-form variable counts of the relaxations for uniform per-cluster
/// state size r (counting distinct coupling entries).
pub fn variable_count(
    spec: &ClusterSpec,
    ref_graph: &Graph,
    variant: MarginalVariant,
    r: usize,
) -> usize {
    let k = spec.k();
    if k == 1 {
        return r * r;
    }
    let pair_vars = r.pow(4);
    let single_vars = r * r;
    match variant {
        MarginalVariant::Lp => ref_graph.n_edges() * pair_vars + k * single_vars,
        MarginalVariant::Dnn | MarginalVariant::Psd => {
            k * (k - 1) / 2 * pair_vars + k * single_vars
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{exact_discrete_ot, solve, SolveOptions, Status};
    use crate::models::{ising_clusters, ising_measure, IsingParams};

    /// Exact OT between two Ising tables with the squared spin cost, via
    /// network simplex on the full state space.
    fn exact_spin_ot(mu: &DiscreteMeasure, nu: &DiscreteMeasure, d: usize) -> f64 {
        let n = 1usize << d;
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..n).map(|b| 4.0 * ((a ^ b).count_ones() as f64)).collect())
            .collect();
        let (value, _) = exact_discrete_ot(&cost, &mu.weights, &nu.weights).unwrap();
        value
    }

    fn ising_pair(d: usize) -> (DiscreteMeasure, DiscreteMeasure) {
        let mu = ising_measure(&IsingParams::new(1.0, 0.2, 0.6, d).unwrap()).unwrap();
        let nu = ising_measure(&IsingParams::new(-0.7, 0.1, 0.5, d).unwrap()).unwrap();
        (mu, nu)
    }

    #[test]
    fn single_cluster_reduces_to_exact_lp() {
        let d = 3;
        let (mu, nu) = ising_pair(d);
        let exact = exact_spin_ot(&mu, &nu, d);
        let spec = ising_clusters(d, d).unwrap();
        let cost = spin_cost_tables(&spec);
        for variant in [MarginalVariant::Lp, MarginalVariant::Dnn, MarginalVariant::Psd] {
            let asm =
                build_otmar(&mu, &nu, &spec, &Graph::complete(1), variant, &cost).unwrap();
            let sol = solve(&asm.program, &SolveOptions::with_tol(1e-9)).unwrap();
            assert_eq!(sol.status, Status::Optimal);
            assert!(
                (sol.objective - exact).abs() < 1e-6 * (1.0 + exact),
                "{variant:?}: {} vs exact {exact}",
                sol.objective
            );
        }
    }

    #[test]
    fn identical_marginals_have_zero_cost() {
        let d = 4;
        let mu = ising_measure(&IsingParams::new(0.8, -0.1, 0.4, d).unwrap()).unwrap();
        let spec = ising_clusters(d, 2).unwrap();
        let cost = spin_cost_tables(&spec);
        let g = Graph::path(spec.k());
        for variant in [MarginalVariant::Lp, MarginalVariant::Dnn] {
            let asm = build_otmar(&mu, &mu, &spec, &g, variant, &cost).unwrap();
            let sol = solve(&asm.program, &SolveOptions::with_tol(1e-8)).unwrap();
            assert!(sol.objective.abs() < 1e-6, "{variant:?}: {}", sol.objective);
        }
    }

    #[test]
    fn sandwich_and_monotonicity_in_omega() {
        let d = 4;
        let (mu, nu) = ising_pair(d);
        let exact = exact_spin_ot(&mu, &nu, d);
        let mut last_lp = f64::NEG_INFINITY;
        for omega in 1..=d {
            let spec = ising_clusters(d, omega).unwrap();
            let cost = spin_cost_tables(&spec);
            let g = Graph::path(spec.k());
            let lp = {
                let asm =
                    build_otmar(&mu, &nu, &spec, &g, MarginalVariant::Lp, &cost).unwrap();
                solve(&asm.program, &SolveOptions::with_tol(1e-9)).unwrap().objective
            };
            let dnn = {
                let asm =
                    build_otmar(&mu, &nu, &spec, &g, MarginalVariant::Dnn, &cost).unwrap();
                solve(&asm.program, &SolveOptions::with_tol(1e-9)).unwrap().objective
            };
            assert!(lp <= dnn + 1e-6, "omega={omega}: lp {lp} > dnn {dnn}");
            assert!(dnn <= exact + 1e-7, "omega={omega}: dnn {dnn} > exact {exact}");
            assert!(lp >= last_lp - 1e-6, "omega={omega}: lp not monotone");
            last_lp = lp;
            if omega == d {
                assert!((lp - exact).abs() < 1e-7 * (1.0 + exact));
                assert!((dnn - exact).abs() < 1e-7 * (1.0 + exact));
            }
        }
    }

    #[test]
    fn variant_ordering_lp_psd_dnn() {
        let d = 4;
        let (mu, nu) = ising_pair(d);
        let spec = ising_clusters(d, 1).unwrap();
        let cost = spin_cost_tables(&spec);
        let g = Graph::path(spec.k());
        let value = |variant| {
            let asm = build_otmar(&mu, &nu, &spec, &g, variant, &cost).unwrap();
            let sol = solve(&asm.program, &SolveOptions::with_tol(1e-9)).unwrap();
            assert_eq!(sol.status, Status::Optimal, "{variant:?}");
            sol.objective
        };
        let lp = value(MarginalVariant::Lp);
        let dnn = value(MarginalVariant::Dnn);
        let psd = value(MarginalVariant::Psd);
        let exact = exact_spin_ot(&mu, &nu, d);
        assert!(lp <= dnn + 1e-6, "lp {lp} dnn {dnn}");
        assert!(psd <= dnn + 1e-6, "psd {psd} dnn {dnn}");
        assert!(dnn <= exact + 1e-7);
    }

    #[test]
    fn edge_monotonicity() {
        let d = 4;
        let (mu, nu) = ising_pair(d);
        let spec = ising_clusters(d, 1).unwrap();
        let cost = spin_cost_tables(&spec);
        let sparse = Graph::path(4);
        let dense = Graph::complete(4);
        for variant in [MarginalVariant::Lp, MarginalVariant::Dnn] {
            let v_sparse = {
                let asm = build_otmar(&mu, &nu, &spec, &sparse, variant, &cost).unwrap();
                solve(&asm.program, &SolveOptions::with_tol(1e-9)).unwrap().objective
            };
            let v_dense = {
                let asm = build_otmar(&mu, &nu, &spec, &dense, variant, &cost).unwrap();
                solve(&asm.program, &SolveOptions::with_tol(1e-9)).unwrap().objective
            };
            assert!(
                v_dense >= v_sparse - 1e-6,
                "{variant:?}: dense {v_dense} < sparse {v_sparse}"
            );
        }
    }

    #[test]
    fn exact_coupling_marginals_are_feasible() {
        // marginalize the exact optimal plan and check every constraint
        let d = 3;
        let (mu, nu) = ising_pair(d);
        let n = 1usize << d;
        let cost_full: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..n).map(|b| 4.0 * ((a ^ b).count_ones() as f64)).collect())
            .collect();
        let (_, plan) = exact_discrete_ot(&cost_full, &mu.weights, &nu.weights).unwrap();
        // joint measure over (x1..x3, y1..y3)
        let mut joint_w = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                joint_w[a * n + b] = plan[a][b];
            }
        }
        let joint =
            DiscreteMeasure::from_unnormalized(vec![2, 2, 2, 2, 2, 2], joint_w).unwrap();
        let spec = ising_clusters(d, 1).unwrap();
        let cost = spin_cost_tables(&spec);
        let g = Graph::path(3);
        for variant in [MarginalVariant::Lp, MarginalVariant::Dnn, MarginalVariant::Psd] {
            let asm = build_otmar(&mu, &nu, &spec, &g, variant, &cost).unwrap();
            // assemble candidate: z_k = (x_k, y_k) -> axes (k, 3+k)
            let mut pi_k = Vec::new();
            for c in 0..3 {
                let m = joint.marginalize(&[c, 3 + c]).unwrap();
                pi_k.push(m.weights);
            }
            let mut pi_ij = Vec::new();
            for i in 0..3 {
                for j in i + 1..3 {
                    // marginalize sorts kept axes to (x_i, x_j, y_i, y_j);
                    // regroup into z_i = (x_i, y_i), z_j = (x_j, y_j)
                    let m = joint
                        .marginalize(&[i, 3 + i, j, 3 + j])
                        .unwrap()
                        .group_axes(&[vec![0, 2], vec![1, 3]])
                        .unwrap();
                    pi_ij.push(((i, j), m.weights));
                }
            }
            let candidate = assemble_candidate(&asm, &pi_k, &pi_ij);
            let viol = asm.program.max_constraint_violation(&candidate);
            assert!(viol < 1e-9, "{variant:?}: violation {viol}");
            // PSD witness of the exact coupling's marginals
            let w = asm.witness_matrix(&pi_k, &pi_ij);
            let min = crate::matfun::min_eigenvalue(&w).unwrap();
            assert!(min >= -1e-9, "witness eigenvalue {min}");
        }
    }

    /// Builds primal block values realizing the given marginal family.
    fn assemble_candidate(
        asm: &MarginalAssembly,
        pi_k: &[Vec<f64>],
        pi_ij: &[((usize, usize), Vec<f64>)],
    ) -> Vec<BlockValue> {
        let mut values: Vec<BlockValue> =
            asm.program.blocks.iter().map(|b| BlockValue::zero_of(b.cone)).collect();
        match &asm.layout {
            MarginalLayout::Blocks { pi_k: kb, pi_ij: ijb } => {
                for (c, w) in pi_k.iter().enumerate() {
                    values[kb[c]] = BlockValue::Vec(w.clone());
                }
                for ((i, j), b) in ijb {
                    let w = pi_ij
                        .iter()
                        .find(|((a, c), _)| (a, c) == (i, j))
                        .map(|(_, w)| w.clone())
                        .unwrap();
                    values[*b] = BlockValue::Vec(w);
                }
            }
            MarginalLayout::Psd { offsets, nonneg_block } => {
                let mut m = asm.witness_matrix(pi_k, pi_ij);
                let dim = m.dim();
                let _ = dim;
                values[0] = BlockValue::Mat(m.clone());
                if let Some(nb) = nonneg_block {
                    let k = asm.x_states.len();
                    let mut flat = Vec::new();
                    for c in 0..k {
                        for s in 0..asm.z_states(c) {
                            flat.push(m.get(offsets[c] + s, offsets[c] + s));
                        }
                    }
                    for i in 0..k {
                        for j in i + 1..k {
                            for si in 0..asm.z_states(i) {
                                for sj in 0..asm.z_states(j) {
                                    flat.push(m.get(offsets[i] + si, offsets[j] + sj));
                                }
                            }
                        }
                    }
                    values[*nb] = BlockValue::Vec(flat);
                }
                let _ = &mut m;
            }
        }
        values
    }

    #[test]
    fn variable_count_formulas() {
        let spec = ising_clusters(2, 1).unwrap();
        // d=2, r=2: complete graph dnn: 16*1 + 4*2 = 24
        assert_eq!(
            variable_count(&spec, &Graph::complete(2), MarginalVariant::Dnn, 2),
            24
        );
        // path graph lp with K=d: r^4 (d-1) + r^2 d
        let spec5 = ising_clusters(5, 1).unwrap();
        assert_eq!(
            variable_count(&spec5, &Graph::path(5), MarginalVariant::Lp, 2),
            16 * 4 + 4 * 5
        );
        // K=1: one joint coupling
        let spec1 = ising_clusters(3, 3).unwrap();
        assert_eq!(
            variable_count(&spec1, &Graph::complete(1), MarginalVariant::Dnn, 8),
            64
        );
    }

    #[test]
    fn psd_witness_of_solutions() {
        let d = 3;
        let (mu, nu) = ising_pair(d);
        let spec = ising_clusters(d, 1).unwrap();
        let cost = spin_cost_tables(&spec);
        let g = Graph::path(3);
        for variant in [MarginalVariant::Dnn, MarginalVariant::Psd] {
            let asm = build_otmar(&mu, &nu, &spec, &g, variant, &cost).unwrap();
            let sol = solve(&asm.program, &SolveOptions::with_tol(1e-8)).unwrap();
            assert_eq!(sol.status, Status::Optimal);
            let pi_k: Vec<Vec<f64>> = (0..3).map(|c| asm.read_pi_k(&sol.primal, c)).collect();
            let mut pi_ij = Vec::new();
            for i in 0..3 {
                for j in i + 1..3 {
                    if let Some(t) = asm.read_pi_ij(&sol.primal, i, j) {
                        pi_ij.push(((i, j), t));
                    }
                }
            }
            let w = asm.witness_matrix(&pi_k, &pi_ij);
            let min = crate::matfun::min_eigenvalue(&w).unwrap();
            assert!(min >= -1e-7, "{variant:?}: witness min eigenvalue {min}");
        }
    }
}
