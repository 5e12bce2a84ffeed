//! Exact discrete optimal transport by the network simplex method on the
//! bipartite transportation graph.
//!
//! Entering arc: lowest-index arc with negative reduced cost; leaving arc:
//! lowest-index minimizer of the ratio test (Bland's rule on both ends, so
//! the pivoting is deterministic and never cycles).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct BasisCell {
    i: usize,
    j: usize,
    flow: f64,
}

/// Exact optimal transport between two finite distributions.
///
/// Returns the optimal cost and the optimal plan (row sums `p`, column sums
/// `q` within 1e-9). `cost` is row-major `n × m`.
pub fn exact_discrete_ot(
    cost: &[Vec<f64>],
    p: &[f64],
    q: &[f64],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = p.len();
    let m = q.len();
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch(format!(
            "cost must be {n}x{m} to match the marginals"
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidMeasure("empty marginal".into()));
    }
    for &v in p.iter().chain(q.iter()) {
        if v < -1e-14 || !v.is_finite() {
            return Err(Error::InvalidMeasure("marginals must be nonnegative".into()));
        }
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if (sp - 1.0).abs() > 1e-12 || (sq - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidMeasure(format!(
            "marginal sum mismatch: sum(p)={sp:.15}, sum(q)={sq:.15}"
        )));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidMeasure("cost must be finite".into()));
    }

    // Northwest-corner starting basis: always n + m - 1 cells.
    let mut basis: Vec<BasisCell> = Vec::with_capacity(n + m - 1);
    {
        let (mut i, mut j) = (0usize, 0usize);
        let mut a = p[0];
        let mut b = q[0];
        loop {
            let t = a.min(b).max(0.0);
            basis.push(BasisCell { i, j, flow: t });
            if i == n - 1 && j == m - 1 {
                break;
            }
            if (a <= b && i < n - 1) || j == m - 1 {
                a = p[i + 1];
                b -= t;
                i += 1;
            } else {
                b = q[j + 1];
                a -= t;
                j += 1;
            }
        }
    }

    let cost_scale = cost.iter().flatten().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    let pivot_tol = 1e-12 * (1.0 + cost_scale);

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; m];
    loop {
        compute_potentials(&basis, cost, &mut u, &mut v, n, m);

        // Entering arc: first cell (row-major) with negative reduced cost.
        let mut entering: Option<(usize, usize)> = None;
        'scan: for i in 0..n {
            for j in 0..m {
                if cost[i][j] - u[i] - v[j] < -pivot_tol {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        // Tree path from source ei to sink ej; alternating signs along the
        // cycle, entering cell positive.
        let path = tree_path(&basis, ei, n + ej, n, m);
        let mut theta = f64::INFINITY;
        let mut leaving: Option<usize> = None;
        for (step, &cell_idx) in path.iter().enumerate() {
            if step % 2 == 0 {
                // cells with negative orientation in the cycle
                let f = basis[cell_idx].flow;
                let better = match leaving {
                    None => true,
                    Some(lv) => {
                        f < theta - 1e-15
                            || (f <= theta + 1e-15
                                && (basis[cell_idx].i, basis[cell_idx].j)
                                    < (basis[lv].i, basis[lv].j))
                    }
                };
                if better {
                    theta = f;
                    leaving = Some(cell_idx);
                }
            }
        }
        let leaving = leaving.expect("cycle must contain a leaving arc");
        let theta = theta.max(0.0);
        for (step, &cell_idx) in path.iter().enumerate() {
            if step % 2 == 0 {
                basis[cell_idx].flow = (basis[cell_idx].flow - theta).max(0.0);
            } else {
                basis[cell_idx].flow += theta;
            }
        }
        basis[leaving] = BasisCell { i: ei, j: ej, flow: theta };
    }

    let mut plan = vec![vec![0.0; m]; n];
    for c in &basis {
        plan[c.i][c.j] += c.flow;
    }
    let value = basis.iter().map(|c| c.flow * cost[c.i][c.j]).sum();
    Ok((value, plan))
}

/// Dual potentials from the spanning-tree basis, rooted at source 0.
fn compute_potentials(
    basis: &[BasisCell],
    cost: &[Vec<f64>],
    u: &mut [f64],
    v: &mut [f64],
    n: usize,
    m: usize,
) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + m];
    for (idx, c) in basis.iter().enumerate() {
        adj[c.i].push(idx);
        adj[n + c.j].push(idx);
    }
    let mut known = vec![false; n + m];
    known[0] = true;
    u[0] = 0.0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        for &idx in &adj[node] {
            let c = &basis[idx];
            let (src, snk) = (c.i, n + c.j);
            if node == src && !known[snk] {
                v[c.j] = cost[c.i][c.j] - u[c.i];
                known[snk] = true;
                queue.push_back(snk);
            } else if node == snk && !known[src] {
                u[c.i] = cost[c.i][c.j] - v[c.j];
                known[src] = true;
                queue.push_back(src);
            }
        }
    }
}

/// Basis-cell indices along the unique tree path from `from` to `to`
/// (nodes 0..n are sources, n..n+m sinks).
fn tree_path(basis: &[BasisCell], from: usize, to: usize, n: usize, m: usize) -> Vec<usize> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + m];
    for (idx, c) in basis.iter().enumerate() {
        adj[c.i].push((n + c.j, idx));
        adj[n + c.j].push((c.i, idx));
    }
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n + m];
    let mut seen = vec![false; n + m];
    seen[to] = true;
    let mut queue = std::collections::VecDeque::from([to]);
    while let Some(node) = queue.pop_front() {
        if node == from {
            break;
        }
        for &(next, idx) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                prev[next] = Some((node, idx));
                queue.push_back(next);
            }
        }
    }
    // Walk from `from` back to `to`; the cells come out in cycle order
    // starting adjacent to the entering arc's source.
    let mut path = Vec::new();
    let mut node = from;
    while let Some((parent, idx)) = prev[node] {
        path.push(idx);
        node = parent;
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirac_to_dirac() {
        let (value, plan) = exact_discrete_ot(&[vec![2.0]], &[1.0], &[1.0]).unwrap();
        assert_eq!(value, 2.0);
        assert_eq!(plan[0][0], 1.0);
    }

    #[test]
    fn two_point_identity() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let (value, plan) = exact_discrete_ot(&cost, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(value.abs() < 1e-15);
        assert!((plan[0][0] - 0.5).abs() < 1e-15);
        assert!((plan[1][1] - 0.5).abs() < 1e-15);
        assert!(plan[0][1].abs() < 1e-15);
    }

    #[test]
    fn uniform_3x3_matches_birkhoff_enumeration() {
        // With uniform marginals the optimum is attained at a permutation
        // matrix scaled by 1/3; enumerate all 6 as the oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let perms: [[usize; 3]; 6] =
            [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for _ in 0..20 {
            let cost: Vec<Vec<f64>> =
                (0..3).map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            let third = 1.0 / 3.0;
            let (value, plan) =
                exact_discrete_ot(&cost, &[third; 3], &[third; 3]).unwrap();
            let oracle = perms
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j] * third).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((value - oracle).abs() < 1e-12, "value {value} vs oracle {oracle}");
            for (i, row) in plan.iter().enumerate() {
                let rs: f64 = row.iter().sum();
                assert!((rs - third).abs() < 1e-9, "row {i}");
            }
        }
    }

    #[test]
    fn random_rectangular_marginals_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = rng.gen_range(2..9);
            let m = rng.gen_range(2..9);
            let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let mut q: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
            let sp: f64 = p.iter().sum();
            let sq: f64 = q.iter().sum();
            p.iter_mut().for_each(|v| *v /= sp);
            q.iter_mut().for_each(|v| *v /= sq);
            let cost: Vec<Vec<f64>> =
                (0..n).map(|_| (0..m).map(|_| rng.gen_range(0.0..5.0)).collect()).collect();
            let (value, plan) = exact_discrete_ot(&cost, &p, &q).unwrap();
            for i in 0..n {
                let rs: f64 = plan[i].iter().sum();
                assert!((rs - p[i]).abs() < 1e-9);
            }
            for j in 0..m {
                let cs: f64 = (0..n).map(|i| plan[i][j]).sum();
                assert!((cs - q[j]).abs() < 1e-9);
            }
            assert!(plan.iter().flatten().all(|&x| x >= 0.0));
            // value is consistent with the plan
            let direct: f64 =
                (0..n).map(|i| (0..m).map(|j| plan[i][j] * cost[i][j]).sum::<f64>()).sum();
            assert!((value - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 5;
        let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let q = p.clone();
        let cost: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
        let (v1, _) = exact_discrete_ot(&cost, &p, &q).unwrap();
        // permute rows and columns simultaneously
        let perm = [3usize, 0, 4, 1, 2];
        let pc: Vec<Vec<f64>> =
            perm.iter().map(|&i| perm.iter().map(|&j| cost[i][j]).collect()).collect();
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let pq: Vec<f64> = perm.iter().map(|&j| q[j]).collect();
        let (v2, _) = exact_discrete_ot(&pc, &pp, &pq).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn rejects_marginal_mismatch() {
        assert!(exact_discrete_ot(&[vec![1.0]], &[0.9], &[1.0]).is_err());
    }
}
