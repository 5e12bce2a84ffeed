//! Entropic-regularization baseline for discrete optimal transport.
//!
//! The entropy parameter is `eps_scale` times the mean of the cost matrix.
//! Iterations run in the linear domain while the kernel stays representable
//! and switch to log-domain (logsumexp) scaling otherwise. The returned
//! plan is rounded onto the transport polytope, so the reported value is
//! always an upper bound on the exact optimum.

use crate::error::{Error, Result};

const MAX_ITER: usize = 200_000;

/// Entropic OT value for cost matrix `cost` and marginals `p`, `q`.
///
/// `eps_scale` sets the entropy parameter relative to the mean cost;
/// `tol` is the L1 marginal tolerance of the fixed-point iteration.
pub fn sinkhorn(
    cost: &[Vec<f64>],
    p: &[f64],
    q: &[f64],
    eps_scale: f64,
    tol: f64,
) -> Result<f64> {
    let (value, _) = sinkhorn_plan(cost, p, q, eps_scale, tol)?;
    Ok(value)
}

/// Same as [`sinkhorn`] but also returns the rounded plan.
pub fn sinkhorn_plan(
    cost: &[Vec<f64>],
    p: &[f64],
    q: &[f64],
    eps_scale: f64,
    tol: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = p.len();
    let m = q.len();
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch(format!("cost must be {n}x{m}")));
    }
    if eps_scale <= 0.0 {
        return Err(Error::InvalidConfig("eps_scale must be positive".into()));
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if (sp - 1.0).abs() > 1e-12 || (sq - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidMeasure("marginals must sum to one".into()));
    }

    // Zero-mass rows and columns are dropped and reinserted afterwards.
    let rows: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| q[j] > 0.0).collect();
    let pr: Vec<f64> = rows.iter().map(|&i| p[i]).collect();
    let qr: Vec<f64> = cols.iter().map(|&j| q[j]).collect();
    let cr: Vec<Vec<f64>> =
        rows.iter().map(|&i| cols.iter().map(|&j| cost[i][j]).collect()).collect();

    let nn = pr.len();
    let mm = qr.len();
    let mean_cost =
        cr.iter().flatten().map(|v| v.abs()).sum::<f64>() / ((nn * mm) as f64).max(1.0);
    let eps = eps_scale * mean_cost.max(1e-300);
    let max_cost = cr.iter().flatten().fold(0.0_f64, |a, &c| a.max(c.abs()));

    // exp(-max_cost/eps) underflowing below 1e-300 forces log-domain.
    let plan_small = if max_cost / eps < 650.0 {
        sinkhorn_linear(&cr, &pr, &qr, eps, tol)
    } else {
        sinkhorn_log(&cr, &pr, &qr, eps, tol)
    }?;

    // Round onto the transport polytope so the value is exactly feasible.
    let plan_small = round_to_polytope(plan_small, &pr, &qr);

    let mut plan = vec![vec![0.0; m]; n];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            plan[i][j] = plan_small[a][b];
        }
    }
    let value = (0..n).map(|i| (0..m).map(|j| plan[i][j] * cost[i][j]).sum::<f64>()).sum();
    Ok((value, plan))
}

fn sinkhorn_linear(
    cost: &[Vec<f64>],
    p: &[f64],
    q: &[f64],
    eps: f64,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = p.len();
    let m = q.len();
    let kernel: Vec<Vec<f64>> =
        cost.iter().map(|row| row.iter().map(|c| (-c / eps).exp()).collect()).collect();
    let mut u = vec![1.0f64; n];
    let mut v = vec![1.0f64; m];
    for iter in 0..MAX_ITER {
        for i in 0..n {
            let s: f64 = (0..m).map(|j| kernel[i][j] * v[j]).sum();
            if s < 1e-290 || !s.is_finite() {
                // scaling factors degenerating: retry in log domain
                return sinkhorn_log(cost, p, q, eps, tol);
            }
            u[i] = p[i] / s;
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| kernel[i][j] * u[i]).sum();
            if s < 1e-290 || !s.is_finite() {
                return sinkhorn_log(cost, p, q, eps, tol);
            }
            v[j] = q[j] / s;
        }
        if iter % 10 == 9 {
            // rows are exact after the u-update cycle; check row error of
            // the current scaling
            let mut err = 0.0;
            for i in 0..n {
                let s: f64 = (0..m).map(|j| u[i] * kernel[i][j] * v[j]).sum();
                err += (s - p[i]).abs();
            }
            if err <= tol {
                break;
            }
        }
    }
    Ok((0..n).map(|i| (0..m).map(|j| u[i] * kernel[i][j] * v[j]).collect()).collect())
}

fn sinkhorn_log(
    cost: &[Vec<f64>],
    p: &[f64],
    q: &[f64],
    eps: f64,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = p.len();
    let m = q.len();
    let logp: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let logq: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let lse = |terms: &mut dyn Iterator<Item = f64>| -> f64 {
        let vals: Vec<f64> = terms.collect();
        let mx = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if !mx.is_finite() {
            return mx;
        }
        mx + vals.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
    };
    for iter in 0..MAX_ITER {
        for i in 0..n {
            let s = lse(&mut (0..m).map(|j| (g[j] - cost[i][j]) / eps));
            f[i] = eps * (logp[i] - s);
        }
        for j in 0..m {
            let s = lse(&mut (0..n).map(|i| (f[i] - cost[i][j]) / eps));
            g[j] = eps * (logq[j] - s);
        }
        if iter % 5 == 4 {
            let mut err = 0.0;
            for i in 0..n {
                let s: f64 =
                    (0..m).map(|j| ((f[i] + g[j] - cost[i][j]) / eps).exp()).sum();
                err += (s - p[i]).abs();
            }
            if err <= tol {
                break;
            }
        }
    }
    Ok((0..n)
        .map(|i| (0..m).map(|j| ((f[i] + g[j] - cost[i][j]) / eps).exp()).collect())
        .collect())
}

/// Rounds an approximately feasible plan onto the transport polytope
/// (row/column scaling down, then a rank-one fill of the deficiency).
fn round_to_polytope(mut plan: Vec<Vec<f64>>, p: &[f64], q: &[f64]) -> Vec<Vec<f64>> {
    let n = p.len();
    let m = q.len();
    for i in 0..n {
        let rs: f64 = plan[i].iter().sum();
        if rs > p[i] && rs > 0.0 {
            let r = p[i] / rs;
            for v in &mut plan[i] {
                *v *= r;
            }
        }
    }
    for j in 0..m {
        let cs: f64 = (0..n).map(|i| plan[i][j]).sum();
        if cs > q[j] && cs > 0.0 {
            let r = q[j] / cs;
            for i in 0..n {
                plan[i][j] *= r;
            }
        }
    }
    let def_p: Vec<f64> =
        (0..n).map(|i| (p[i] - plan[i].iter().sum::<f64>()).max(0.0)).collect();
    let def_q: Vec<f64> =
        (0..m).map(|j| (q[j] - (0..n).map(|i| plan[i][j]).sum::<f64>()).max(0.0)).collect();
    let total: f64 = def_p.iter().sum();
    if total > 1e-300 {
        for i in 0..n {
            for j in 0..m {
                plan[i][j] += def_p[i] * def_q[j] / total;
            }
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::simplex::exact_discrete_ot;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_diagonal_small_eps_goes_to_zero() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let p = [0.4, 0.6];
        let v = sinkhorn(&cost, &p, &p, 1e-3, 1e-6).unwrap();
        assert!(v < 1e-3, "value {v}");
    }

    #[test]
    fn large_eps_approaches_product_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cost: Vec<Vec<f64>> =
            (0..3).map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let p = [0.2, 0.3, 0.5];
        let q = [0.5, 0.2, 0.3];
        let v = sinkhorn(&cost, &p, &q, 1e4, 1e-10).unwrap();
        let product: f64 = (0..3)
            .map(|i| (0..3).map(|j| p[i] * q[j] * cost[i][j]).sum::<f64>())
            .sum();
        assert!((v - product).abs() < 1e-4, "value {v} vs product {product}");
    }

    #[test]
    fn bracketed_by_exact_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let n = 10;
            let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
            let s: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= s);
            let pts_x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let pts_y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cost: Vec<Vec<f64>> = pts_x
                .iter()
                .map(|x| pts_y.iter().map(|y| (x - y) * (x - y)).collect())
                .collect();
            let (exact, _) = exact_discrete_ot(&cost, &p, &q).unwrap();
            let v = sinkhorn(&cost, &p, &q, 0.01, 1e-4).unwrap();
            assert!(v >= exact - 1e-6, "sinkhorn {v} below exact {exact}");
            assert!(v <= exact.max(1e-12) * 1.05 + 1e-9, "sinkhorn {v} vs exact {exact}");
        }
    }

    #[test]
    fn monotone_in_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let p = vec![1.0 / n as f64; n];
        let cost: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.0..2.0)).collect()).collect();
        let mut last = f64::INFINITY;
        for eps_scale in [1.0, 0.3, 0.1, 0.03, 0.01] {
            let v = sinkhorn(&cost, &p, &p, eps_scale, 1e-6).unwrap();
            assert!(v <= last + 1e-5, "not monotone at {eps_scale}: {v} > {last}");
            last = v;
        }
    }

    #[test]
    fn log_domain_handles_peaked_costs() {
        // max cost / eps far beyond linear-domain range
        let cost = vec![vec![0.0, 5000.0], vec![5000.0, 0.0]];
        let p = [0.5, 0.5];
        let v = sinkhorn(&cost, &p, &p, 1e-3, 1e-8).unwrap();
        assert!(v.abs() < 1e-6);
    }

    #[test]
    fn zero_mass_rows_are_tolerated() {
        let cost = vec![vec![1.0, 2.0], vec![3.0, 0.5], vec![2.0, 2.0]];
        let p = [0.5, 0.0, 0.5];
        let q = [0.5, 0.5];
        let v = sinkhorn(&cost, &p, &q, 0.05, 1e-6).unwrap();
        let (exact, _) = exact_discrete_ot(&cost, &p, &q).unwrap();
        assert!(v >= exact - 1e-9);
    }
}
