use otrelax::conic::{solve, SolveOptions};
use otrelax::gaussian::*;
use otrelax::graph::{graph_power, Graph};
use otrelax::matfun::{sym_eig, SymMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

fn tridiag_instance(d: usize, coupling: f64, seed: u64) -> GaussianInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covs = Vec::new();
    for _ in 0..2 {
        let mut prec = SymMatrix::zeros(d);
        for i in 0..d {
            prec.set(i, i, 1.0);
        }
        for i in 0..d - 1 {
            let v: f64 = rng.sample::<f64, _>(StandardNormal);
            prec.set(i, i + 1, coupling * (0.5 + 0.5 * v.abs().min(1.0)));
        }
        let eig = sym_eig(&prec).unwrap();
        covs.push(eig.apply_spectral(|v| 1.0 / v));
    }
    let m1: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let m2: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let s2 = covs.pop().unwrap();
    let s1 = covs.pop().unwrap();
    GaussianInstance::new(m1, m2, s1, s2, Some(Graph::path(d))).unwrap()
}

fn main() {
    for coupling in [0.45f64, 0.3] {
        let inst = tridiag_instance(30, coupling, 3);
        let exact = bures_w2(&inst).unwrap();
        let (a, b) = inst.eigenvalue_range().unwrap();
        println!("coupling {coupling}: exact {exact:.4} b/a {:.1}", b / a);
        let t_all = Instant::now();
        let mut errs = Vec::new();
        for h in 1..=8usize {
            let g = graph_power(&inst.precision_pattern, h);
            let asm = build_gsmom(&inst, &g).unwrap();
            let t0 = Instant::now();
            let sol = solve(&asm.program, &SolveOptions { tol: 1e-7, max_iter: 40_000, seed: 0 }).unwrap();
            let err = ((exact - sol.objective) / exact).max(1e-8);
            errs.push(err);
            println!(
                "  h={h}: {:?}/{} {:.1}s err {:.3e}",
                sol.status, sol.iterations, t0.elapsed().as_secs_f64(), err
            );
        }
        println!("  ratio err8/err1 {:.2e}  total {:.0}s", errs[7] / errs[0], t_all.elapsed().as_secs_f64());
    }
}
