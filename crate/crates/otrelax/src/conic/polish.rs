//! Face-restricted refinement of a near-optimal iterate.
//!
//! First-order splitting stalls with a sublinear tail on degenerate SDPs.
//! Once the iterate is close, the optimal face is visible: the numerical
//! rank of each PSD block and the support of each nonnegative block. On
//! that face the KKT conditions become two linear least-squares problems,
//! one for the primal (X = V M Vᵀ with the affine constraints) and one for
//! the multipliers (slack annihilating the primal range). The refined pair
//! is accepted only when the recomputed residuals actually improve, so a
//! wrong face guess costs nothing.

use super::{BlockValue, Coeff, Cone, ConicProgram, Entry};
use crate::matfun::{dense::Mat, sym_eig, SymMatrix};

/// Per-block face description.
enum Face {
    /// Columns of the primal range basis V (dim × rank).
    Psd { basis: Mat },
    /// Indices of the active coordinates.
    Nonneg { active: Vec<usize> },
    Free { len: usize },
}

pub struct Polished {
    pub primal: Vec<BlockValue>,
    pub dual: Vec<f64>,
    pub slack: Vec<BlockValue>,
}

/// Attempts the face-restricted refinement at a relative rank/support
/// threshold. Returns `None` when the face is too large to refine cheaply
/// or the linear algebra degenerates.
pub fn polish(
    prog: &ConicProgram,
    primal: &[BlockValue],
    threshold: f64,
) -> Option<Polished> {
    let m = prog.constraints.len();
    if m == 0 || m > 1200 {
        return None;
    }

    // Detect the face blockwise.
    let mut faces = Vec::with_capacity(prog.blocks.len());
    let mut primal_unknowns = 0usize;
    for (spec, val) in prog.blocks.iter().zip(primal) {
        match (spec.cone, val) {
            (Cone::Psd(dim), BlockValue::Mat(x)) => {
                let eig = sym_eig(x).ok()?;
                let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
                let cut = threshold * top.max(1e-300);
                let keep: Vec<usize> =
                    (0..dim).filter(|&i| eig.values[i] > cut).collect();
                let mut basis = Mat::zeros(dim, keep.len());
                for (col, &k) in keep.iter().enumerate() {
                    for row in 0..dim {
                        basis.set(row, col, eig.vectors.get(row, k));
                    }
                }
                primal_unknowns += keep.len() * (keep.len() + 1) / 2;
                faces.push(Face::Psd { basis });
            }
            (Cone::Nonneg(_), BlockValue::Vec(v)) => {
                let top = v.iter().cloned().fold(0.0f64, f64::max);
                let cut = threshold * top.max(1e-300);
                let active: Vec<usize> = (0..v.len()).filter(|&i| v[i] > cut).collect();
                primal_unknowns += active.len();
                faces.push(Face::Nonneg { active });
            }
            (Cone::Free(len), BlockValue::Vec(_)) => {
                primal_unknowns += len;
                faces.push(Face::Free { len });
            }
            _ => return None,
        }
    }
    if primal_unknowns == 0 || primal_unknowns > 1200 {
        return None;
    }

    // Map every block entry to its face parametrization: offsets of each
    // block's unknowns in the LS variable vector.
    let mut offsets = Vec::with_capacity(faces.len());
    {
        let mut off = 0usize;
        for f in &faces {
            offsets.push(off);
            off += match f {
                Face::Psd { basis } => basis.cols * (basis.cols + 1) / 2,
                Face::Nonneg { active } => active.len(),
                Face::Free { len } => *len,
            };
        }
    }

    // Primal least squares: rows = constraints, unknowns = face coordinates.
    let nun = primal_unknowns;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
    for cons in &prog.constraints {
        let mut row: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for c in &cons.coeffs {
            match (&faces[c.block], c.entry.canonical()) {
                (Face::Psd { basis }, Entry::Mat(p, q)) => {
                    let r = basis.cols;
                    // ⟨v·E_pq, V M Vᵀ⟩ = v·(V M Vᵀ)_pq
                    for s in 0..r {
                        for t in s..r {
                            let w = if s == t {
                                basis.get(p, s) * basis.get(q, s)
                            } else {
                                basis.get(p, s) * basis.get(q, t)
                                    + basis.get(p, t) * basis.get(q, s)
                            };
                            if w != 0.0 {
                                let idx = offsets[c.block] + t * (t + 1) / 2 + s;
                                *row.entry(idx).or_insert(0.0) += c.value * w;
                            }
                        }
                    }
                }
                (Face::Nonneg { active }, Entry::Vec(k)) => {
                    if let Ok(pos) = active.binary_search(&k) {
                        *row.entry(offsets[c.block] + pos).or_insert(0.0) += c.value;
                    }
                }
                (Face::Free { .. }, Entry::Vec(k)) => {
                    *row.entry(offsets[c.block] + k).or_insert(0.0) += c.value;
                }
                _ => return None,
            }
        }
        rows.push(row.into_iter().collect());
    }
    let rhs: Vec<f64> = prog.constraints.iter().map(|c| c.rhs).collect();
    // Face coordinates of the current iterate: M₀ = VᵀXV per PSD block
    // (PSD by congruence), actives/frees copied through.
    let mut m0 = vec![0.0; nun];
    for (bi, f) in faces.iter().enumerate() {
        match (f, &primal[bi]) {
            (Face::Psd { basis }, BlockValue::Mat(x)) => {
                let dim = x.dim();
                let r = basis.cols;
                // XV once, then VᵀXV
                let mut xv = Mat::zeros(dim, r);
                for pp in 0..dim {
                    for t in 0..r {
                        let mut acc = 0.0;
                        for qq in 0..dim {
                            acc += x.get(pp, qq) * basis.get(qq, t);
                        }
                        xv.set(pp, t, acc);
                    }
                }
                for s in 0..r {
                    for t in s..r {
                        let mut acc = 0.0;
                        for pp in 0..dim {
                            acc += basis.get(pp, s) * xv.get(pp, t);
                        }
                        m0[offsets[bi] + t * (t + 1) / 2 + s] = acc;
                    }
                }
            }
            (Face::Nonneg { active }, BlockValue::Vec(v)) => {
                for (pos, &k) in active.iter().enumerate() {
                    m0[offsets[bi] + pos] = v[k];
                }
            }
            (Face::Free { len }, BlockValue::Vec(v)) => {
                m0[offsets[bi]..offsets[bi] + len].copy_from_slice(&v[..*len]);
            }
            _ => {}
        }
    }
    // Minimum-norm correction δ with Ẽ(M₀+δ) = b: fixes the affine part
    // without leaving the face or disturbing the PSD structure much.
    let correction: Vec<f64> = {
        let r_vec: Vec<f64> = rows
            .iter()
            .zip(&rhs)
            .map(|(row, &b)| b - row.iter().map(|&(i, v)| v * m0[i]).sum::<f64>())
            .collect();
        least_squares(nun, &rows, &r_vec, 1e-5)?
    };
    let sol: Vec<f64> = m0.iter().zip(&correction).map(|(a, b)| a + b).collect();

    // Rebuild the primal blocks from the face coordinates.
    let mut new_primal: Vec<BlockValue> = Vec::with_capacity(faces.len());
    for (bi, (f, spec)) in faces.iter().zip(&prog.blocks).enumerate() {
        match (f, spec.cone) {
            (Face::Psd { basis }, Cone::Psd(dim)) => {
                let r = basis.cols;
                let mut x = SymMatrix::zeros(dim);
                for s in 0..r {
                    for t in s..r {
                        let mval = sol[offsets[bi] + t * (t + 1) / 2 + s];
                        if mval == 0.0 {
                            continue;
                        }
                        for p in 0..dim {
                            let vp = basis.get(p, s);
                            let vpt = basis.get(p, t);
                            for q in 0..=p {
                                let add = if s == t {
                                    mval * vp * basis.get(q, s)
                                } else {
                                    mval * (vp * basis.get(q, t) + vpt * basis.get(q, s))
                                };
                                x.add_at(p, q, add);
                            }
                        }
                    }
                }
                new_primal.push(BlockValue::Mat(x));
            }
            (Face::Nonneg { active }, Cone::Nonneg(len)) => {
                let mut v = vec![0.0; len];
                for (pos, &k) in active.iter().enumerate() {
                    v[k] = sol[offsets[bi] + pos].max(0.0);
                }
                new_primal.push(BlockValue::Vec(v));
            }
            (Face::Free { len }, Cone::Free(_)) => {
                let v = sol[offsets[bi]..offsets[bi] + len].to_vec();
                new_primal.push(BlockValue::Vec(v));
            }
            _ => return None,
        }
    }

    // Dual least squares over the multipliers y: the slack C − Aᵀy must
    // annihilate each primal range basis, vanish on active nonnegative
    // coordinates and vanish identically on free blocks.
    //
    // Row set: for each PSD block, entries of (C − Aᵀy)·V; for nonneg,
    // active coordinates; for free, all coordinates.
    let mut dual_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut dual_rhs: Vec<f64> = Vec::new();
    // objective as block matrices (functional -> matrix convention)
    let c_blocks = functional_to_blocks(prog, &prog.objective);
    // index: per block, per matrix row p (or vector index), the
    // constraints touching it: (constraint, partner column, weight)
    let mut mat_index: Vec<std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>>> =
        vec![std::collections::BTreeMap::new(); prog.blocks.len()];
    let mut vec_index: Vec<std::collections::BTreeMap<usize, Vec<(usize, f64)>>> =
        vec![std::collections::BTreeMap::new(); prog.blocks.len()];
    for (ci, cons) in prog.constraints.iter().enumerate() {
        for co in &cons.coeffs {
            match co.entry.canonical() {
                Entry::Mat(a, b) => {
                    let w = if a == b { co.value } else { co.value * 0.5 };
                    mat_index[co.block].entry(a).or_default().push((ci, b, w));
                    if a != b {
                        mat_index[co.block].entry(b).or_default().push((ci, a, w));
                    }
                }
                Entry::Vec(k) => {
                    vec_index[co.block].entry(k).or_default().push((ci, co.value));
                }
            }
        }
    }
    for (bi, (f, spec)) in faces.iter().zip(&prog.blocks).enumerate() {
        match (f, spec.cone) {
            (Face::Psd { basis }, Cone::Psd(dim)) => {
                if basis.cols == 0 {
                    continue;
                }
                let cmat = c_blocks[bi].as_mat();
                for p in 0..dim {
                    let touching = mat_index[bi].get(&p);
                    for j in 0..basis.cols {
                        // Σ_i y_i (A_i V)_{pj} = (C V)_{pj}
                        let mut acc: std::collections::BTreeMap<usize, f64> =
                            std::collections::BTreeMap::new();
                        if let Some(list) = touching {
                            for &(ci, partner, w) in list {
                                let v = w * basis.get(partner, j);
                                if v != 0.0 {
                                    *acc.entry(ci).or_insert(0.0) += v;
                                }
                            }
                        }
                        let mut target = 0.0;
                        for q in 0..dim {
                            target += cmat.get(p, q) * basis.get(q, j);
                        }
                        dual_rows.push(acc.into_iter().collect());
                        dual_rhs.push(target);
                    }
                }
            }
            (Face::Nonneg { active }, Cone::Nonneg(_)) => {
                let cvec = c_blocks[bi].as_vec();
                for &k in active {
                    let row: Vec<(usize, f64)> =
                        vec_index[bi].get(&k).cloned().unwrap_or_default();
                    dual_rows.push(row);
                    dual_rhs.push(cvec[k]);
                }
            }
            (Face::Free { len }, Cone::Free(_)) => {
                let cvec = c_blocks[bi].as_vec();
                for k in 0..*len {
                    let row: Vec<(usize, f64)> =
                        vec_index[bi].get(&k).cloned().unwrap_or_default();
                    dual_rows.push(row);
                    dual_rhs.push(cvec[k]);
                }
            }
            _ => return None,
        }
    }
    let dual = least_squares(m, &dual_rows, &dual_rhs, 1e-9)?;

    // Exact slack: S = C − Aᵀy in matrix convention.
    let mut slack = c_blocks;
    for (cons, &y) in prog.constraints.iter().zip(&dual) {
        if y == 0.0 {
            continue;
        }
        for co in &cons.coeffs {
            let w = match co.entry.canonical() {
                Entry::Mat(a, b) if a != b => 0.5,
                _ => 1.0,
            };
            let cur = slack[co.block].entry(co.entry);
            slack[co.block].set_entry(co.entry, cur - w * co.value * y);
        }
    }

    Some(Polished { primal: new_primal, dual, slack })
}

/// Objective functional as per-block matrices/vectors (off-diagonal
/// coefficients split across the two mirrored positions).
fn functional_to_blocks(prog: &ConicProgram, coeffs: &[Coeff]) -> Vec<BlockValue> {
    let mut out: Vec<BlockValue> =
        prog.blocks.iter().map(|b| BlockValue::zero_of(b.cone)).collect();
    for c in coeffs {
        let w = match c.entry.canonical() {
            Entry::Mat(a, b) if a != b => 0.5,
            _ => 1.0,
        };
        let cur = out[c.block].entry(c.entry);
        out[c.block].set_entry(c.entry, cur + w * c.value);
    }
    out
}

/// Column-pivoted Householder-QR least squares with rank truncation:
/// face directions the constraints barely see are dropped instead of
/// amplified.
fn least_squares(
    nun: usize,
    rows: &[Vec<(usize, f64)>],
    rhs: &[f64],
    rank_tol: f64,
) -> Option<Vec<f64>> {
    if nun == 0 {
        return Some(Vec::new());
    }
    let nrows = rows.len();
    if nun > 1200 || nrows > 12_000 {
        return None;
    }
    let mut e = Mat::zeros(nrows, nun);
    let mut b = vec![0.0; nrows];
    for (r, (row, &bi)) in rows.iter().zip(rhs).enumerate() {
        for &(c, v) in row {
            e.set(r, c, v);
        }
        b[r] = bi;
    }
    let mut perm: Vec<usize> = (0..nun).collect();
    let mut col_norm2: Vec<f64> = (0..nun)
        .map(|c| (0..nrows).map(|r| e.get(r, c) * e.get(r, c)).sum())
        .collect();
    let steps = nun.min(nrows);
    let mut rank = steps;
    let mut first_pivot = 0.0f64;
    for col in 0..steps {
        // pivot: remaining column with the largest updated norm
        let (piv, &pn) = col_norm2[col..]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, v)| (col + i, v))
            .unwrap();
        if piv != col {
            for r in 0..nrows {
                let t = e.get(r, col);
                e.set(r, col, e.get(r, piv));
                e.set(r, piv, t);
            }
            perm.swap(col, piv);
            col_norm2.swap(col, piv);
        }
        let pivot_norm = pn.max(0.0).sqrt();
        if col == 0 {
            first_pivot = pivot_norm;
        }
        if pivot_norm <= rank_tol * first_pivot.max(1e-300) {
            rank = col;
            break;
        }
        let mut norm2 = 0.0;
        for r in col..nrows {
            let v = e.get(r, col);
            norm2 += v * v;
        }
        let norm = norm2.sqrt();
        if norm < 1e-300 {
            rank = col;
            break;
        }
        let head = e.get(col, col);
        let alpha = if head >= 0.0 { -norm } else { norm };
        let v0 = head - alpha;
        let vnorm2 = norm2 - head * head + v0 * v0;
        if vnorm2 < 1e-300 {
            continue;
        }
        e.set(col, col, v0);
        let scale = 2.0 / vnorm2;
        for target in col + 1..nun {
            let mut dot = 0.0;
            for r in col..nrows {
                dot += e.get(r, col) * e.get(r, target);
            }
            let f = scale * dot;
            if f != 0.0 {
                for r in col..nrows {
                    let val = e.get(r, target) - f * e.get(r, col);
                    e.set(r, target, val);
                }
            }
            // downdate the running column norm
            let nv = e.get(col, target);
            col_norm2[target] = (col_norm2[target] - nv * nv).max(0.0);
        }
        let mut dot = 0.0;
        for r in col..nrows {
            dot += e.get(r, col) * b[r];
        }
        let f = scale * dot;
        for r in col..nrows {
            b[r] -= f * e.get(r, col);
        }
        e.set(col, col, alpha);
    }
    if std::env::var("OTRELAX_POLISH_DEBUG").is_ok() {
        eprintln!("polish ls: rows {nrows} cols {nun} rank {rank}");
    }
    // Back substitution on the leading rank x rank block of R.
    let mut xp = vec![0.0; nun];
    for col in (0..rank).rev() {
        let mut acc = b[col];
        for k in col + 1..rank {
            acc -= e.get(col, k) * xp[k];
        }
        let d = e.get(col, col);
        xp[col] = if d.abs() < 1e-300 { 0.0 } else { acc / d };
    }
    let mut x = vec![0.0; nun];
    for (pos, &orig) in perm.iter().enumerate() {
        if pos < rank {
            x[orig] = xp[pos];
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x)
}
