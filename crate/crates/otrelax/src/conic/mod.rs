//! Block-structured conic programs and their solutions.
//!
//! A program is `min ⟨c, x⟩  s.t.  ⟨A_i, x⟩ = b_i,  x ∈ 𝒦`, where `x` is a
//! list of blocks, each living in a PSD, nonnegative or free cone, and every
//! linear functional addresses distinct entries of those blocks (for a PSD
//! block, the coefficient on entry `(i, j)` multiplies the single symmetric
//! value `X[i][j]`).

pub mod simplex;
pub mod sinkhorn;
pub mod solver;
mod ldl;
mod polish;

use crate::error::{Error, Result};
use crate::matfun::SymMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub use simplex::exact_discrete_ot;
pub use sinkhorn::sinkhorn;
pub use solver::{solve, SolveOptions};

/// Cone of one variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    /// Symmetric PSD matrices of the given side length.
    Psd(usize),
    /// Entrywise nonnegative vector of the given length.
    Nonneg(usize),
    /// Unconstrained vector of the given length.
    Free(usize),
}

impl Cone {
    /// Number of distinct scalar entries in the block.
    pub fn entry_count(&self) -> usize {
        match *self {
            Cone::Psd(d) => d * (d + 1) / 2,
            Cone::Nonneg(n) | Cone::Free(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub cone: Cone,
}

/// Address of one distinct entry inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entry {
    /// Entry (row, col) of a PSD block; canonical form has row ≤ col.
    Mat(usize, usize),
    /// Entry of a vector block.
    Vec(usize),
}

impl Entry {
    fn canonical(self) -> Entry {
        match self {
            Entry::Mat(i, j) if i > j => Entry::Mat(j, i),
            e => e,
        }
    }
}

/// One coefficient of a linear functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coeff {
    pub block: usize,
    pub entry: Entry,
    pub value: f64,
}

impl Coeff {
    pub fn mat(block: usize, i: usize, j: usize, value: f64) -> Self {
        Self { block, entry: Entry::Mat(i, j), value }
    }

    pub fn vec(block: usize, index: usize, value: f64) -> Self {
        Self { block, entry: Entry::Vec(index), value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<Coeff>,
    pub rhs: f64,
}

/// Block-structured conic program with affine equality constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub blocks: Vec<BlockSpec>,
    pub objective: Vec<Coeff>,
    pub constraints: Vec<Constraint>,
    /// Semantic tags per constraint index, e.g. "marginal-x", "consistency".
    #[serde(default)]
    pub metadata: BTreeMap<usize, String>,
}

/// Value of one block in a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockValue {
    Mat(SymMatrix),
    Vec(Vec<f64>),
}

impl BlockValue {
    pub fn zero_of(cone: Cone) -> BlockValue {
        match cone {
            Cone::Psd(d) => BlockValue::Mat(SymMatrix::zeros(d)),
            Cone::Nonneg(n) | Cone::Free(n) => BlockValue::Vec(vec![0.0; n]),
        }
    }

    pub fn entry(&self, e: Entry) -> f64 {
        match (self, e.canonical()) {
            (BlockValue::Mat(m), Entry::Mat(i, j)) => m.get(i, j),
            (BlockValue::Vec(v), Entry::Vec(k)) => v[k],
            _ => panic!("entry kind does not match block kind"),
        }
    }

    pub fn set_entry(&mut self, e: Entry, value: f64) {
        match (self, e.canonical()) {
            (BlockValue::Mat(m), Entry::Mat(i, j)) => m.set(i, j, value),
            (BlockValue::Vec(v), Entry::Vec(k)) => v[k] = value,
            _ => panic!("entry kind does not match block kind"),
        }
    }

    pub fn as_mat(&self) -> &SymMatrix {
        match self {
            BlockValue::Mat(m) => m,
            BlockValue::Vec(_) => panic!("expected matrix block"),
        }
    }

    pub fn as_vec(&self) -> &[f64] {
        match self {
            BlockValue::Vec(v) => v,
            BlockValue::Mat(_) => panic!("expected vector block"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    MaxIter,
    InfeasibleDetected,
}

/// Relative residuals of a primal/dual pair.
///
/// `primal_infeasibility` is the worst constraint violation
/// `max_i |⟨A_i,x⟩-b_i| / (1+|b_i|)`, combined with the cone violation of
/// the primal point relative to its norm. `dual_infeasibility` is
/// `‖c − Aᵀy − s‖₂ / (1+‖c‖₂)` with `s` checked against the dual cone.
/// `duality_gap` is `|⟨c,x⟩ − ⟨b,y⟩| / (1 + |⟨c,x⟩| + |⟨b,y⟩|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub duality_gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal_infeasibility.max(self.dual_infeasibility).max(self.duality_gap)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: Status,
    pub primal: Vec<BlockValue>,
    /// Lagrange multiplier per constraint, in constraint order.
    pub dual: Vec<f64>,
    pub slack: Vec<BlockValue>,
    pub residuals: Residuals,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

impl ConicProgram {
    pub fn new(blocks: Vec<BlockSpec>) -> Self {
        Self { blocks, objective: Vec::new(), constraints: Vec::new(), metadata: BTreeMap::new() }
    }

    pub fn add_block(&mut self, name: impl Into<String>, cone: Cone) -> usize {
        self.blocks.push(BlockSpec { name: name.into(), cone });
        self.blocks.len() - 1
    }

    pub fn add_objective(&mut self, coeff: Coeff) {
        self.objective.push(coeff);
    }

    /// Adds a constraint and returns its index.
    pub fn add_constraint(&mut self, coeffs: Vec<Coeff>, rhs: f64, tag: Option<&str>) -> usize {
        let idx = self.constraints.len();
        self.constraints.push(Constraint { coeffs, rhs });
        if let Some(t) = tag {
            self.metadata.insert(idx, t.to_string());
        }
        idx
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn check_coeff(&self, c: &Coeff, what: &str) -> Result<()> {
        let Some(block) = self.blocks.get(c.block) else {
            return Err(Error::InvalidProgram(format!("{what}: block {} out of range", c.block)));
        };
        match (block.cone, c.entry) {
            (Cone::Psd(d), Entry::Mat(i, j)) if i < d && j < d => Ok(()),
            (Cone::Nonneg(n), Entry::Vec(k)) | (Cone::Free(n), Entry::Vec(k)) if k < n => Ok(()),
            _ => Err(Error::InvalidProgram(format!(
                "{what}: entry {:?} invalid for block '{}' ({:?})",
                c.entry, block.name, block.cone
            ))),
        }
    }

    /// Normalizes entry addresses and merges duplicate (block, entry)
    /// coefficients by summation; validates every address.
    pub fn canonicalize(&mut self) -> Result<()> {
        for b in &self.blocks {
            if b.cone.entry_count() == 0 {
                return Err(Error::InvalidProgram(format!("block '{}' is empty", b.name)));
            }
        }
        let canon = |coeffs: &[Coeff]| -> Vec<Coeff> {
            let mut map: BTreeMap<(usize, Entry), f64> = BTreeMap::new();
            for c in coeffs {
                *map.entry((c.block, c.entry.canonical())).or_insert(0.0) += c.value;
            }
            map.into_iter()
                .map(|((block, entry), value)| Coeff { block, entry, value })
                .collect()
        };
        self.objective = canon(&self.objective);
        for c in &self.objective {
            self.check_coeff(c, "objective")?;
        }
        for i in 0..self.constraints.len() {
            self.constraints[i].coeffs = canon(&self.constraints[i].coeffs);
            for c in &self.constraints[i].coeffs {
                self.check_coeff(c, &format!("constraint {i}"))?;
            }
        }
        Ok(())
    }

    pub fn eval_functional(coeffs: &[Coeff], values: &[BlockValue]) -> f64 {
        coeffs.iter().map(|c| c.value * values[c.block].entry(c.entry)).sum()
    }

    pub fn objective_value(&self, values: &[BlockValue]) -> f64 {
        Self::eval_functional(&self.objective, values)
    }

    pub fn constraint_value(&self, idx: usize, values: &[BlockValue]) -> f64 {
        Self::eval_functional(&self.constraints[idx].coeffs, values)
    }

    /// Worst relative constraint violation of a candidate point.
    pub fn max_constraint_violation(&self, values: &[BlockValue]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                (ConicProgram::eval_functional(&c.coeffs, values) - c.rhs).abs()
                    / (1.0 + c.rhs.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Distance-to-cone of every block, relative to the point's scale.
    pub fn cone_violation(&self, values: &[BlockValue]) -> f64 {
        let mut worst = 0.0_f64;
        for (spec, val) in self.blocks.iter().zip(values) {
            let v = match (spec.cone, val) {
                (Cone::Psd(_), BlockValue::Mat(m)) => {
                    let min = crate::matfun::min_eigenvalue(m).unwrap_or(f64::NEG_INFINITY);
                    (-min).max(0.0) / (1.0 + m.frob_norm())
                }
                (Cone::Nonneg(_), BlockValue::Vec(v)) => {
                    let min = v.iter().cloned().fold(0.0_f64, f64::min);
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (-min).max(0.0) / (1.0 + norm)
                }
                (Cone::Free(_), BlockValue::Vec(_)) => 0.0,
                _ => f64::INFINITY,
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Distance of a slack candidate from the dual cone; free blocks have
    /// dual cone {0}, so any nonzero free slack counts as violation.
    pub fn dual_cone_violation(&self, values: &[BlockValue]) -> f64 {
        let mut worst = self.cone_violation(values);
        for (spec, val) in self.blocks.iter().zip(values) {
            if let (Cone::Free(_), BlockValue::Vec(v)) = (spec.cone, val) {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                worst = worst.max(norm / (1.0 + norm));
            }
        }
        worst
    }

    /// Recomputes all three relative residuals from a returned
    /// (primal, dual, slack) triple; the solver's reported residuals match
    /// this evaluation.
    pub fn residuals_of(
        &self,
        primal: &[BlockValue],
        dual: &[f64],
        slack: &[BlockValue],
    ) -> Residuals {
        let primal_infeasibility =
            self.max_constraint_violation(primal).max(self.cone_violation(primal));

        // c − Aᵀy − s as matrices/vectors: a functional coefficient v on an
        // off-diagonal PSD entry is the symmetric matrix with v/2 at each of
        // the two mirrored positions.
        let mut resid: Vec<BlockValue> =
            self.blocks.iter().map(|b| BlockValue::zero_of(b.cone)).collect();
        let add = |c: &Coeff, v: f64, resid: &mut Vec<BlockValue>| {
            let w = match c.entry.canonical() {
                Entry::Mat(i, j) if i != j => 0.5,
                _ => 1.0,
            };
            let cur = resid[c.block].entry(c.entry);
            resid[c.block].set_entry(c.entry, cur + w * v);
        };
        for c in &self.objective {
            add(c, c.value, &mut resid);
        }
        for (cons, &y) in self.constraints.iter().zip(dual) {
            for c in &cons.coeffs {
                add(c, -c.value * y, &mut resid);
            }
        }
        let mut dual_norm2 = 0.0;
        for (r, s) in resid.iter().zip(slack) {
            match (r, s) {
                (BlockValue::Mat(rm), BlockValue::Mat(sm)) => {
                    let d = rm.dim();
                    for i in 0..d {
                        for j in 0..=i {
                            let v = rm.get(i, j) - sm.get(i, j);
                            let w = if i == j { 1.0 } else { 2.0 };
                            dual_norm2 += w * v * v;
                        }
                    }
                }
                (BlockValue::Vec(rv), BlockValue::Vec(sv)) => {
                    for (a, b) in rv.iter().zip(sv) {
                        dual_norm2 += (a - b) * (a - b);
                    }
                }
                _ => dual_norm2 = f64::INFINITY,
            }
        }
        let c_norm = {
            let mut acc = 0.0;
            for c in &self.objective {
                let w = match c.entry.canonical() {
                    Entry::Mat(i, j) if i != j => 0.5,
                    _ => 1.0,
                };
                acc += w * c.value * c.value;
            }
            acc.sqrt()
        };
        let slack_cone = self.dual_cone_violation(slack);
        let dual_infeasibility = (dual_norm2.sqrt() / (1.0 + c_norm)).max(slack_cone);

        let pobj = self.objective_value(primal);
        let dobj: f64 = self.constraints.iter().zip(dual).map(|(c, y)| c.rhs * y).sum();
        let duality_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        Residuals { primal_infeasibility, dual_infeasibility, duality_gap }
    }

    /// Dual objective ⟨b, y⟩ of a multiplier vector.
    pub fn dual_objective(&self, dual: &[f64]) -> f64 {
        self.constraints.iter().zip(dual).map(|(c, y)| c.rhs * y).sum()
    }
}
