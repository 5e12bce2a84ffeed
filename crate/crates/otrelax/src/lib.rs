//! Convex relaxations of high-dimensional optimal transport.
//!
//! The crate builds and solves two relaxation families of the optimal
//! transport problem `inf_π { π(c) : π ∈ Π(μ, ν) }`:
//!
//! * **marginal relaxations** for discrete measures, which keep only one-
//!   and two-cluster marginals of the plan tied together by consistency,
//!   nonnegativity and a block PSD condition;
//! * **cluster moment relaxations** for continuous measures, which keep
//!   sparse collections of cluster moments in block moment matrices.
//!
//! Both produce certified lower bounds on the transport cost. For Gaussian
//! marginals with sparse precision patterns the crate additionally provides
//! the closed-form value, a computable error certificate, a feasible dual
//! point, and the closed-form optimal map; from the moment relaxation's dual
//! it extracts polynomial Kantorovich potentials and the induced transport
//! map `T(x) = x − ½∇φ(x)`.
//!
//! Entry points: [`gaussian`] for the Gaussian pipeline, [`marginal`] and
//! [`moment`] for the relaxation builders, [`conic`] for the solver and the
//! exact discrete baselines, [`transport`] for map extraction, [`models`]
//! for instance generators, and [`experiments`] for the reproducible
//! benchmark harness behind the `otrelax` binary.

pub mod conic;
pub mod error;
pub mod gaussian;
pub mod graph;
pub mod marginal;
pub mod matfun;
pub mod measure;
pub mod models;

pub use error::{Error, Result};
