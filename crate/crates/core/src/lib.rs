//! Stochastic greedy algorithms for sparsity-constrained optimization.
//!
//! The crate solves problems of the form
//!
//! ```text
//! minimize F(w) = (1/M) Σ f_i(w)   subject to   w is a combination of at most k atoms
//! ```
//!
//! with two randomized solvers that only touch one block objective `f_i` per
//! iteration:
//!
//! - [`solvers::stoiht`]: stochastic iterative hard thresholding,
//! - [`solvers::stogradmp`]: stochastic gradient matching pursuit.
//!
//! Sparsity is measured against a pluggable [`atoms::AtomModel`]: standard
//! coordinates (sparse vectors), rank-one matrices (low-rank matrices), or a
//! finite column-normalized dictionary. Projections onto a support may be exact
//! or approximate (randomized SVD, greedy dictionary selection), and both solvers
//! accept inexact gradients and inexact restricted minimization.
//!
//! Module map:
//!
//! - [`atoms`]: supports, projections, identification, merging, randomized SVD.
//! - [`objectives`]: block-decomposed least-squares objectives, restricted
//!   convexity/smoothness constant estimation, problem snapshot files.
//! - [`solvers`]: the iterations, restricted minimization, block sampling,
//!   contraction/tolerance diagnostics.
//! - [`oracle`]: brute-force references used by tests and diagnostics.
//! - [`harness`]: seeded trial batches, sweeps, trimmed-mean aggregation, CSV export.
//!
//! Trial batches run on rayon when the `parallel` feature (default) is enabled
//! and sequentially otherwise.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atoms;
pub mod harness;
pub mod objectives;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod solvers;

mod linalg;

pub use atoms::{AtomModel, ProjectionConfig, ProjectionMode, SupportSet};
pub use objectives::{BlockObjective, RestrictedConstants, SignalShape};
pub use solvers::{stogradmp, stoiht, RunTrace, SolverConfig};

/// Dense column vector used for every ambient iterate. Matrices are stored
/// column-major (`vec(W)`).
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
