//! Hypergraph node representation learning with Laplacian-mixed attention.
//!
//! The crate is organized around five pieces:
//!
//! - [`hypergraph`]: hypergraph representation, degrees, neighborhoods, and the
//!   normalized hypergraph Laplacian used as the local message-passing operator.
//! - [`tensor`]: a minimal dense 2-D tensor engine with reverse-mode
//!   differentiation on a recording tape, plus an Adam optimizer and a
//!   finite-difference gradient checker.
//! - [`model`]: the attention architecture that mixes a learned attention
//!   matrix with the hypergraph Laplacian (`A = γM + (1−γ)L`), multi-head
//!   composition, and the end-to-end node classifier.
//! - [`baselines`]: two-stage (node→hyperedge→node) and algebraically merged
//!   one-stage (node→node) message-passing operators, plus a numerical
//!   equivalence verifier.
//! - [`train`] / [`data`]: stratified k-fold training/evaluation, hyperparameter
//!   sweeps, dataset ingestion, and synthetic fixture generation.

pub mod baselines;
pub mod data;
pub mod hypergraph;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

/// Scalar type for all numeric storage. Defaults to `f64`; the
/// `single-precision` feature switches it to `f32` for large-graph runs.
#[cfg(not(feature = "single-precision"))]
pub type Real = f64;
#[cfg(feature = "single-precision")]
pub type Real = f32;

pub use hypergraph::{DegreeVectors, Hypergraph, LaplacianMatrix};
pub use model::{Model, ModelConfig};
pub use tensor::{AdamState, Params, Tape, Tensor};
