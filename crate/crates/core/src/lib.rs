//! Unsupervised node embeddings from neighborhood reconstruction.
//!
//! A message-passing encoder maps every node to a vector `h_v`. Decoders read
//! only the final-layer vector and must reproduce three things about the node:
//! its own (projected) input features, its degree, and the *distribution* of
//! its neighbors' representations at every encoder layer. The distribution
//! term is an empirical 2-Wasserstein distance between `q` sampled neighbor
//! vectors and `q` vectors generated from a reparameterized Gaussian, solved
//! exactly by an assignment (Hungarian) step. Greedy (Chamfer) and entropic
//! (Sinkhorn) surrogates are available as alternatives.
//!
//! Crate layout:
//!
//! - [`graph`]: graph store, file formats, k-hop queries, planted-role generators
//! - [`tensor`]: dense `f64` tensors with a reverse-mode tape, Adam, checkpoints
//! - [`encoder`]: pair-norm input projection and GCN / GIN message passing
//! - [`decoder`]: self-feature, degree and neighbor-distribution heads
//! - [`ot`]: assignment, Chamfer and Sinkhorn set losses
//! - [`train`]: neighbor sampling, loss assembly, training loop
//! - [`eval`]: single-linkage clustering, clustering metrics, probe classifier,
//!   approximation diagnostic

pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod nn;
pub mod ot;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
