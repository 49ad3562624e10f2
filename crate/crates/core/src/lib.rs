//! Tensor-valued Colombeau generalized functions on chart-described manifolds.
//!
//! Elements of the basic space are maps `(ω, p, A) ↦ t(ω,p,A)` taking a
//! compactly supported unit-integral n-form `ω`, a point `p` and a two-point
//! transport operator `A` to an `(r,s)`-tensor at `p`. Smooth fields embed via
//! [`embedding::embed_sigma`], continuous fields and tensor distributions via
//! the transport-based integrals [`embedding::embed_iota_continuous`] and
//! [`embedding::embed_iota_distribution`].

// `!(x > 0.0)` style comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod catalog;
pub mod distribution;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lie;
pub mod mollifier;
pub mod quadrature;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result};
