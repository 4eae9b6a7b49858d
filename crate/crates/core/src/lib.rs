//! Iterated diffusion maps.
//!
//! Given samples `x_i` of a data manifold and feature values `y_i = H(x_i)`,
//! the pipeline estimates the local derivative of `H` by weighted regression,
//! biases a local Gaussian kernel toward feature directions, and re-embeds
//! the data with a rescaled diffusion map. Repeating the last two steps
//! contracts the directions along which `H` is constant.
//!
//! The crate is `no_std` (it needs `alloc`). File formats and the
//! command-line driver live in the `idm` crate.
//!
//! Module layout follows the pipeline:
//!
//! | module | contents |
//! |--------|----------|
//! | [`data`] | point clouds, features, neighbor graphs, embeddings |
//! | [`neighbors`] | exact k-NN |
//! | [`local`] | local charts, bandwidth scans, dimension and derivative estimates |
//! | [`kernels`] | anisotropic distances, global bandwidth, sparse kernel assembly |
//! | [`spectral`] | normalizations, eigensolve, rescaled map, Nyström |
//! | [`idm`] | the outer loop, decoder, fixed-point residual, reference flow |
//! | [`manifolds`] | synthetic fixtures with analytic oracles |
//! | [`eval`] | alignment and correlation metrics used by diagnostics |
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Modules import `num_traits::Float` for float math under no_std. When std
// is linked anywhere in the build (tests, std dependents) the inherent
// methods win and the import goes unused, hence the per-import allows.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod eigen;
mod error;
pub mod eval;
pub mod idm;
pub mod kernels;
pub mod linalg;
pub mod local;
pub mod manifolds;
pub mod neighbors;
pub mod sparse;
pub mod spectral;

pub use data::{DiffusionEmbedding, FeatureSet, NeighborGraph, PointCloud, RowMatrix};
pub use error::{Error, Result};
