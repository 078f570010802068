//! Incremental spectral analysis of growing traffic graphs.
//!
//! Road-agents become vertices of a k-nearest-neighbor graph that only ever
//! gains vertices and edges inside a reset window. Its Laplacian is kept as
//! an update log of borderings and rank-1 incidence updates, and the top
//! eigenpairs are tracked by Rayleigh quotient iteration whose shifted solves
//! run through a Sherman-Morrison chain over that log. The eigenvectors feed
//! a small perceptron that labels each driver as one of six behaviors.
//!
//! | module | what lives there |
//! |--------|------------------|
//! | [`trajgraph`] | trajectories, kNN edges, the dynamic Laplacian |
//! | [`spectral`] | SM chain, RQI, incremental tracker, dense oracle, baseline |
//! | [`features`] | eigenvector rows as agent features, topology vector `w = L u` |
//! | [`classifier`] | behavior labels, MLP, weighted accuracy |
//! | [`synth`] | labeled synthetic scenarios |
//! | [`pipeline`] | trajectories → windows → spectra → features |
//!
//! The crate is `no_std` and only needs `alloc`; file formats, timing and the
//! command line live in the companion `graphrqi` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod features;
pub mod linalg;
pub mod pipeline;
pub mod spectral;
pub mod synth;
pub mod trajgraph;

pub use linalg::Mat;
