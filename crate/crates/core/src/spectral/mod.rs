//! Top-k Laplacian eigenpairs: Sherman-Morrison shifted solves, Rayleigh
//! quotient iteration, the incremental tracker, and the dense references.
//!
//! The incremental path never touches an `n × n` factorization between
//! refactorizations. It keeps the full eigendecomposition `L₀ = V Λ Vᵀ` of the
//! Laplacian at its last refactorization and writes the current Laplacian in
//! those coordinates as `D + Σ sᵢ cᵢ cᵢᵀ`: a diagonal plus the chain of
//! rank-1 terms (new agents and new edges) logged since then.

mod baseline;
mod rqi;
mod sm;
mod tracker;

pub use baseline::{dense_oracle, inverse_iteration_baseline, DenseShifted};
pub use rqi::{rqi_eigenpair, RqiOutcome};
pub use sm::{
    bordered_base, chain_from_log, sm_apply, BaseSolve, DenseBase, DiagonalBase, EigenBase, RankOne,
    ShiftedSolveOperator,
};
pub use tracker::{GraphRqi, TrackerStats};

use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{dot, Inertia, Mat, SymmetricOperator};

/// Which end of the spectrum to track.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Which {
    #[default]
    Largest,
    Smallest,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Number of eigenpairs.
    pub k: usize,
    /// Convergence tolerance on the sign-aligned step `‖x_new − x_old‖₂`.
    pub eps: f64,
    /// RQI iteration cap per eigenpair.
    pub max_iter: usize,
    /// Smallest allowed `|d − μ|` in a diagonal solve and the shift
    /// perturbation used when `μ` hits a known eigenvalue.
    pub shift_floor: f64,
    /// Longest Sherman-Morrison chain before refactorizing.
    pub chain_cap: usize,
    pub which: Which,
    /// Rayleigh-Ritz projection of the warm-start block before RQI.
    pub ritz_warm_start: bool,
    /// Seed for random start vectors.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 6,
            eps: 1e-10,
            max_iter: 50,
            shift_floor: 1e-9,
            chain_cap: 64,
            which: Which::Largest,
            ritz_warm_start: true,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_which(mut self, which: Which) -> Self {
        self.which = which;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let ok = self.k >= 1 && self.eps > 0.0 && self.max_iter >= 1 && self.shift_floor > 0.0 && self.chain_cap >= 1;
        if ok {
            Ok(())
        } else {
            Err(SpectralError::InvalidConfig)
        }
    }

    fn check_k(&self, n: usize) -> Result<(), SpectralError> {
        self.validate()?;
        if self.k > n {
            return Err(SpectralError::KTooLarge { k: self.k, n });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("solver settings must all be positive")]
    InvalidConfig,
    #[error("asked for {k} eigenpairs of a {n}×{n} matrix")]
    KTooLarge { k: usize, n: usize },
    #[error("matrix is not symmetric (largest asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("expected a vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("Sherman-Morrison denominator {gamma:e} at chain element {index}")]
    SingularUpdate { index: usize, gamma: f64 },
    #[error("shifted matrix is singular at mu = {mu}")]
    SingularShift { mu: f64 },
    #[error("RQI did not converge in {iterations} iterations (last step {last_step:e})")]
    NoConvergence {
        iterations: usize,
        lambda: f64,
        last_step: f64,
        best: Vec<f64>,
    },
    #[error("could not certify the top {k} eigenvalues")]
    Incomplete { k: usize },
    #[error("eigenpair {index}: residual {residual:e} exceeds {bound:e}")]
    ResidualGate { index: usize, residual: f64, bound: f64 },
    #[error("dense eigensolver ran out of sweeps")]
    OracleFailed,
}

/// `k` eigenpairs of one Laplacian, eigenvalues ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// `n × k`, column `j` is the unit eigenvector of `values[j]`.
    pub vectors: Mat,
    pub values: Vec<f64>,
    /// `‖L u − λ u‖₂` per pair.
    pub residuals: Vec<f64>,
    /// RQI iterations spent per pair (0 for the dense oracle).
    pub iterations: Vec<usize>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.vectors.rows()
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j)
    }

    /// Index of the largest eigenvalue.
    pub fn largest(&self) -> Option<usize> {
        self.k().checked_sub(1)
    }

    /// Builds a spectrum from unsorted pairs: applies the sign convention,
    /// sorts ascending and records residuals against `op`.
    pub fn from_pairs<O: SymmetricOperator>(op: &O, mut pairs: Vec<(f64, Vec<f64>, usize)>) -> Self {
        let n = op.dim();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut vectors = Mat::zeros(n, pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        let mut residuals = Vec::with_capacity(pairs.len());
        let mut iterations = Vec::with_capacity(pairs.len());
        for (j, (lambda, mut u, its)) in pairs.into_iter().enumerate() {
            crate::linalg::canonical_sign(&mut u);
            residuals.push(residual(op, lambda, &u));
            vectors.set_column(j, &u);
            values.push(lambda);
            iterations.push(its);
        }
        Self {
            vectors,
            values,
            residuals,
            iterations,
        }
    }
}

/// `xᵀ A x / xᵀ x`.
pub fn rayleigh_quotient<O: SymmetricOperator + ?Sized>(op: &O, x: &[f64]) -> Result<f64, SpectralError> {
    if x.len() != op.dim() {
        return Err(SpectralError::Dimension {
            expected: op.dim(),
            got: x.len(),
        });
    }
    let xx = dot(x, x);
    if xx == 0.0 {
        return Err(SpectralError::ZeroVector);
    }
    Ok(dot(x, &op.apply(x)) / xx)
}

/// `‖A u − λ u‖₂`.
pub fn residual<O: SymmetricOperator + ?Sized>(op: &O, lambda: f64, u: &[f64]) -> f64 {
    let au = op.apply(u);
    libm::sqrt(au.iter().zip(u).map(|(a, x)| (a - lambda * x) * (a - lambda * x)).sum())
}

/// A symmetric operator that can also solve shifted systems, which is all
/// RQI needs.
pub trait ShiftedSystem: SymmetricOperator {
    /// `(A − μ I)⁻¹ rhs`.
    fn solve_shifted(&self, mu: f64, rhs: &[f64]) -> Result<Vec<f64>, SpectralError>;

    /// Exact inertia of `A − θ I`, when the system can afford it.
    fn inertia_at(&self, _theta: f64) -> Option<Inertia> {
        None
    }

    /// Upper bound on `‖A‖₂`.
    fn norm_bound(&self) -> f64;
}
