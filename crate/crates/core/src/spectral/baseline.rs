use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::rqi::{certify_extremes, seek_extreme};
use super::{ShiftedSystem, SolverConfig, SpectralError, Spectrum};
use crate::linalg::{jacobi_eigh, Inertia, Mat, SymmetricLdl, SymmetricOperator};

/// Dense symmetric matrix whose shifted solves refactorize from scratch.
#[derive(Clone, Debug)]
pub struct DenseShifted {
    a: Mat,
    bound: f64,
}

impl DenseShifted {
    pub fn new(a: Mat) -> Self {
        let bound = a.norm_inf();
        Self { a, bound }
    }

    pub fn matrix(&self) -> &Mat {
        &self.a
    }
}

impl SymmetricOperator for DenseShifted {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x)
    }
}

impl ShiftedSystem for DenseShifted {
    fn solve_shifted(&self, mu: f64, rhs: &[f64]) -> Result<Vec<f64>, SpectralError> {
        SymmetricLdl::factor(&self.a.shifted(mu))
            .solve(rhs)
            .ok_or(SpectralError::SingularShift { mu })
    }

    fn inertia_at(&self, theta: f64) -> Option<Inertia> {
        Some(SymmetricLdl::factor(&self.a.shifted(theta)).inertia())
    }

    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

fn check_symmetric(l: &Mat) -> Result<(), SpectralError> {
    let asym = l.asymmetry();
    if asym > 1e-12 * l.norm_inf().max(1.0) {
        return Err(SpectralError::Asymmetric(asym));
    }
    Ok(())
}

/// All `n` eigenpairs by cyclic Jacobi, ascending.
pub fn dense_oracle(l: &Mat) -> Result<Spectrum, SpectralError> {
    check_symmetric(l)?;
    let out = jacobi_eigh(l).ok_or(SpectralError::OracleFailed)?;
    let v = out.vectors.expect("vectors requested");
    let pairs = out
        .values
        .iter()
        .enumerate()
        .map(|(j, &lam)| (lam, v.column(j), 0))
        .collect();
    Ok(Spectrum::from_pairs(l, pairs))
}

/// RQI with a fresh dense `LDLᵀ` of `L − μI` at every iteration and no
/// warm start: each pair is sought from a random vector, then the set is
/// certified by an inertia count.
pub fn inverse_iteration_baseline(l: &Mat, cfg: &SolverConfig) -> Result<Spectrum, SpectralError> {
    check_symmetric(l)?;
    cfg.check_k(l.rows())?;
    let sys = DenseShifted::new(l.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::with_capacity(cfg.k);
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(cfg.k);
    for _ in 0..cfg.k {
        let out = seek_extreme(&sys, &locked, cfg, &mut rng)?;
        locked.push(out.vector.clone());
        pairs.push(out);
    }
    let (pairs, _) = certify_extremes(&sys, pairs, cfg, &mut rng)?;
    let spec = Spectrum::from_pairs(
        l,
        pairs.into_iter().map(|p| (p.lambda, p.vector, p.iterations)).collect(),
    );
    super::tracker::residual_gate(&spec)?;
    Ok(spec)
}
