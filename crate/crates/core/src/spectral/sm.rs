//! Shifted solves against a base matrix plus a chain of signed rank-1 terms.
//!
//! For `A₀ = B − μI` and `Aᵢ = Aᵢ₋₁ + sᵢ cᵢ cᵢᵀ` the Sherman-Morrison formula
//! gives `Aᵢ⁻¹ = Aᵢ₋₁⁻¹ − sᵢ zᵢ zᵢᵀ / γᵢ` with `zᵢ = Aᵢ₋₁⁻¹ cᵢ` and
//! `γᵢ = 1 + sᵢ cᵢᵀ zᵢ`. The `zᵢ` are prepared once per shift:
//!
//! ```text
//! zᵢ = A₀⁻¹ cᵢ − Σ_{j<i} sⱼ zⱼ (zⱼᵀ cᵢ) / γⱼ
//! ```
//!
//! after which every solve costs one base solve plus `r` inner products.

use alloc::vec;
use alloc::vec::Vec;

use super::SpectralError;
use crate::linalg::{axpy, dot, Mat, SymmetricLdl};
use crate::trajgraph::UpdateEvent;

/// Below this `|γ|` the update is treated as singular.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// Solves with `A₀ = B − μI`.
pub trait BaseSolve {
    fn dim(&self) -> usize;
    fn solve(&self, rhs: &[f64]) -> Vec<f64>;
}

/// `diag(d) − μI`, with each `d − μ` pushed away from zero to `±floor`.
#[derive(Clone, Debug)]
pub struct DiagonalBase {
    inv: Vec<f64>,
}

impl DiagonalBase {
    pub fn new(diag: &[f64], mu: f64, floor: f64) -> Self {
        Self {
            inv: diag.iter().map(|d| 1.0 / clamp_shift(d - mu, floor)).collect(),
        }
    }
}

impl BaseSolve for DiagonalBase {
    fn dim(&self) -> usize {
        self.inv.len()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        rhs.iter().zip(&self.inv).map(|(x, i)| x * i).collect()
    }
}

/// Dense `B − μI` through a Bunch-Kaufman factorization.
#[derive(Clone, Debug)]
pub struct DenseBase {
    ldl: SymmetricLdl,
}

impl DenseBase {
    pub fn new(b: &Mat, mu: f64) -> Result<Self, SpectralError> {
        let ldl = SymmetricLdl::factor(&b.shifted(mu));
        if ldl.min_pivot() == 0.0 {
            return Err(SpectralError::SingularShift { mu });
        }
        Ok(Self { ldl })
    }
}

impl BaseSolve for DenseBase {
    fn dim(&self) -> usize {
        self.ldl.dim()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.ldl.solve(rhs).expect("pivots checked at construction")
    }
}

/// `(B − μI)⁻¹ = V (Λ − μI)⁻¹ Vᵀ` from a full eigendecomposition of `B`.
#[derive(Clone, Debug)]
pub struct EigenBase<'a> {
    vectors: &'a Mat,
    inv: Vec<f64>,
}

impl<'a> EigenBase<'a> {
    /// `vectors` holds all eigenvectors of `B` as columns.
    pub fn new(vectors: &'a Mat, values: &[f64], mu: f64, floor: f64) -> Self {
        assert!(
            vectors.is_square() && vectors.cols() == values.len(),
            "eigen base must be complete"
        );
        Self {
            vectors,
            inv: values.iter().map(|l| 1.0 / clamp_shift(l - mu, floor)).collect(),
        }
    }
}

impl BaseSolve for EigenBase<'_> {
    fn dim(&self) -> usize {
        self.inv.len()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut t = self.vectors.matvec_t(rhs);
        for (ti, inv) in t.iter_mut().zip(&self.inv) {
            *ti *= inv;
        }
        self.vectors.matvec(&t)
    }
}

pub(crate) fn clamp_shift(d: f64, floor: f64) -> f64 {
    if d.abs() >= floor {
        d
    } else if d < 0.0 {
        -floor
    } else {
        floor
    }
}

/// `sign · v vᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOne {
    pub sign: f64,
    pub v: Vec<f64>,
}

impl RankOne {
    pub fn new(sign: f64, v: Vec<f64>) -> Self {
        Self { sign, v }
    }
}

/// `(B − μI + Σ sᵢ cᵢ cᵢᵀ)⁻¹` with the per-shift Sherman-Morrison vectors cached.
#[derive(Clone, Debug)]
pub struct ShiftedSolveOperator<B> {
    base: B,
    mu: f64,
    z: Vec<Vec<f64>>,
    coef: Vec<f64>,
}

impl<B: BaseSolve> ShiftedSolveOperator<B> {
    pub fn new(base: B, mu: f64, chain: &[RankOne]) -> Result<Self, SpectralError> {
        let n = base.dim();
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(chain.len());
        let mut coef = Vec::with_capacity(chain.len());
        for (index, u) in chain.iter().enumerate() {
            if u.v.len() != n {
                return Err(SpectralError::Dimension {
                    expected: n,
                    got: u.v.len(),
                });
            }
            let mut zi = base.solve(&u.v);
            for (zj, cj) in z.iter().zip(&coef) {
                let t = dot(zj, &u.v);
                if t != 0.0 {
                    axpy(-cj * t, zj, &mut zi);
                }
            }
            let gamma = 1.0 + u.sign * dot(&u.v, &zi);
            if !(gamma.abs() >= GAMMA_FLOOR) {
                return Err(SpectralError::SingularUpdate { index, gamma });
            }
            coef.push(u.sign / gamma);
            z.push(zi);
        }
        Ok(Self { base, mu, z, coef })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn shift(&self) -> f64 {
        self.mu
    }

    pub fn chain_len(&self) -> usize {
        self.z.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "operator dimension mismatch");
        let mut y = self.base.solve(x);
        for (zi, ci) in self.z.iter().zip(&self.coef) {
            let t = dot(zi, x);
            if t != 0.0 {
                axpy(-ci * t, zi, &mut y);
            }
        }
        y
    }
}

/// Applies the cached inverse to `x`.
pub fn sm_apply<B: BaseSolve>(op: &ShiftedSolveOperator<B>, x: &[f64]) -> Vec<f64> {
    op.apply(x)
}

/// Rank-1 chain of an update log in agent coordinates, for a log that
/// starts from `base_n` agents.
///
/// Each bordered agent contributes `−e eᵀ` (its base slot is 1, see
/// [`bordered_base`]) and each new edge contributes `+b bᵀ`. Returns the
/// final dimension with the chain.
pub fn chain_from_log(base_n: usize, log: &[UpdateEvent]) -> (usize, Vec<RankOne>) {
    let n = base_n + log.iter().filter(|e| matches!(e, UpdateEvent::Border { .. })).count();
    let chain = log
        .iter()
        .map(|ev| match ev {
            UpdateEvent::Border { index, .. } => {
                let mut v = vec![0.0; n];
                v[*index] = 1.0;
                RankOne::new(-1.0, v)
            }
            UpdateEvent::EdgeAdd(b) => RankOne::new(1.0, b.dense(n)),
        })
        .collect();
    (n, chain)
}

/// `L₀ ⊕ I`: the base Laplacian with a unit diagonal slot for every agent
/// bordered in afterwards.
pub fn bordered_base(base: &Mat, n: usize) -> Mat {
    let m = base.rows();
    let mut out = Mat::identity(n);
    for i in 0..m {
        out.row_mut(i)[..m].copy_from_slice(base.row(i));
    }
    out
}
