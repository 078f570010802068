use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rqi::{certify_extremes, ritz_pairs, solve_from_starts, RqiOutcome};
use super::sm::{DiagonalBase, RankOne, ShiftedSolveOperator};
use super::{rayleigh_quotient, ShiftedSystem, SolverConfig, SpectralError, Spectrum, Which};
use crate::linalg::{
    axpy, canonical_sign, dot, jacobi_eigh, normalize, scale, Inertia, Mat, SymmetricLdl, SymmetricOperator,
};
use crate::trajgraph::{DynamicLaplacian, UpdateEvent};

/// `D + Σ sᵢ cᵢ cᵢᵀ` in the eigen-coordinates of the last refactorization.
#[derive(Clone, Debug)]
pub(crate) struct EigenChain {
    diag: Vec<f64>,
    chain: Vec<RankOne>,
    bound: f64,
    floor: f64,
}

impl SymmetricOperator for EigenChain {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for u in &self.chain {
            let t = dot(&u.v, x);
            if t != 0.0 {
                axpy(u.sign * t, &u.v, &mut y);
            }
        }
        y
    }
}

impl EigenChain {
    /// Davidson correction `t = (D − θ)⁻¹ (r − ε x)` for the residual
    /// `r = L̂ x − θ x`, with Olsen's `ε` making `t ⊥ x`. `None` if `x` is
    /// already an eigenvector to working precision.
    fn olsen_correction(&self, x: &[f64]) -> Option<Vec<f64>> {
        let lx = self.apply(x);
        let xx = dot(x, x);
        let theta = dot(x, &lx) / xx;
        let r: Vec<f64> = lx.iter().zip(x).map(|(a, b)| a - theta * b).collect();
        let scale_ref = self.bound.max(1.0);
        if crate::linalg::norm2(&r) <= 1e-14 * scale_ref {
            return None;
        }
        let floor = 1e-8 * scale_ref;
        let inv: Vec<f64> = self
            .diag
            .iter()
            .map(|d| 1.0 / super::sm::clamp_shift(d - theta, floor))
            .collect();
        let mr: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
        let mx: Vec<f64> = x.iter().zip(&inv).map(|(a, b)| a * b).collect();
        let eps = dot(x, &mr) / dot(x, &mx);
        let t: Vec<f64> = mr.iter().zip(&mx).map(|(a, b)| a - eps * b).collect();
        t.iter().all(|v| v.is_finite()).then_some(t)
    }
}

impl ShiftedSystem for EigenChain {
    fn solve_shifted(&self, mu: f64, rhs: &[f64]) -> Result<Vec<f64>, SpectralError> {
        let base = DiagonalBase::new(&self.diag, mu, self.floor);
        let op = ShiftedSolveOperator::new(base, mu, &self.chain)?;
        // one step of iterative refinement against the exact operator
        let mut y = op.apply(rhs);
        let ay = self.apply(&y);
        let res: Vec<f64> = rhs
            .iter()
            .zip(ay.iter().zip(&y))
            .map(|(b, (a, v))| b - (a - mu * v))
            .collect();
        let dy = op.apply(&res);
        axpy(1.0, &dy, &mut y);
        Ok(y)
    }

    /// Haynsworth inertia additivity on `[[D − θ, C], [Cᵀ, −S]]`:
    /// `In(L̂ − θ) = In(D − θ) + In(Q) − In(−S)` with
    /// `Q = −S − Cᵀ (D − θ)⁻¹ C`, an `r × r` matrix.
    fn inertia_at(&self, theta: f64) -> Option<Inertia> {
        let shifted: Vec<f64> = self.diag.iter().map(|d| d - theta).collect();
        if shifted.iter().any(|d| d.abs() < 1e-13 * self.bound.max(1.0)) {
            return None;
        }
        let r = self.chain.len();
        let mut q = Mat::zeros(r, r);
        let scaled: Vec<Vec<f64>> = self
            .chain
            .iter()
            .map(|u| u.v.iter().zip(&shifted).map(|(c, d)| c / d).collect())
            .collect();
        for i in 0..r {
            for j in i..r {
                let mut v = -dot(&self.chain[i].v, &scaled[j]);
                if i == j {
                    v -= self.chain[i].sign;
                }
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let iq = SymmetricLdl::factor(&q).inertia();
        let pos_d = shifted.iter().filter(|d| **d > 0.0).count();
        let neg_d = shifted.len() - pos_d;
        let minus = self.chain.iter().filter(|u| u.sign < 0.0).count();
        let plus = r - minus;
        Some(Inertia {
            positive: (pos_d + iq.positive).checked_sub(minus)?,
            negative: (neg_d + iq.negative).checked_sub(plus)?,
            zero: iq.zero,
        })
    }

    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

#[derive(Clone, Debug)]
struct Track {
    generation: u64,
    cursor: usize,
    base_n: usize,
    basis: Mat,
    sys: EigenChain,
    /// Last returned pairs in coordinates, best first.
    prev: Vec<(f64, Vec<f64>)>,
}

impl Track {
    fn to_agent(&self, x: &[f64]) -> Vec<f64> {
        let mut u = self.basis.matvec(&x[..self.base_n]);
        u.extend_from_slice(&x[self.base_n..]);
        u
    }
}

/// Counters over the tracker's lifetime.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrackerStats {
    pub calls: usize,
    pub refactorizations: usize,
    /// Missed eigenvalues found by the inertia check and swapped in.
    pub recoveries: usize,
    /// Solves that failed on the chain and were redone after refactorizing.
    pub retries: usize,
}

/// Incremental top-k spectrum of a [`DynamicLaplacian`].
///
/// Between refactorizations the tracker only consumes the new suffix of the
/// update log, warm-starts from its previous answer, and solves shifted
/// systems through the Sherman-Morrison chain.
#[derive(Clone, Debug)]
pub struct GraphRqi {
    cfg: SolverConfig,
    rng: ChaCha8Rng,
    track: Option<Track>,
    stats: TrackerStats,
    histories: Vec<Vec<f64>>,
}

impl GraphRqi {
    pub fn new(cfg: SolverConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            track: None,
            stats: TrackerStats::default(),
            histories: Vec::new(),
        }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn stats(&self) -> TrackerStats {
        self.stats
    }

    /// RQI step histories of the last call, best pair first.
    pub fn last_histories(&self) -> &[Vec<f64>] {
        &self.histories
    }

    /// Current chain length (0 right after a refactorization).
    pub fn chain_len(&self) -> usize {
        self.track.as_ref().map_or(0, |t| t.sys.chain.len())
    }

    /// Drops all cached state; the next call refactorizes.
    pub fn clear(&mut self) {
        self.track = None;
    }

    /// Top `cfg.k` eigenpairs of the current Laplacian.
    pub fn spectrum(&mut self, g: &DynamicLaplacian) -> Result<Spectrum, SpectralError> {
        self.spectrum_k(g, self.cfg.k)
    }

    /// Same as [`GraphRqi::spectrum`] with an explicit pair count.
    pub fn spectrum_k(&mut self, g: &DynamicLaplacian, k: usize) -> Result<Spectrum, SpectralError> {
        let cfg = self.cfg.with_k(k);
        cfg.check_k(g.n())?;
        self.stats.calls += 1;
        let fresh = self.sync(g)?;
        match self.solve(g, &cfg) {
            Ok(s) => Ok(s),
            Err(e) if !fresh => {
                log::warn!("incremental solve failed ({e}); refactorizing");
                self.stats.retries += 1;
                self.refactor(g)?;
                self.solve(g, &cfg)
            }
            Err(e) => Err(e),
        }
    }

    /// Brings the coordinate system up to date with `g`. Returns whether a
    /// refactorization happened.
    fn sync(&mut self, g: &DynamicLaplacian) -> Result<bool, SpectralError> {
        let stale = match &self.track {
            None => true,
            Some(t) => t.generation != g.generation() || g.update_log().len() < t.cursor,
        };
        if stale {
            self.refactor(g)?;
            return Ok(true);
        }
        let tail = 1e-3 / libm::sqrt(g.n().max(1) as f64);
        let t = self.track.as_mut().expect("checked above");
        for ev in &g.update_log()[t.cursor..] {
            match *ev {
                UpdateEvent::Border { index, .. } => {
                    debug_assert_eq!(index, t.sys.diag.len());
                    t.sys.diag.push(1.0);
                    for u in t.sys.chain.iter_mut() {
                        u.v.push(0.0);
                    }
                    let mut e = vec![0.0; index + 1];
                    e[index] = 1.0;
                    t.sys.chain.push(RankOne::new(-1.0, e));
                    for (_, x) in t.prev.iter_mut() {
                        x.push(self.rng.random_range(-tail..tail));
                    }
                }
                UpdateEvent::EdgeAdd(b) => {
                    let mut c = vec![0.0; t.sys.diag.len()];
                    for (row, val) in b.entries() {
                        if row < t.base_n {
                            axpy(val, t.basis.row(row), &mut c[..t.base_n]);
                        } else {
                            c[row] += val;
                        }
                    }
                    t.sys.chain.push(RankOne::new(1.0, c));
                }
            }
        }
        t.cursor = g.update_log().len();
        if t.sys.chain.len() > self.cfg.chain_cap.min(g.n()) {
            self.refactor(g)?;
            return Ok(true);
        }
        Ok(false)
    }

    fn refactor(&mut self, g: &DynamicLaplacian) -> Result<(), SpectralError> {
        let l = g.dense();
        let eig = jacobi_eigh(&l).ok_or(SpectralError::OracleFailed)?;
        self.stats.refactorizations += 1;
        self.track = Some(Track {
            generation: g.generation(),
            cursor: g.update_log().len(),
            base_n: g.n(),
            basis: eig.vectors.expect("vectors requested"),
            sys: EigenChain {
                diag: eig.values,
                chain: Vec::new(),
                bound: g.norm_inf(),
                floor: self.cfg.shift_floor,
            },
            prev: Vec::new(),
        });
        Ok(())
    }

    fn starts(&mut self, cfg: &SolverConfig) -> Vec<(f64, Vec<f64>)> {
        let t = self.track.as_ref().expect("synced");
        let n = t.sys.dim();
        let k = cfg.k;
        if t.prev.is_empty() {
            // exact eigenvectors of the diagonal part
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| match cfg.which {
                Which::Largest => t.sys.diag[b].total_cmp(&t.sys.diag[a]),
                Which::Smallest => t.sys.diag[a].total_cmp(&t.sys.diag[b]),
            });
            return idx
                .into_iter()
                .take(k)
                .map(|j| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    (t.sys.diag[j], e)
                })
                .collect();
        }
        let mut starts: Vec<(f64, Vec<f64>)> = if cfg.ritz_warm_start {
            let mut block: Vec<Vec<f64>> = t.prev.iter().map(|(_, x)| x.clone()).collect();
            let corrections: Vec<Vec<f64>> = block.iter().filter_map(|x| t.sys.olsen_correction(x)).collect();
            block.extend(corrections);
            ritz_pairs(&t.sys, &block, cfg.which)
        } else {
            t.prev.clone()
        };
        starts.truncate(k);
        let fill = match cfg.which {
            Which::Largest => t.sys.bound,
            Which::Smallest => 0.0,
        };
        while starts.len() < k {
            let x: Vec<f64> = (0..n).map(|_| self.rng.random_range(-1.0..1.0)).collect();
            starts.push((fill, x));
        }
        starts
    }

    fn solve(&mut self, g: &DynamicLaplacian, cfg: &SolverConfig) -> Result<Spectrum, SpectralError> {
        self.track.as_mut().expect("synced").sys.bound = g.norm_inf();
        let starts = self.starts(cfg);
        let t = self.track.as_ref().expect("synced");
        let pairs = solve_from_starts(&t.sys, &starts, cfg, &mut self.rng)?;
        let (pairs, swaps) = certify_extremes(&t.sys, pairs, cfg, &mut self.rng)?;
        self.stats.recoveries += swaps;
        self.histories = pairs.iter().map(|p| p.history.clone()).collect();

        let mut out = Vec::with_capacity(pairs.len());
        let mut coords = Vec::with_capacity(pairs.len());
        for RqiOutcome {
            vector: mut x,
            iterations,
            ..
        } in pairs
        {
            let mut u = t.to_agent(&x);
            normalize(&mut u);
            if canonical_sign(&mut u) {
                scale(-1.0, &mut x);
            }
            let lambda = rayleigh_quotient(g, &u)?;
            coords.push((lambda, x));
            out.push((lambda, u, iterations));
        }
        self.track.as_mut().expect("synced").prev = coords;
        let spec = Spectrum::from_pairs(g, out);
        residual_gate(&spec)?;
        Ok(spec)
    }
}

/// Every pair must satisfy `‖L u − λ u‖ ≤ 1e−8 · max(1, |λ|)`.
pub(crate) fn residual_gate(spec: &Spectrum) -> Result<(), SpectralError> {
    for (index, (r, lam)) in spec.residuals.iter().zip(&spec.values).enumerate() {
        let bound = 1e-8 * lam.abs().max(1.0);
        if !(*r <= bound) {
            return Err(SpectralError::ResidualGate {
                index,
                residual: *r,
                bound,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dense_oracle;
    use crate::trajgraph::Point;

    fn path3() -> DynamicLaplacian {
        let mut g = DynamicLaplacian::default();
        let p = |x| Point::new(x, 0.0);
        g.step(&[(1, p(0.0)), (2, p(1.0)), (3, p(2.5))], 1).unwrap();
        g
    }

    #[test]
    fn p3_cold_start() {
        let g = path3();
        let mut t = GraphRqi::new(SolverConfig::default().with_k(3));
        let s = t.spectrum(&g).unwrap();
        for (got, want) in s.values.iter().zip([0.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn unchanged_state_is_a_fixed_point() {
        let mut g = DynamicLaplacian::default();
        let p = |x, y| Point::new(x, y);
        g.step(
            &[(1, p(0.0, 0.0)), (2, p(1.0, 0.0)), (3, p(2.5, 0.3)), (4, p(0.2, 2.0))],
            1,
        )
        .unwrap();
        let mut t = GraphRqi::new(SolverConfig::default().with_k(2));
        t.spectrum(&g).unwrap();
        g.step(
            &[
                (1, p(0.0, 0.0)),
                (2, p(1.0, 0.0)),
                (3, p(2.5, 0.3)),
                (4, p(0.2, 2.0)),
                (5, p(3.0, 3.0)),
            ],
            2,
        )
        .unwrap();
        let a = t.spectrum(&g).unwrap();
        let b = t.spectrum(&g).unwrap();
        assert!(b.iterations.iter().all(|&i| i <= 1));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a
            .vectors
            .as_slice()
            .iter()
            .zip(b.vectors.as_slice())
            .all(|(x, y)| (x - y).abs() < 1e-10));
    }

    #[test]
    fn chain_inertia_matches_dense() {
        let mut g = path3();
        let mut t = GraphRqi::new(SolverConfig::default().with_k(1));
        t.spectrum(&g).unwrap();
        let p = |x, y| Point::new(x, y);
        g.step(
            &[(1, p(0.0, 0.0)), (2, p(1.0, 0.0)), (3, p(2.5, 0.0)), (4, p(1.0, 1.0))],
            2,
        )
        .unwrap();
        t.sync(&g).unwrap();
        let sys = &t.track.as_ref().unwrap().sys;
        assert!(!sys.chain.is_empty());
        let full = dense_oracle(&g.dense()).unwrap().values;
        for theta in [-0.5, 0.5, 1.7, 2.9, 4.1, 6.0] {
            let want = full.iter().filter(|v| **v > theta).count();
            assert_eq!(sys.inertia_at(theta).unwrap().positive, want, "theta {theta}");
        }
    }

    #[test]
    fn k_above_n_is_an_argument_error() {
        let g = path3();
        let mut t = GraphRqi::new(SolverConfig::default());
        assert_eq!(t.spectrum(&g), Err(SpectralError::KTooLarge { k: 6, n: 3 }));
    }
}
