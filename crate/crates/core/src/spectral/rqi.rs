use alloc::vec::Vec;

use rand::Rng;

use super::{rayleigh_quotient, ShiftedSystem, SolverConfig, SpectralError, Which};
use crate::linalg::{deflate, distance, dot, jacobi_eigh, normalize, scale, Mat};

/// One converged eigenpair.
#[derive(Clone, Debug, PartialEq)]
pub struct RqiOutcome {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// Sign-aligned step `‖x_new − x_old‖₂` of every iteration.
    pub history: Vec<f64>,
}

/// Rayleigh quotient iteration for one eigenpair.
///
/// The first solve uses `mu0`, later ones the Rayleigh quotient of the
/// current iterate. Every iterate is orthogonalized against `locked`
/// (orthonormal, already converged eigenvectors).
pub fn rqi_eigenpair<S: ShiftedSystem + ?Sized>(
    sys: &S,
    mu0: f64,
    x0: &[f64],
    locked: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<RqiOutcome, SpectralError> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(SpectralError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    deflate(&mut x, locked);
    if normalize(&mut x) == 0.0 {
        return Err(SpectralError::ZeroVector);
    }
    let locked_values = locked
        .iter()
        .map(|u| rayleigh_quotient(sys, u))
        .collect::<Result<Vec<_>, _>>()?;
    let bump = cfg.shift_floor * sys.norm_bound().max(1.0);

    let mut mu = mu0;
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        let mut y = guarded_solve(sys, mu, &x, &locked_values, bump)?;
        deflate(&mut y, locked);
        let nrm = normalize(&mut y);
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(SpectralError::SingularShift { mu });
        }
        if dot(&y, &x) < 0.0 {
            scale(-1.0, &mut y);
        }
        let step = distance(&y, &x);
        let stalled = history.last().is_some_and(|prev| step > 0.5 * prev);
        history.push(step);
        x = y;
        mu = rayleigh_quotient(sys, &x)?;
        // inside a (near-)degenerate cluster the direction never settles;
        // accept once the residual is at tolerance and steps stop shrinking
        let settled = stalled && it >= 3 && super::residual(sys, mu, &x) <= cfg.eps * sys.norm_bound().max(1.0);
        if step <= cfg.eps || settled {
            return Ok(RqiOutcome {
                lambda: mu,
                vector: x,
                iterations: it,
                history,
            });
        }
    }
    Err(SpectralError::NoConvergence {
        iterations: cfg.max_iter,
        lambda: mu,
        last_step: history.last().copied().unwrap_or(f64::NAN),
        best: x,
    })
}

/// Shifted solve that nudges `mu` off locked eigenvalues and off exact
/// singularities.
fn guarded_solve<S: ShiftedSystem + ?Sized>(
    sys: &S,
    mu: f64,
    x: &[f64],
    locked_values: &[f64],
    bump: f64,
) -> Result<Vec<f64>, SpectralError> {
    let mut shift = mu;
    if locked_values.iter().any(|l| (l - shift).abs() < bump) {
        log::debug!("shift {mu} collides with a locked eigenvalue, perturbing");
        shift += bump;
    }
    let mut nudge = bump;
    for _ in 0..4 {
        match sys.solve_shifted(shift, x) {
            Ok(y) if y.iter().all(|v| v.is_finite()) => return Ok(y),
            Ok(_) | Err(SpectralError::SingularUpdate { .. }) | Err(SpectralError::SingularShift { .. }) => {
                log::debug!("singular shifted solve at {shift}, perturbing");
                shift += nudge;
                nudge *= 16.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(SpectralError::SingularShift { mu })
}

pub(crate) fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if normalize(&mut x) > 1e-3 {
            return x;
        }
    }
}

/// `true` if `a` comes before `b` in the tracking order (best first).
pub(crate) fn precedes(which: Which, a: f64, b: f64) -> bool {
    match which {
        Which::Largest => a > b,
        Which::Smallest => a < b,
    }
}

pub(crate) fn sort_best_first(which: Which, pairs: &mut [RqiOutcome]) {
    pairs.sort_by(|a, b| match which {
        Which::Largest => b.lambda.total_cmp(&a.lambda),
        Which::Smallest => a.lambda.total_cmp(&b.lambda),
    });
}

/// Shift beyond the tracked end of the spectrum.
pub(crate) fn outer_shift<S: ShiftedSystem + ?Sized>(sys: &S, which: Which) -> f64 {
    let b = sys.norm_bound().max(1.0);
    match which {
        Which::Largest => b * (1.0 + 1e-3),
        Which::Smallest => -1e-3 * b,
    }
}

/// Finds the extreme eigenpair orthogonal to `locked`: a few inverse
/// iterations at a shift outside the spectrum, then RQI.
pub(crate) fn seek_extreme<S: ShiftedSystem + ?Sized, R: Rng>(
    sys: &S,
    locked: &[Vec<f64>],
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<RqiOutcome, SpectralError> {
    seek_near(sys, outer_shift(sys, cfg.which), locked, cfg, rng)
}

/// Inverse iteration at a fixed `shift` until the direction settles, then
/// RQI. Finds the eigenpair orthogonal to `locked` closest to `shift`.
pub(crate) fn seek_near<S: ShiftedSystem + ?Sized, R: Rng>(
    sys: &S,
    shift: f64,
    locked: &[Vec<f64>],
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<RqiOutcome, SpectralError> {
    let n = sys.dim();
    let mut x = random_unit(n, rng);
    deflate(&mut x, locked);
    if normalize(&mut x) == 0.0 {
        return Err(SpectralError::ZeroVector);
    }
    let mut spent = 0;
    let mut pre = Vec::new();
    for _ in 0..8 {
        let mut y = guarded_solve(sys, shift, &x, &[], cfg.shift_floor * sys.norm_bound().max(1.0))?;
        deflate(&mut y, locked);
        if normalize(&mut y) == 0.0 {
            return Err(SpectralError::ZeroVector);
        }
        if dot(&y, &x) < 0.0 {
            scale(-1.0, &mut y);
        }
        let step = distance(&y, &x);
        pre.push(step);
        x = y;
        spent += 1;
        if step < 1e-2 {
            break;
        }
    }
    let mu = rayleigh_quotient(sys, &x)?;
    let mut out = rqi_eigenpair(sys, mu, &x, locked, cfg)?;
    out.iterations += spent;
    pre.append(&mut out.history);
    out.history = pre;
    Ok(out)
}

/// Runs RQI from each start in turn, locking every converged vector.
pub(crate) fn solve_from_starts<S: ShiftedSystem + ?Sized, R: Rng>(
    sys: &S,
    starts: &[(f64, Vec<f64>)],
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Vec<RqiOutcome>, SpectralError> {
    let mut found: Vec<RqiOutcome> = Vec::with_capacity(starts.len());
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(starts.len());
    for (mu0, x0) in starts {
        let out = match rqi_eigenpair(sys, *mu0, x0, &locked, cfg) {
            Err(SpectralError::ZeroVector) => seek_extreme(sys, &locked, cfg, rng)?,
            other => other?,
        };
        locked.push(out.vector.clone());
        found.push(out);
    }
    Ok(found)
}

/// Checks with an exact inertia count that no eigenvalue beyond the worst
/// found one was missed, and swaps in any that were.
pub(crate) fn certify_extremes<S: ShiftedSystem + ?Sized, R: Rng>(
    sys: &S,
    mut pairs: Vec<RqiOutcome>,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<(Vec<RqiOutcome>, usize), SpectralError> {
    let k = pairs.len();
    let tau = 1e-8 * sys.norm_bound().max(1.0);
    let mut swaps = 0;
    for _ in 0..(2 * k + 2) {
        sort_best_first(cfg.which, &mut pairs);
        let Some(worst) = pairs.last().map(|p| p.lambda) else {
            return Ok((pairs, swaps));
        };
        let theta = match cfg.which {
            Which::Largest => worst + tau,
            Which::Smallest => worst - tau,
        };
        let Some(missed) = missed_beyond(sys, &pairs, cfg.which, theta) else {
            return Ok((pairs, swaps));
        };
        if missed == 0 {
            return Ok((pairs, swaps));
        }
        log::debug!("{missed} eigenvalue(s) beyond {theta} were missed");
        let shift = bracket_missed(sys, &pairs, cfg.which, theta);
        let locked: Vec<Vec<f64>> = pairs.iter().map(|p| p.vector.clone()).collect();
        let fresh = seek_near(sys, shift, &locked, cfg, rng)?;
        if precedes(cfg.which, fresh.lambda, worst) {
            pairs.pop();
            pairs.push(fresh);
            swaps += 1;
        }
    }
    Err(SpectralError::Incomplete { k })
}

/// Eigenvalues beyond `theta` (towards the tracked end) that are not in `pairs`.
fn missed_beyond<S: ShiftedSystem + ?Sized>(sys: &S, pairs: &[RqiOutcome], which: Which, theta: f64) -> Option<usize> {
    let inertia = sys.inertia_at(theta)?;
    let present = match which {
        Which::Largest => inertia.positive,
        Which::Smallest => inertia.negative,
    };
    let found = pairs.iter().filter(|p| precedes(which, p.lambda, theta)).count();
    Some(present.saturating_sub(found))
}

/// Bisects with inertia counts towards the outermost missed eigenvalue and
/// returns a shift next to it.
fn bracket_missed<S: ShiftedSystem + ?Sized>(sys: &S, pairs: &[RqiOutcome], which: Which, theta: f64) -> f64 {
    let scale = sys.norm_bound().max(1.0);
    // `inner` always has a missed eigenvalue beyond it, `outer` never does
    let mut inner = theta;
    let mut outer = match which {
        Which::Largest => scale * (1.0 + 1e-6),
        Which::Smallest => -1e-6 * scale,
    };
    for _ in 0..64 {
        if (outer - inner).abs() <= 1e-7 * scale {
            break;
        }
        let mid = 0.5 * (inner + outer);
        match missed_beyond(sys, pairs, which, mid) {
            Some(0) => outer = mid,
            Some(_) => inner = mid,
            // landed on a diagonal entry; nudge and retry
            None => inner = mid + 1e-9 * scale * (outer - inner).signum(),
        }
    }
    0.5 * (inner + outer)
}

/// Rayleigh-Ritz on the span of `block`. Returns Ritz pairs best first;
/// numerically dependent directions are dropped.
pub(crate) fn ritz_pairs<S: ShiftedSystem + ?Sized>(sys: &S, block: &[Vec<f64>], which: Which) -> Vec<(f64, Vec<f64>)> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    for v in block {
        let mut v = v.clone();
        deflate(&mut v, &q);
        if normalize(&mut v) > 1e-6 {
            deflate(&mut v, &q);
            normalize(&mut v);
            q.push(v);
        }
    }
    let m = q.len();
    if m == 0 {
        return Vec::new();
    }
    let aq: Vec<Vec<f64>> = q.iter().map(|v| sys.apply(v)).collect();
    let mut h = Mat::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = 0.5 * (dot(&q[i], &aq[j]) + dot(&q[j], &aq[i]));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let Some(eig) = jacobi_eigh(&h) else {
        return q
            .into_iter()
            .map(|v| (rayleigh_quotient(sys, &v).unwrap_or(0.0), v))
            .collect();
    };
    let s = eig.vectors.expect("vectors requested");
    let n = sys.dim();
    let mut out: Vec<(f64, Vec<f64>)> = (0..m)
        .map(|j| {
            let mut y = alloc::vec![0.0; n];
            for (i, qi) in q.iter().enumerate() {
                crate::linalg::axpy(s[(i, j)], qi, &mut y);
            }
            normalize(&mut y);
            (eig.values[j], y)
        })
        .collect();
    out.sort_by(|a, b| match which {
        Which::Largest => b.0.total_cmp(&a.0),
        Which::Smallest => a.0.total_cmp(&b.0),
    });
    out
}
