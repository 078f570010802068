//! Per-step timing of the incremental tracker against the fresh-factorization
//! baseline and a full dense re-decomposition, on synthetic growing graphs.
//!
//! Every timed step is checked against the dense oracle first; a mismatch
//! voids the run.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use graphrqi_core::spectral::{
    dense_oracle, inverse_iteration_baseline, GraphRqi, SolverConfig, SpectralError, Spectrum,
};
use graphrqi_core::trajgraph::{AgentId, DynamicLaplacian, Point};
use graphrqi_core::Mat;

use crate::error::Error as IoError;
use crate::io::write_file;

pub const NOTE: &str = "Timings are wall-clock on this machine. Absolute times depend on the host; \
only the method ordering and the log-log scaling slopes are compared. Sequence: kNN (k=4) graph on d random \
points, then one new edge per step between an agent and a nearby non-neighbor.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Graphrqi,
    InverseIteration,
    DenseOracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Graphrqi, Method::InverseIteration, Method::DenseOracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Graphrqi => "graphrqi",
            Method::InverseIteration => "inverse_iteration",
            Method::DenseOracle => "dense_oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub k: usize,
    /// Timed steps per repeat, after the warm-up.
    pub steps: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    pub eps: f64,
    /// Corrupts the tracker's answer at this timed step of the first repeat
    /// (exercises the correctness gate).
    pub inject_fault: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![25, 50, 100, 200],
            k: 6,
            steps: 20,
            repeats: 3,
            warmup: 3,
            seed: 0,
            eps: 1e-10,
            inject_fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub method: Method,
    pub d: usize,
    pub k: usize,
    pub median_s: f64,
    pub mean_s: f64,
    pub p95_s: f64,
    /// Median RQI iterations per eigenpair; 0 for the dense oracle.
    pub med_iters: f64,
    pub max_residual: f64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error("{} failed at d={d}, step {step}: {source}", method.name())]
    Solver {
        method: Method,
        d: usize,
        step: usize,
        source: SpectralError,
    },
    #[error("{} disagrees with the dense oracle at d={d}, step {step}: {detail}", method.name())]
    Correctness {
        method: Method,
        d: usize,
        step: usize,
        detail: String,
        laplacian: Mat,
    },
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidConfig(m));
        if self.sizes.is_empty() {
            return bad("no sizes".into());
        }
        if self.k == 0 {
            return bad("k = 0".into());
        }
        if let Some(&d) = self.sizes.iter().find(|&&d| d < self.k) {
            return bad(format!("size {d} is smaller than k = {}", self.k));
        }
        if self.repeats < 3 {
            return bad(format!("repeats = {} (need at least 3)", self.repeats));
        }
        if self.steps == 0 {
            return bad("steps = 0".into());
        }
        Ok(())
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            eps: self.eps,
            ..SolverConfig::default().with_k(self.k).with_seed(self.seed)
        }
    }
}

/// Starting graph and the edge added at each step.
pub struct GrowingSequence {
    pub start: DynamicLaplacian,
    pub edges: Vec<(AgentId, AgentId)>,
}

/// kNN graph on `d` uniform points (density about one per unit area), then
/// `steps` edges, each from a random agent to one of its eight nearest
/// agents not yet linked (or any non-neighbor if all eight are).
pub fn growing_sequence(d: usize, steps: usize, seed: u64) -> GrowingSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let side = (d as f64).sqrt();
    let pts: Vec<(AgentId, Point)> = (0..d as AgentId)
        .map(|id| (id, Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side))))
        .collect();
    let mut g = DynamicLaplacian::default();
    g.step(&pts, 4).expect("fresh agents with finite positions");
    let start = g.clone();
    let near: Vec<Vec<AgentId>> = pts
        .iter()
        .map(|(a, pa)| {
            let mut o: Vec<&(AgentId, Point)> = pts.iter().filter(|(b, _)| b != a).collect();
            o.sort_by(|x, y| pa.dist2(&x.1).total_cmp(&pa.dist2(&y.1)).then(x.0.cmp(&y.0)));
            o.iter().take(8).map(|(b, _)| *b).collect()
        })
        .collect();
    let mut edges = Vec::with_capacity(steps);
    while edges.len() < steps {
        let a = rng.random_range(0..d as AgentId);
        let free: Vec<AgentId> = near[a as usize]
            .iter()
            .copied()
            .filter(|&b| !g.has_edge(a, b))
            .collect();
        let b = match free.choose(&mut rng) {
            Some(&b) => b,
            None => {
                let any: Vec<AgentId> = (0..d as AgentId).filter(|&b| b != a && !g.has_edge(a, b)).collect();
                match any.choose(&mut rng) {
                    Some(&b) => b,
                    None => continue,
                }
            }
        };
        g.add_edge(a, b).expect("known agents");
        edges.push((a, b));
    }
    GrowingSequence { start, edges }
}

fn check_against(
    method: Method,
    d: usize,
    step: usize,
    got: &Spectrum,
    oracle: &Spectrum,
    l: &Mat,
) -> Result<f64, BenchError> {
    let k = got.k();
    let want = &oracle.values[oracle.values.len() - k..];
    let fail = |detail: String| BenchError::Correctness {
        method,
        d,
        step,
        detail,
        laplacian: l.clone(),
    };
    for (j, (a, b)) in got.values.iter().zip(want).enumerate() {
        if (a - b).abs() > 1e-6 * b.abs().max(1.0) {
            return Err(fail(format!("eigenvalue {j}: {a} vs oracle {b}")));
        }
    }
    let mut worst: f64 = 0.0;
    for (j, (r, lam)) in got.residuals.iter().zip(&got.values).enumerate() {
        if !(*r <= 1e-8 * lam.abs().max(1.0)) {
            return Err(fail(format!("residual {r:e} for eigenpair {j}")));
        }
        worst = worst.max(*r);
    }
    Ok(worst)
}

#[derive(Default)]
struct Samples {
    times: Vec<f64>,
    iters: Vec<f64>,
    residual: f64,
}

fn median(v: &mut [f64]) -> f64 {
    quantile(v, 0.5)
}

/// Linear interpolation between order statistics.
fn quantile(v: &mut [f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let out = f();
    (out, t0.elapsed())
}

/// Runs all sizes; one [`BenchResult`] per method and size, in
/// `Method::ALL` order within each size.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchResult>, BenchError> {
    cfg.validate()?;
    let solver = cfg.solver();
    let mut results = Vec::new();
    for &d in &cfg.sizes {
        let seq = growing_sequence(d, cfg.warmup + cfg.steps, cfg.seed);
        let mut samples: [Samples; 3] = Default::default();
        for rep in 0..cfg.repeats {
            let mut g = seq.start.clone();
            let mut tracker = GraphRqi::new(solver);
            tracker.spectrum(&g).map_err(|source| BenchError::Solver {
                method: Method::Graphrqi,
                d,
                step: 0,
                source,
            })?;
            for (step, &(a, b)) in seq.edges.iter().enumerate() {
                g.add_edge(a, b).expect("sequence edges are new");
                let l = g.dense();
                let solve_err = |method| {
                    move |source| BenchError::Solver {
                        method,
                        d,
                        step,
                        source,
                    }
                };
                let (rqi, t_rqi) = timed(|| tracker.spectrum(&g));
                let mut rqi = rqi.map_err(solve_err(Method::Graphrqi))?;
                let (base, t_base) = timed(|| inverse_iteration_baseline(&l, &solver));
                let base = base.map_err(solve_err(Method::InverseIteration))?;
                let (oracle, t_oracle) = timed(|| dense_oracle(&l));
                let oracle = oracle.map_err(solve_err(Method::DenseOracle))?;

                let timed_step = step.checked_sub(cfg.warmup);
                if rep == 0 && timed_step.is_some() && timed_step == cfg.inject_fault {
                    let last = rqi.values.len() - 1;
                    rqi.values[last] *= 1.0 + 1e-3;
                }
                let r_rqi = check_against(Method::Graphrqi, d, step, &rqi, &oracle, &l)?;
                let r_base = check_against(Method::InverseIteration, d, step, &base, &oracle, &l)?;
                let top = &oracle.residuals[oracle.k() - cfg.k..];
                let r_oracle = top.iter().fold(0.0f64, |m, r| m.max(*r));

                if timed_step.is_none() {
                    continue;
                }
                for (s, (t, r, it)) in samples.iter_mut().zip([
                    (t_rqi, r_rqi, Some(&rqi)),
                    (t_base, r_base, Some(&base)),
                    (t_oracle, r_oracle, None),
                ]) {
                    s.times.push(t.as_secs_f64());
                    s.residual = s.residual.max(r);
                    match it {
                        Some(sp) => s.iters.extend(sp.iterations.iter().map(|&i| i as f64)),
                        None => s.iters.push(0.0),
                    }
                }
            }
        }
        for (method, mut s) in Method::ALL.into_iter().zip(samples) {
            let mean = s.times.iter().sum::<f64>() / s.times.len() as f64;
            results.push(BenchResult {
                method,
                d,
                k: cfg.k,
                median_s: median(&mut s.times),
                mean_s: mean,
                p95_s: quantile(&mut s.times, 0.95),
                med_iters: median(&mut s.iters),
                max_residual: s.residual,
            });
        }
    }
    Ok(results)
}

/// Least-squares slope of `ln(median_s)` against `ln(d)` for one method.
pub fn loglog_slope(results: &[BenchResult], method: Method) -> Option<f64> {
    let pts: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.method == method && r.median_s > 0.0)
        .map(|r| ((r.d as f64).ln(), r.median_s.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub const CSV_HEADER: &str = "method,d,k,median_s,mean_s,p95_s,med_iters,max_residual";

pub fn write_csv(path: &Path, results: &[BenchResult]) -> Result<(), IoError> {
    if results.is_empty() {
        return Err(IoError::format(path, "no benchmark results to write"));
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:e},{:e},{},{:e}",
            r.method.name(),
            r.d,
            r.k,
            r.median_s,
            r.mean_s,
            r.p95_s,
            r.med_iters,
            r.max_residual
        );
    }
    write_file(path, out.as_bytes())
}

#[derive(Serialize)]
struct JsonReport<'a> {
    note: &'static str,
    slopes: Vec<(&'static str, Option<f64>)>,
    results: &'a [BenchResult],
}

/// The same rows as [`write_csv`], with the note and per-method slopes.
pub fn write_json(path: &Path, results: &[BenchResult]) -> Result<(), IoError> {
    if results.is_empty() {
        return Err(IoError::format(path, "no benchmark results to write"));
    }
    let report = JsonReport {
        note: NOTE,
        slopes: Method::ALL
            .iter()
            .map(|m| (m.name(), loglog_slope(results, *m)))
            .collect(),
        results,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| IoError::format(path, e.to_string()))?;
    write_file(path, (text + "\n").as_bytes())
}

/// Plain-text summary: the note, one line per result and the slopes.
pub fn summary(results: &[BenchResult]) -> String {
    let mut out = format!("{NOTE}\n");
    for r in results {
        let _ = writeln!(
            out,
            "{:<18} d={:<4} median {:>10.3} ms  p95 {:>10.3} ms  iters {:>4}  residual {:.1e}",
            r.method.name(),
            r.d,
            r.median_s * 1e3,
            r.p95_s * 1e3,
            r.med_iters,
            r.max_residual
        );
    }
    for m in Method::ALL {
        if let Some(s) = loglog_slope(results, m) {
            let _ = writeln!(out, "log-log slope {:<18} {s:.2}", m.name());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&mut v), 2.5);
        assert_eq!(quantile(&mut v, 1.0), 4.0);
    }

    #[test]
    fn slope_of_a_power_law() {
        let rows: Vec<BenchResult> = [10usize, 20, 40]
            .iter()
            .map(|&d| BenchResult {
                method: Method::DenseOracle,
                d,
                k: 1,
                median_s: 1e-9 * (d as f64).powi(3),
                mean_s: 0.0,
                p95_s: 0.0,
                med_iters: 0.0,
                max_residual: 0.0,
            })
            .collect();
        assert!((loglog_slope(&rows, Method::DenseOracle).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(loglog_slope(&rows, Method::Graphrqi), None);
    }

    #[test]
    fn sequence_is_deterministic_and_new_edges_only() {
        let a = growing_sequence(30, 10, 5);
        let b = growing_sequence(30, 10, 5);
        assert_eq!(a.edges, b.edges);
        for (x, y) in &a.edges {
            assert!(!a.start.has_edge(*x, *y));
        }
    }

    #[test]
    fn config_validation() {
        let bad = BenchConfig {
            sizes: vec![4],
            ..BenchConfig::default()
        };
        assert!(matches!(bad.validate(), Err(BenchError::InvalidConfig(_))));
        let few = BenchConfig {
            repeats: 2,
            ..BenchConfig::default()
        };
        assert!(few.validate().is_err());
    }
}
