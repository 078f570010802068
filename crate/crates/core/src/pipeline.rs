//! Trajectories to per-window features: one graph step per frame, the
//! tracked spectrum after each step, and a feature row per agent at the end
//! of every reset window.

use alloc::vec::Vec;

use thiserror::Error;

use crate::features::{
    aggressiveness_gradient, Aggregation, FeatureError, FeatureMatrix, TopologyVector, WindowAccumulator,
};
use crate::spectral::{GraphRqi, SolverConfig, SpectralError, Spectrum, TrackerStats};
use crate::trajgraph::{
    AgentId, DynamicLaplacian, GraphError, Point, TrajectorySet, Weighting, DEFAULT_KNN, DEFAULT_RESET,
};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub knn: usize,
    pub reset: usize,
    pub weighting: Weighting,
    pub solver: SolverConfig,
    pub aggregation: Aggregation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            knn: DEFAULT_KNN,
            reset: DEFAULT_RESET,
            weighting: Weighting::Unweighted,
            solver: SolverConfig::default(),
            aggregation: Aggregation::Final,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("no observations")]
    Empty,
    #[error("frame {frame}: {source}")]
    Graph { frame: i64, source: GraphError },
    #[error("frame {frame}: {source}")]
    Spectral { frame: i64, source: SpectralError },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowOutput {
    pub index: usize,
    pub first_frame: i64,
    pub last_frame: i64,
    pub features: FeatureMatrix,
    /// Spectrum at the last step of the window, rows aligned with `agents`.
    pub spectrum: Spectrum,
    pub agents: Vec<AgentId>,
    /// `L u` for the largest tracked eigenpair.
    pub topology: TopologyVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub windows: Vec<WindowOutput>,
    pub steps: usize,
    pub stats: TrackerStats,
}

impl PipelineOutput {
    /// All windows' feature rows stacked in window order.
    pub fn features(&self) -> FeatureMatrix {
        let parts: Vec<FeatureMatrix> = self.windows.iter().map(|w| w.features.clone()).collect();
        FeatureMatrix::concat(&parts).expect("windows share the feature width")
    }
}

/// Runs the full pipeline over every frame in the trajectories' range.
pub fn run(traj: &TrajectorySet, cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let (first, last) = traj.frame_range().ok_or(PipelineError::Empty)?;
    cfg.solver
        .validate()
        .map_err(|source| PipelineError::Spectral { frame: first, source })?;
    let k = cfg.solver.k;
    let mut g = DynamicLaplacian::new(cfg.weighting);
    let mut tracker = GraphRqi::new(cfg.solver);
    let mut acc = WindowAccumulator::new(k);
    let mut windows = Vec::new();
    let mut window_start = first;
    let mut steps = 0;

    for frame in first..=last {
        let snap = traj.snapshot(frame);
        let mut positions: Vec<(AgentId, Point)> = Vec::with_capacity(snap.len());
        for s in &snap {
            if s.present {
                positions.push((s.id, s.pos));
            } else if g.index_of(s.id).is_some_and(|r| !g.is_departed(r)) {
                g.mark_departed(s.id)
                    .map_err(|source| PipelineError::Graph { frame, source })?;
            }
        }
        if positions.is_empty() && g.n() == 0 {
            window_start = frame + 1;
            continue;
        }
        g.step(&positions, cfg.knn)
            .map_err(|source| PipelineError::Graph { frame, source })?;
        steps += 1;

        let spec = tracker
            .spectrum_k(&g, k.min(g.n()))
            .map_err(|source| PipelineError::Spectral { frame, source })?;
        acc.push(&spec, g.agents())?;

        let window_done = g.steps_since_reset() >= cfg.reset || frame == last;
        if window_done {
            let features = acc.finish(cfg.aggregation).expect("accumulator is non-empty");
            let topology = aggressiveness_gradient(&g, &spec)?;
            windows.push(WindowOutput {
                index: windows.len(),
                first_frame: window_start,
                last_frame: frame,
                features,
                spectrum: spec,
                agents: g.agents().to_vec(),
                topology,
            });
            acc = WindowAccumulator::new(k);
            window_start = frame + 1;
            g.maybe_reset(cfg.reset);
        }
    }
    Ok(PipelineOutput {
        windows,
        steps,
        stats: tracker.stats(),
    })
}
