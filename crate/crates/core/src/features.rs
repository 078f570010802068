//! Per-agent features from a spectrum and the topology vector `w = L u`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{Mat, SymmetricOperator};
use crate::spectral::Spectrum;
use crate::trajgraph::{knn_edges, AgentId, DynamicLaplacian, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("spectrum has no eigenpairs")]
    EmptySpectrum,
}

/// Row `i` is the feature vector of `agent_ids[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub agent_ids: Vec<AgentId>,
    pub rows: Mat,
}

impl FeatureMatrix {
    pub fn new(agent_ids: Vec<AgentId>, rows: Mat) -> Result<Self, FeatureError> {
        if agent_ids.len() != rows.rows() {
            return Err(FeatureError::Dimension {
                expected: rows.rows(),
                got: agent_ids.len(),
            });
        }
        Ok(Self { agent_ids, rows })
    }

    pub fn len(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    /// Stacks matrices of equal width.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<Self, FeatureError> {
        let dim = parts.first().map_or(0, FeatureMatrix::dim);
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for p in parts {
            if p.dim() != dim {
                return Err(FeatureError::Dimension {
                    expected: dim,
                    got: p.dim(),
                });
            }
            ids.extend_from_slice(&p.agent_ids);
            data.extend_from_slice(p.rows.as_slice());
        }
        let n = ids.len();
        Ok(Self {
            agent_ids: ids,
            rows: Mat::from_vec(n, dim, data),
        })
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let dim = self.dim();
        let mut data = Vec::with_capacity(idx.len() * dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            agent_ids: idx.iter().map(|&i| self.agent_ids[i]).collect(),
            rows: Mat::from_vec(idx.len(), dim, data),
        }
    }
}

/// `w = L u` for one eigenvector.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologyVector {
    pub w: Vec<f64>,
    /// Column of the source spectrum that produced `w`.
    pub source_eigindex: usize,
}

impl TopologyVector {
    /// Positions sorted by `|w|`, largest first; ties keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.w.len()).collect();
        idx.sort_by(|&a, &b| self.w[b].abs().total_cmp(&self.w[a].abs()).then(a.cmp(&b)));
        idx
    }
}

pub fn topology_vector<O: SymmetricOperator + ?Sized>(
    l: &O,
    u: &[f64],
    source_eigindex: usize,
) -> Result<TopologyVector, FeatureError> {
    if u.len() != l.dim() {
        return Err(FeatureError::Dimension {
            expected: l.dim(),
            got: u.len(),
        });
    }
    Ok(TopologyVector {
        w: l.apply(u),
        source_eigindex,
    })
}

/// `Σ_{k ∈ N(j)} A(j,k) (u(j) − u(k))` for every vertex, straight from the
/// adjacency lists.
pub fn neighbor_difference_sum(g: &DynamicLaplacian, u: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if u.len() != g.n() {
        return Err(FeatureError::Dimension {
            expected: g.n(),
            got: u.len(),
        });
    }
    Ok((0..g.n())
        .map(|j| g.neighbors(j).iter().map(|&(k, a)| a * (u[j] - u[k])).sum())
        .collect())
}

/// Topology vector of the largest eigenpair in `spec`.
pub fn aggressiveness_gradient<O: SymmetricOperator + ?Sized>(
    l: &O,
    spec: &Spectrum,
) -> Result<TopologyVector, FeatureError> {
    let j = spec.largest().ok_or(FeatureError::EmptySpectrum)?;
    topology_vector(l, &spec.vector(j), j)
}

/// Rows of `U`, one per agent.
pub fn agent_features(spec: &Spectrum, agent_ids: &[AgentId]) -> Result<FeatureMatrix, FeatureError> {
    FeatureMatrix::new(agent_ids.to_vec(), spec.vectors.clone())
}

/// How per-step spectra inside a window become one feature row per agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    /// Rows of `U` at the last step of the window.
    #[default]
    Final,
    /// Mean of an agent's rows over the steps it was present.
    Mean,
}

/// Collects spectra of one window. Narrower spectra (fewer agents than `k`)
/// are padded with zero columns.
#[derive(Clone, Debug)]
pub struct WindowAccumulator {
    k: usize,
    sums: BTreeMap<AgentId, (Vec<f64>, usize)>,
    order: Vec<AgentId>,
    last: Option<FeatureMatrix>,
}

impl WindowAccumulator {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            sums: BTreeMap::new(),
            order: Vec::new(),
            last: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.last.is_none()
    }

    pub fn push(&mut self, spec: &Spectrum, agent_ids: &[AgentId]) -> Result<(), FeatureError> {
        if spec.n() != agent_ids.len() {
            return Err(FeatureError::Dimension {
                expected: spec.n(),
                got: agent_ids.len(),
            });
        }
        let width = spec.k().min(self.k);
        let mut rows = Mat::zeros(agent_ids.len(), self.k);
        for (i, id) in agent_ids.iter().enumerate() {
            rows.row_mut(i)[..width].copy_from_slice(&spec.vectors.row(i)[..width]);
            let entry = self.sums.entry(*id).or_insert_with(|| {
                self.order.push(*id);
                (vec![0.0; self.k], 0)
            });
            for (s, v) in entry.0.iter_mut().zip(rows.row(i)) {
                *s += v;
            }
            entry.1 += 1;
        }
        self.last = Some(FeatureMatrix::new(agent_ids.to_vec(), rows)?);
        Ok(())
    }

    pub fn finish(&self, policy: Aggregation) -> Option<FeatureMatrix> {
        match policy {
            Aggregation::Final => self.last.clone(),
            Aggregation::Mean => {
                self.last.as_ref()?;
                let mut rows = Mat::zeros(self.order.len(), self.k);
                for (i, id) in self.order.iter().enumerate() {
                    let (sum, count) = &self.sums[id];
                    for (dst, s) in rows.row_mut(i).iter_mut().zip(sum) {
                        *dst = s / *count as f64;
                    }
                }
                Some(FeatureMatrix {
                    agent_ids: self.order.clone(),
                    rows,
                })
            }
        }
    }
}

/// Mean distance from each agent to its kNN-graph neighbors at one instant
/// (0 for isolated agents), aligned with `positions`.
pub fn mean_neighbor_distance(positions: &[(AgentId, Point)], k: usize) -> Vec<f64> {
    let index: BTreeMap<AgentId, usize> = positions.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
    let mut sum = vec![0.0; positions.len()];
    let mut count = vec![0usize; positions.len()];
    for e in knn_edges(positions, k) {
        let (i, j) = (index[&e.lo()], index[&e.hi()]);
        let d = positions[i].1.dist(&positions[j].1);
        sum[i] += d;
        sum[j] += d;
        count[i] += 1;
        count[j] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dense_oracle;

    fn star() -> Mat {
        Mat::from_rows(&[
            [3.0, -1.0, -1.0, -1.0],
            [-1.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0, 1.0],
        ])
    }

    #[test]
    fn k2_topology() {
        let l = Mat::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let w = topology_vector(&l, &[h, -h], 0).unwrap().w;
        let r2 = core::f64::consts::SQRT_2;
        assert!((w[0] - r2).abs() < 1e-15 && (w[1] + r2).abs() < 1e-15);
    }

    #[test]
    fn kernel_vector_gives_zero_w() {
        let s = 0.5;
        let w = topology_vector(&star(), &[s, s, s, s], 0).unwrap().w;
        assert!(w.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn star_center_ranks_first() {
        let l = star();
        let spec = dense_oracle(&l).unwrap();
        assert!((spec.values[3] - 4.0).abs() < 1e-12);
        let tv = aggressiveness_gradient(&l, &spec).unwrap();
        assert_eq!(tv.ranking()[0], 0);
        assert!(tv.w[1..].iter().all(|w| tv.w[0].abs() > w.abs()));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            topology_vector(&star(), &[1.0, 0.0], 0),
            Err(FeatureError::Dimension { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn features_are_rows_of_u() {
        let spec = dense_oracle(&Mat::from_rows(&[
            [1.0, -1.0, 0.0],
            [-1.0, 2.0, -1.0],
            [0.0, -1.0, 1.0],
        ]))
        .unwrap();
        let f = agent_features(&spec, &[7, 8, 9]).unwrap();
        assert_eq!(f.rows, spec.vectors);
        assert_eq!(f, agent_features(&spec, &[7, 8, 9]).unwrap());
    }

    #[test]
    fn mean_aggregation_averages_rows() {
        let mut acc = WindowAccumulator::new(2);
        let s1 = Spectrum {
            vectors: Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0]]),
            values: vec![0.0, 1.0],
            residuals: vec![0.0; 2],
            iterations: vec![0; 2],
        };
        let s2 = Spectrum {
            vectors: Mat::from_rows(&[[3.0, 0.0], [0.0, 3.0], [1.0, 1.0]]),
            values: vec![0.0, 1.0],
            residuals: vec![0.0; 2],
            iterations: vec![0; 2],
        };
        acc.push(&s1, &[1, 2]).unwrap();
        acc.push(&s2, &[1, 2, 3]).unwrap();
        let mean = acc.finish(Aggregation::Mean).unwrap();
        assert_eq!(mean.agent_ids, vec![1, 2, 3]);
        assert_eq!(mean.row(0), &[2.0, 0.0]);
        assert_eq!(mean.row(2), &[1.0, 1.0]);
        assert_eq!(acc.finish(Aggregation::Final).unwrap().rows, s2.vectors);
    }

    #[test]
    fn narrow_spectra_are_zero_padded() {
        let mut acc = WindowAccumulator::new(3);
        let s = Spectrum {
            vectors: Mat::from_rows(&[[0.5], [0.5]]),
            values: vec![0.0],
            residuals: vec![0.0],
            iterations: vec![0],
        };
        acc.push(&s, &[4, 5]).unwrap();
        assert_eq!(acc.finish(Aggregation::Final).unwrap().row(1), &[0.5, 0.0, 0.0]);
    }
}
