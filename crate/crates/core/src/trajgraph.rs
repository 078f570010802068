//! Trajectories, k-nearest-neighbor traffic graphs and the dynamic Laplacian.
//!
//! A [`DynamicLaplacian`] only grows inside a reset window: new agents are
//! bordered in as an empty row/column and every new neighbor relation is one
//! signed incidence update `L ← L + b bᵀ`. The full history since the last
//! reset is kept in the update log so the spectral solver can replay it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{Mat, SymmetricOperator};

pub type AgentId = u64;

/// Default neighbor count for graph construction.
pub const DEFAULT_KNN: usize = 4;
/// Default number of steps between Laplacian resets.
pub const DEFAULT_RESET: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        libm::sqrt(self.dist2(other))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub frame: i64,
    pub pos: Point,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajError {
    #[error("agent {agent} has more than one observation at frame {frame}")]
    Duplicate { agent: AgentId, frame: i64 },
    #[error("agent {agent} has a non-finite coordinate at frame {frame}")]
    NonFinite { agent: AgentId, frame: i64 },
    #[error("agent {agent}: frame {frame} does not come after frame {last}")]
    OutOfOrder { agent: AgentId, frame: i64, last: i64 },
}

/// Per-agent tracks with strictly increasing frames.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectorySet {
    tracks: BTreeMap<AgentId, Vec<Observation>>,
}

impl TrajectorySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Collects observations in any order; tracks are sorted by frame.
    pub fn from_observations<I>(rows: I) -> Result<Self, TrajError>
    where
        I: IntoIterator<Item = (AgentId, Observation)>,
    {
        let mut tracks: BTreeMap<AgentId, Vec<Observation>> = BTreeMap::new();
        for (agent, obs) in rows {
            if !obs.pos.is_finite() {
                return Err(TrajError::NonFinite {
                    agent,
                    frame: obs.frame,
                });
            }
            tracks.entry(agent).or_default().push(obs);
        }
        for (agent, track) in tracks.iter_mut() {
            track.sort_by_key(|o| o.frame);
            if let Some(w) = track.windows(2).find(|w| w[0].frame == w[1].frame) {
                return Err(TrajError::Duplicate {
                    agent: *agent,
                    frame: w[0].frame,
                });
            }
        }
        Ok(Self { tracks })
    }

    /// Appends one observation; frames must strictly increase per agent.
    pub fn push(&mut self, agent: AgentId, obs: Observation) -> Result<(), TrajError> {
        if !obs.pos.is_finite() {
            return Err(TrajError::NonFinite {
                agent,
                frame: obs.frame,
            });
        }
        let track = self.tracks.entry(agent).or_default();
        if let Some(last) = track.last() {
            if last.frame == obs.frame {
                return Err(TrajError::Duplicate {
                    agent,
                    frame: obs.frame,
                });
            }
            if last.frame > obs.frame {
                return Err(TrajError::OutOfOrder {
                    agent,
                    frame: obs.frame,
                    last: last.frame,
                });
            }
        }
        track.push(obs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn track(&self, agent: AgentId) -> Option<&[Observation]> {
        self.tracks.get(&agent).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, &[Observation])> {
        self.tracks.iter().map(|(id, t)| (*id, t.as_slice()))
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.tracks.keys().copied()
    }

    pub fn observation_count(&self) -> usize {
        self.tracks.values().map(Vec::len).sum()
    }

    /// First and last frame over all tracks.
    pub fn frame_range(&self) -> Option<(i64, i64)> {
        let first = self.tracks.values().filter_map(|t| t.first()).map(|o| o.frame).min()?;
        let last = self.tracks.values().filter_map(|t| t.last()).map(|o| o.frame).max()?;
        Some((first, last))
    }

    /// Latest position at or before `frame`.
    pub fn position_at(&self, agent: AgentId, frame: i64) -> Option<Point> {
        let track = self.tracks.get(&agent)?;
        let idx = track.partition_point(|o| o.frame <= frame);
        (idx > 0).then(|| track[idx - 1].pos)
    }

    /// Every agent that has appeared by `frame`, with its latest position and
    /// whether its track still covers `frame`.
    pub fn snapshot(&self, frame: i64) -> Vec<AgentSnapshot> {
        self.tracks
            .iter()
            .filter_map(|(&id, track)| {
                let idx = track.partition_point(|o| o.frame <= frame);
                (idx > 0).then(|| AgentSnapshot {
                    id,
                    pos: track[idx - 1].pos,
                    present: track.last().is_some_and(|o| o.frame >= frame),
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentSnapshot {
    pub id: AgentId,
    pub pos: Point,
    pub present: bool,
}

/// Unordered agent pair, stored with the smaller id first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(AgentId, AgentId);

impl Edge {
    /// Panics on self-loops.
    pub fn new(a: AgentId, b: AgentId) -> Self {
        assert_ne!(a, b, "self-loop");
        if a < b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn lo(&self) -> AgentId {
        self.0
    }

    pub fn hi(&self) -> AgentId {
        self.1
    }
}

/// Symmetrized kNN edge set: each agent links to its `min(k, n-1)` nearest
/// agents by Euclidean distance, equal distances going to the smaller id.
pub fn knn_edges(positions: &[(AgentId, Point)], k: usize) -> BTreeSet<Edge> {
    let mut edges = BTreeSet::new();
    let n = positions.len();
    if n < 2 || k == 0 {
        return edges;
    }
    let take = k.min(n - 1);
    let mut cand: Vec<(f64, AgentId)> = Vec::with_capacity(n - 1);
    for (i, (id, p)) in positions.iter().enumerate() {
        cand.clear();
        cand.extend(
            positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, (other, q))| (p.dist2(q), *other)),
        );
        if take < cand.len() {
            cand.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        for &(_, other) in &cand[..take] {
            edges.insert(Edge::new(*id, other));
        }
    }
    edges
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    /// `A(i, j) = 1` for neighbors.
    #[default]
    Unweighted,
    /// `A(i, j) = exp(-d(i, j))`, with `d` taken when the edge first appears.
    Gaussian,
}

impl Weighting {
    fn weight(self, d: f64) -> f64 {
        match self {
            Weighting::Unweighted => 1.0,
            Weighting::Gaussian => libm::exp(-d),
        }
    }
}

/// `b = scale · (e_plus − e_minus)` over Laplacian row indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Incidence {
    pub plus: usize,
    pub minus: usize,
    pub scale: f64,
}

impl Incidence {
    /// Nonzero entries of `b` as `(row, value)`.
    pub fn entries(&self) -> [(usize, f64); 2] {
        [(self.plus, self.scale), (self.minus, -self.scale)]
    }

    /// Edge weight `w` such that `b bᵀ` adds `w` to both degrees.
    pub fn weight(&self) -> f64 {
        self.scale * self.scale
    }

    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut b = vec![0.0; n];
        for (i, v) in self.entries() {
            b[i] = v;
        }
        b
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateEvent {
    /// A new agent took the next row/column, initially all zero.
    Border { agent: AgentId, index: usize },
    /// One rank-1 update `L ← L + b bᵀ`.
    EdgeAdd(Incidence),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("agent {0} was seen earlier in this window but is missing from the positions")]
    AgentMissing(AgentId),
    #[error("agent {0} is listed more than once")]
    DuplicateAgent(AgentId),
    #[error("agent {0} has a non-finite position")]
    NonFinite(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("self-loop on agent {0}")]
    SelfLoop(AgentId),
}

/// Growing graph Laplacian `L = D − A` with its construction log.
#[derive(Clone, Debug)]
pub struct DynamicLaplacian {
    weighting: Weighting,
    agents: Vec<AgentId>,
    index: BTreeMap<AgentId, usize>,
    last_pos: Vec<Point>,
    departed: Vec<bool>,
    degree: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
    edges: BTreeMap<Edge, f64>,
    log: Vec<UpdateEvent>,
    base_agents: usize,
    base_edges: Vec<(usize, usize, f64)>,
    steps_since_reset: usize,
    generation: u64,
    knn_k: usize,
}

impl Default for DynamicLaplacian {
    fn default() -> Self {
        Self::new(Weighting::Unweighted)
    }
}

impl DynamicLaplacian {
    pub fn new(weighting: Weighting) -> Self {
        Self {
            weighting,
            agents: Vec::new(),
            index: BTreeMap::new(),
            last_pos: Vec::new(),
            departed: Vec::new(),
            degree: Vec::new(),
            adjacency: Vec::new(),
            edges: BTreeMap::new(),
            log: Vec::new(),
            base_agents: 0,
            base_edges: Vec::new(),
            steps_since_reset: 0,
            generation: 0,
            knn_k: DEFAULT_KNN,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Agent ids in row order.
    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn index_of(&self, agent: AgentId) -> Option<usize> {
        self.index.get(&agent).copied()
    }

    pub fn position(&self, row: usize) -> Point {
        self.last_pos[row]
    }

    pub fn is_departed(&self, row: usize) -> bool {
        self.departed[row]
    }

    pub fn edge_set(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.keys().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: AgentId, b: AgentId) -> bool {
        a != b && self.edges.contains_key(&Edge::new(a, b))
    }

    /// Edges as `(row, row, weight)` in edge-set order.
    pub fn weighted_edges(&self) -> Vec<(usize, usize, f64)> {
        self.edges
            .iter()
            .map(|(e, w)| (self.index[&e.lo()], self.index[&e.hi()], *w))
            .collect()
    }

    pub fn update_log(&self) -> &[UpdateEvent] {
        &self.log
    }

    pub fn steps_since_reset(&self) -> usize {
        self.steps_since_reset
    }

    /// Bumped on every reset; lets consumers notice the log was cleared.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn degree(&self, row: usize) -> f64 {
        self.degree[row]
    }

    pub fn neighbors(&self, row: usize) -> &[(usize, f64)] {
        &self.adjacency[row]
    }

    /// `‖L‖_∞ = 2 · max degree`.
    pub fn norm_inf(&self) -> f64 {
        2.0 * self.degree.iter().copied().fold(0.0, f64::max)
    }

    /// Materialized Laplacian.
    pub fn dense(&self) -> Mat {
        let n = self.n();
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = self.degree[i];
            for &(j, w) in &self.adjacency[i] {
                l[(i, j)] -= w;
            }
        }
        l
    }

    /// Rebuilds the Laplacian directly from the accumulated edge set.
    pub fn from_scratch(&self) -> Mat {
        laplacian_from_edges(self.n(), &self.weighted_edges())
    }

    /// Replays the update log on top of the post-reset base.
    pub fn replay(&self) -> Mat {
        let mut l = laplacian_from_edges(self.base_agents, &self.base_edges);
        for ev in &self.log {
            match ev {
                UpdateEvent::Border { .. } => {
                    let n = l.rows();
                    let mut grown = Mat::zeros(n + 1, n + 1);
                    for i in 0..n {
                        grown.row_mut(i)[..n].copy_from_slice(l.row(i));
                    }
                    l = grown;
                }
                UpdateEvent::EdgeAdd(b) => {
                    for (i, bi) in b.entries() {
                        for (j, bj) in b.entries() {
                            l[(i, j)] += bi * bj;
                        }
                    }
                }
            }
        }
        l
    }

    /// Advances one time-step.
    ///
    /// `positions` must list every agent seen in this window that has not been
    /// marked departed (departed agents may be listed too, which revives
    /// them). Unknown ids are bordered in ascending id order, then every kNN
    /// edge not yet present becomes an `EdgeAdd`.
    pub fn step(&mut self, positions: &[(AgentId, Point)], k: usize) -> Result<Vec<UpdateEvent>, GraphError> {
        self.knn_k = k;
        let mut seen = BTreeSet::new();
        let mut fresh = Vec::new();
        for &(id, p) in positions {
            if !p.is_finite() {
                return Err(GraphError::NonFinite(id));
            }
            if !seen.insert(id) {
                return Err(GraphError::DuplicateAgent(id));
            }
            if !self.index.contains_key(&id) {
                fresh.push((id, p));
            }
        }
        if let Some(row) = (0..self.n()).find(|&r| !self.departed[r] && !seen.contains(&self.agents[r])) {
            return Err(GraphError::AgentMissing(self.agents[row]));
        }

        let mut events = Vec::new();
        fresh.sort_by_key(|(id, _)| *id);
        for (id, p) in fresh {
            events.push(self.border(id, p));
        }
        for &(id, p) in positions {
            let row = self.index[&id];
            self.last_pos[row] = p;
            self.departed[row] = false;
        }

        let current: Vec<(AgentId, Point)> = (0..self.n())
            .filter(|&r| !self.departed[r])
            .map(|r| (self.agents[r], self.last_pos[r]))
            .collect();
        for e in knn_edges(&current, k) {
            if !self.edges.contains_key(&e) {
                let d = self.last_pos[self.index[&e.lo()]].dist(&self.last_pos[self.index[&e.hi()]]);
                events.push(self.link(e, self.weighting.weight(d)));
            }
        }
        self.steps_since_reset += 1;
        Ok(events)
    }

    /// Adds one agent without running kNN (bordering only).
    pub fn add_agent(&mut self, id: AgentId, pos: Point) -> Result<UpdateEvent, GraphError> {
        if !pos.is_finite() {
            return Err(GraphError::NonFinite(id));
        }
        if self.index.contains_key(&id) {
            return Err(GraphError::DuplicateAgent(id));
        }
        Ok(self.border(id, pos))
    }

    /// Adds one edge between known agents. `Ok(None)` if it already exists.
    pub fn add_edge(&mut self, a: AgentId, b: AgentId) -> Result<Option<UpdateEvent>, GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        let ra = self.index_of(a).ok_or(GraphError::UnknownAgent(a))?;
        let rb = self.index_of(b).ok_or(GraphError::UnknownAgent(b))?;
        let e = Edge::new(a, b);
        if self.edges.contains_key(&e) {
            return Ok(None);
        }
        let w = self.weighting.weight(self.last_pos[ra].dist(&self.last_pos[rb]));
        Ok(Some(self.link(e, w)))
    }

    /// Flags an agent as gone. It keeps its edges but takes no part in new
    /// neighbor searches, and the next reset drops it.
    pub fn mark_departed(&mut self, agent: AgentId) -> Result<(), GraphError> {
        let row = self.index_of(agent).ok_or(GraphError::UnknownAgent(agent))?;
        self.departed[row] = true;
        Ok(())
    }

    /// Resets if at least `t_reset` steps have passed since the last reset.
    /// Returns whether a reset happened.
    pub fn maybe_reset(&mut self, t_reset: usize) -> bool {
        if self.steps_since_reset >= t_reset.max(1) {
            self.reset();
            true
        } else {
            false
        }
    }

    /// Rebuilds from the agents still present and their current kNN edges,
    /// with an empty update log.
    pub fn reset(&mut self) {
        let keep: Vec<(AgentId, Point)> = (0..self.n())
            .filter(|&r| !self.departed[r])
            .map(|r| (self.agents[r], self.last_pos[r]))
            .collect();
        let k = self.knn_k;
        let weighting = self.weighting;
        let generation = self.generation + 1;
        *self = Self::new(weighting);
        self.generation = generation;
        self.knn_k = k;
        for &(id, p) in &keep {
            self.border(id, p);
        }
        for e in knn_edges(&keep, k) {
            let d = self.last_pos[self.index[&e.lo()]].dist(&self.last_pos[self.index[&e.hi()]]);
            self.link(e, weighting.weight(d));
        }
        self.log.clear();
        self.base_agents = self.n();
        self.base_edges = self.weighted_edges();
    }

    fn border(&mut self, id: AgentId, p: Point) -> UpdateEvent {
        let row = self.agents.len();
        self.agents.push(id);
        self.index.insert(id, row);
        self.last_pos.push(p);
        self.departed.push(false);
        self.degree.push(0.0);
        self.adjacency.push(Vec::new());
        let ev = UpdateEvent::Border { agent: id, index: row };
        self.log.push(ev);
        ev
    }

    fn link(&mut self, e: Edge, w: f64) -> UpdateEvent {
        let i = self.index[&e.lo()];
        let j = self.index[&e.hi()];
        self.degree[i] += w;
        self.degree[j] += w;
        self.adjacency[i].push((j, w));
        self.adjacency[j].push((i, w));
        self.edges.insert(e, w);
        let ev = UpdateEvent::EdgeAdd(Incidence {
            plus: i,
            minus: j,
            scale: libm::sqrt(w),
        });
        self.log.push(ev);
        ev
    }
}

impl SymmetricOperator for DynamicLaplacian {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n(), "Laplacian apply dimension mismatch");
        (0..self.n())
            .map(|i| {
                let mut acc = self.degree[i] * x[i];
                for &(j, w) in &self.adjacency[i] {
                    acc -= w * x[j];
                }
                acc
            })
            .collect()
    }
}

/// `L = D − A` assembled from scratch: adjacency first, degrees as row sums.
pub fn laplacian_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Mat {
    let mut a = Mat::zeros(n, n);
    for &(i, j, w) in edges {
        a[(i, j)] = w;
        a[(j, i)] = w;
    }
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        let d: f64 = a.row(i).iter().sum();
        for j in 0..n {
            l[(i, j)] = if i == j { d } else { -a[(i, j)] };
        }
    }
    l
}
