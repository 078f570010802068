//! Labeled synthetic traffic on a multi-lane ring road.
//!
//! Agents move along concentric lanes; each behavior class has its own
//! kinematic rule. Speeds are in meters per frame along the agent's lane.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::classifier::{BehaviorLabel, NUM_CLASSES};
use crate::trajgraph::{AgentId, Observation, Point, TrajectorySet};

#[derive(Clone, Debug, PartialEq)]
pub struct Kinematics {
    pub base_speed: f64,
    pub impatient_factor: f64,
    pub reckless_factor: f64,
    pub threatening_factor: f64,
    pub cautious_factor: f64,
    pub timid_factor: f64,
    /// Frames between weaving lane changes.
    pub weave_period: u32,
    /// Reckless agents drive against traffic for the first
    /// `reverse_frames` of every `reverse_cycle` frames.
    pub reverse_cycle: u32,
    pub reverse_frames: u32,
    /// Standard headway in meters.
    pub headway: f64,
    /// Cut-ins happen when the victim trails by this fraction of the headway
    /// up to one full headway.
    pub cut_in_factor: f64,
    pub cut_in_cooldown: u32,
    /// Length of each crossing zone, starting at angles 0 and π.
    pub crossing_zone: f64,
    pub halt_cycle: u32,
    pub halt_frames: u32,
    pub slowdown_cycle: u32,
    pub slowdown_frames: u32,
    pub slowdown_factor: f64,
    /// Per-agent phase offsets are drawn from `0..phase_range`.
    pub phase_range: u32,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self {
            base_speed: 10.0,
            impatient_factor: 1.5,
            reckless_factor: 1.2,
            threatening_factor: 1.3,
            cautious_factor: 0.9,
            timid_factor: 0.6,
            weave_period: 15,
            reverse_cycle: 40,
            reverse_frames: 35,
            headway: 20.0,
            cut_in_factor: 0.5,
            cut_in_cooldown: 20,
            crossing_zone: 40.0,
            halt_cycle: 40,
            halt_frames: 30,
            slowdown_cycle: 30,
            slowdown_frames: 10,
            slowdown_factor: 0.5,
            phase_range: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub n_agents: usize,
    pub duration: usize,
    pub lanes: usize,
    /// Circumference of the innermost lane in meters.
    pub track_length: f64,
    pub lane_width: f64,
    /// Fractions indexed by [`BehaviorLabel::index`].
    pub behavior_mix: [f64; NUM_CLASSES],
    pub noise_std: f64,
    pub seed: u64,
    pub kinematics: Kinematics,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_agents: 120,
            duration: 300,
            lanes: 4,
            track_length: 300.0,
            lane_width: 3.5,
            behavior_mix: [1.0 / NUM_CLASSES as f64; NUM_CLASSES],
            noise_std: 0.1,
            seed: 0,
            kinematics: Kinematics::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_agents < 2 {
            return bad(format!("n_agents = {} (need at least 2)", self.n_agents));
        }
        if self.duration < 2 {
            return bad(format!("duration = {} (need at least 2)", self.duration));
        }
        if self.lanes == 0 {
            return bad("lanes = 0".into());
        }
        if !(self.track_length > 0.0) || !(self.lane_width >= 0.0) {
            return bad("track length must be positive and lane width non-negative".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise_std = {}", self.noise_std));
        }
        if self.behavior_mix.iter().any(|f| !(*f >= 0.0)) {
            return bad("behavior fractions must be non-negative".into());
        }
        let total: f64 = self.behavior_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("behavior fractions sum to {total}"));
        }
        Ok(())
    }

    /// Agents per class by largest remainder; leftover ties go to the
    /// earlier class.
    pub fn allocation(&self) -> [usize; NUM_CLASSES] {
        let n = self.n_agents as f64;
        let mut counts = [0usize; NUM_CLASSES];
        let mut rem = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let share = self.behavior_mix[c] * n;
            counts[c] = libm::floor(share) as usize;
            rem[c] = share - counts[c] as f64;
        }
        let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
        order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));
        let left = self.n_agents - counts.iter().sum::<usize>();
        for &c in order.iter().take(left) {
            counts[c] += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScenario {
    pub trajectories: TrajectorySet,
    pub labels: BTreeMap<AgentId, BehaviorLabel>,
    pub spec: ScenarioSpec,
    /// Requested classes that received no agents.
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
struct Agent {
    label: BehaviorLabel,
    theta: f64,
    lane: usize,
    phase: u32,
    cooldown: u32,
}

struct Road<'a> {
    spec: &'a ScenarioSpec,
}

impl Road<'_> {
    fn radius(&self, lane: usize) -> f64 {
        self.spec.track_length / TAU + lane as f64 * self.spec.lane_width
    }

    /// Arc length from `from` forward to `to`, measured on the inner lane.
    fn gap(&self, from: f64, to: f64) -> f64 {
        (to - from).rem_euclid(TAU) * self.radius(0)
    }

    fn in_crossing(&self, theta: f64) -> bool {
        theta.rem_euclid(PI) * self.radius(0) < self.spec.kinematics.crossing_zone
    }

    fn position(&self, a: &Agent) -> Point {
        let r = self.radius(a.lane);
        Point::new(r * libm::cos(a.theta), r * libm::sin(a.theta))
    }
}

fn speed(k: &Kinematics, road: &Road<'_>, a: &Agent, t: u32) -> f64 {
    let v0 = k.base_speed;
    let tp = t + a.phase;
    match a.label {
        BehaviorLabel::Impatient => k.impatient_factor * v0,
        BehaviorLabel::Reckless => {
            let v = k.reckless_factor * v0;
            if tp % k.reverse_cycle.max(1) < k.reverse_frames {
                -v
            } else {
                v
            }
        }
        BehaviorLabel::Threatening => k.threatening_factor * v0,
        BehaviorLabel::Careful => v0,
        BehaviorLabel::Cautious => {
            if road.in_crossing(a.theta) && tp % k.halt_cycle.max(1) < k.halt_frames {
                0.0
            } else {
                k.cautious_factor * v0
            }
        }
        BehaviorLabel::Timid => {
            let v = k.timid_factor * v0;
            if tp % k.slowdown_cycle.max(1) < k.slowdown_frames {
                v * k.slowdown_factor
            } else {
                v
            }
        }
    }
}

fn adjacent_lane(lane: usize, lanes: usize, rng: &mut ChaCha8Rng) -> usize {
    match (lane, lanes) {
        (_, 1) => 0,
        (0, _) => 1,
        (l, n) if l + 1 == n => l - 1,
        (l, _) => {
            if rng.random_bool(0.5) {
                l + 1
            } else {
                l - 1
            }
        }
    }
}

/// Simulates the scenario. Agent ids are `1..=n`, frames `0..duration`.
pub fn generate(spec: &ScenarioSpec) -> Result<LabeledScenario, SynthError> {
    spec.validate()?;
    let k = &spec.kinematics;
    let road = Road { spec };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let counts = spec.allocation();
    let mut warnings = Vec::new();
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 && spec.behavior_mix[c] > 0.0 {
            let msg = format!(
                "class {} requested at fraction {} but gets no agents out of {}; dropped",
                BehaviorLabel::ALL[c],
                spec.behavior_mix[c],
                spec.n_agents
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut labels: Vec<BehaviorLabel> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &m)| core::iter::repeat(BehaviorLabel::ALL[c]).take(m))
        .collect();
    labels.shuffle(&mut rng);

    let mut agents: Vec<Agent> = labels
        .iter()
        .map(|&label| Agent {
            label,
            theta: rng.random_range(0.0..TAU),
            lane: rng.random_range(0..spec.lanes),
            phase: rng.random_range(0..k.phase_range.max(1)),
            cooldown: 0,
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| SynthError::InvalidSpec(format!("{e}")))?;
    let mut traj = TrajectorySet::new();
    for t in 0..spec.duration {
        for (i, a) in agents.iter().enumerate() {
            let mut p = road.position(a);
            if spec.noise_std > 0.0 {
                p.x += noise.sample(&mut rng);
                p.y += noise.sample(&mut rng);
            }
            traj.push(
                i as AgentId + 1,
                Observation {
                    frame: t as i64,
                    pos: p,
                },
            )
            .expect("frames increase by construction");
        }

        let t = t as u32;
        let snapshot = agents.clone();
        for (i, a) in agents.iter_mut().enumerate() {
            let v = speed(k, &road, &snapshot[i], t);
            a.cooldown = a.cooldown.saturating_sub(1);
            match a.label {
                BehaviorLabel::Impatient => {
                    let weave = (t + a.phase) % k.weave_period.max(1) == 0;
                    let blocked = snapshot
                        .iter()
                        .enumerate()
                        .any(|(j, b)| j != i && b.lane == a.lane && road.gap(a.theta, b.theta) < k.headway);
                    if weave || blocked && a.cooldown == 0 {
                        a.lane = adjacent_lane(a.lane, spec.lanes, &mut rng);
                        a.cooldown = k.weave_period / 3;
                    }
                }
                BehaviorLabel::Threatening if a.cooldown == 0 => {
                    let mut victims: Vec<usize> = (0..snapshot.len())
                        .filter(|&j| {
                            let b = &snapshot[j];
                            let g = road.gap(b.theta, a.theta);
                            j != i && b.lane.abs_diff(a.lane) == 1 && g >= k.cut_in_factor * k.headway && g <= k.headway
                        })
                        .collect();
                    victims.sort_unstable();
                    if let Some(&j) = victims.choose(&mut rng) {
                        a.lane = snapshot[j].lane;
                        a.cooldown = k.cut_in_cooldown;
                    }
                }
                _ => {}
            }
            a.theta = (a.theta + v / road.radius(a.lane)).rem_euclid(TAU);
        }
    }

    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| (i as AgentId + 1, l))
        .collect();
    Ok(LabeledScenario {
        trajectories: traj,
        labels,
        spec: spec.clone(),
        warnings,
    })
}

/// Mean per-frame displacement of one track.
pub fn mean_speed(track: &[Observation]) -> f64 {
    if track.len() < 2 {
        return 0.0;
    }
    let total: f64 = track.windows(2).map(|w| w[0].pos.dist(&w[1].pos)).sum();
    total / (track.len() - 1) as f64
}
