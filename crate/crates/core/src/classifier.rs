//! Behavior labels, a one-hidden-layer perceptron trained on squared error,
//! and the accuracy metrics used to score it.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::Mat;
use crate::trajgraph::AgentId;

pub const NUM_CLASSES: usize = 6;

/// Declaration order is the tie-break order of [`predict`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BehaviorLabel {
    Impatient,
    Reckless,
    Threatening,
    Careful,
    Cautious,
    Timid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Superclass {
    Aggressive,
    Conservative,
}

impl BehaviorLabel {
    pub const ALL: [BehaviorLabel; NUM_CLASSES] = [
        BehaviorLabel::Impatient,
        BehaviorLabel::Reckless,
        BehaviorLabel::Threatening,
        BehaviorLabel::Careful,
        BehaviorLabel::Cautious,
        BehaviorLabel::Timid,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorLabel::Impatient => "impatient",
            BehaviorLabel::Reckless => "reckless",
            BehaviorLabel::Threatening => "threatening",
            BehaviorLabel::Careful => "careful",
            BehaviorLabel::Cautious => "cautious",
            BehaviorLabel::Timid => "timid",
        }
    }

    pub fn superclass(self) -> Superclass {
        if self.index() < 3 {
            Superclass::Aggressive
        } else {
            Superclass::Conservative
        }
    }
}

impl fmt::Display for BehaviorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Superclass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Superclass::Aggressive => "aggressive",
            Superclass::Conservative => "conservative",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unknown behavior label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for BehaviorLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s.trim())
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ClassifierError {
    #[error("expected {expected} columns/entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training data has fewer than two distinct classes")]
    SingleClass,
    #[error("empty input")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Per-column z-scoring. Constant columns get unit scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Mat) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        let nf = n.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = libm::sqrt(s / nf);
                if sd > 1e-300 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn transform(&self, x: &Mat) -> Result<Mat, ClassifierError> {
        if x.cols() != self.mean.len() {
            return Err(ClassifierError::Dimension {
                expected: self.mean.len(),
                got: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// No hidden layer; the output is affine in the input.
    Linear,
}

/// `out = W2 tanh(W1 x + b1) + b2`, or `out = W2 x + b2` when `hidden == 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub input: usize,
    pub hidden: usize,
    /// `hidden × input`; empty for the linear model.
    pub w1: Mat,
    pub b1: Vec<f64>,
    /// `6 × hidden`, or `6 × input` for the linear model.
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let mid = if hidden == 0 { input } else { hidden };
        Self {
            input,
            hidden,
            w1: Mat::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: Mat::zeros(NUM_CLASSES, mid),
            b2: vec![0.0; NUM_CLASSES],
        }
    }

    /// Glorot-uniform hidden layer; the output layer starts at a tenth of
    /// that scale so untrained scores sit near zero.
    pub fn init(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input, hidden);
        let mid = p.w2.cols();
        let a1 = libm::sqrt(6.0 / (input + hidden).max(1) as f64);
        p.w1.as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-a1..=a1));
        let a2 = 0.1 * libm::sqrt(6.0 / (mid + NUM_CLASSES) as f64);
        p.w2.as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-a2..=a2));
        p
    }

    pub fn activation(&self) -> Activation {
        if self.hidden == 0 {
            Activation::Linear
        } else {
            Activation::Tanh
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    /// `w1, b1, w2, b2`, each row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(&self.b2);
        v
    }

    /// Inverse of [`MlpParams::flatten`] for the same shape.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self, ClassifierError> {
        if flat.len() != self.num_params() {
            return Err(ClassifierError::Dimension {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut p = self.clone();
        let mut rest = flat;
        for dst in [
            p.w1.as_mut_slice(),
            p.b1.as_mut_slice(),
            p.w2.as_mut_slice(),
            p.b2.as_mut_slice(),
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    fn hidden_of(&self, x: &[f64]) -> Vec<f64> {
        if self.hidden == 0 {
            return x.to_vec();
        }
        self.w1
            .matvec(x)
            .into_iter()
            .zip(&self.b1)
            .map(|(z, b)| libm::tanh(z + b))
            .collect()
    }

    /// Output scores for one input row.
    pub fn forward(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let a = self.hidden_of(x);
        let mut out = [0.0; NUM_CLASSES];
        for (c, o) in out.iter_mut().enumerate() {
            *o = crate::linalg::dot(self.w2.row(c), &a) + self.b2[c];
        }
        out
    }
}

/// Mean over samples of `wᵢ · ½‖out(xᵢ) − onehot(zᵢ)‖²` plus
/// `½ l2 (‖W1‖² + ‖W2‖²)`, and its gradient in [`MlpParams::flatten`] order.
/// Weights default to 1.
pub fn loss_and_gradient(
    p: &MlpParams,
    x: &Mat,
    targets: &[usize],
    weights: Option<&[f64]>,
    l2: f64,
) -> (f64, Vec<f64>) {
    let n = x.rows();
    let nf = n.max(1) as f64;
    let mut g = MlpParams::zeros(p.input, p.hidden);
    let mut loss = 0.0;
    for i in 0..n {
        let xi = x.row(i);
        let wi = weights.map_or(1.0, |w| w[i]);
        let a = p.hidden_of(xi);
        let out = {
            let mut o = [0.0; NUM_CLASSES];
            for (c, oc) in o.iter_mut().enumerate() {
                *oc = crate::linalg::dot(p.w2.row(c), &a) + p.b2[c];
            }
            o
        };
        let mut d = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let t = if c == targets[i] { 1.0 } else { 0.0 };
            let e = out[c] - t;
            loss += 0.5 * wi * e * e;
            d[c] = wi * e / nf;
        }
        for c in 0..NUM_CLASSES {
            g.b2[c] += d[c];
            crate::linalg::axpy(d[c], &a, g.w2.row_mut(c));
        }
        if p.hidden > 0 {
            for h in 0..p.hidden {
                let back: f64 = (0..NUM_CLASSES).map(|c| p.w2[(c, h)] * d[c]).sum();
                let dz = back * (1.0 - a[h] * a[h]);
                g.b1[h] += dz;
                crate::linalg::axpy(dz, xi, g.w1.row_mut(h));
            }
        }
    }
    loss /= nf;
    if l2 > 0.0 {
        for (gw, w) in [(&mut g.w1, &p.w1), (&mut g.w2, &p.w2)] {
            for (gv, wv) in gw.as_mut_slice().iter_mut().zip(w.as_slice()) {
                loss += 0.5 * l2 * wv * wv;
                *gv += l2 * wv;
            }
        }
    }
    (loss, g.flatten())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// 0 selects the linear model.
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub l2: f64,
    /// Weight samples by inverse class frequency.
    pub balance_classes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 0.5,
            epochs: 3000,
            seed: 0,
            l2: 1e-4,
            balance_classes: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: MlpParams,
    /// Loss before training followed by one entry per epoch.
    pub loss_history: Vec<f64>,
}

/// Full-batch gradient descent. A step that raises the loss is undone and
/// retried at half the rate; accepted steps grow the rate by 5%.
pub fn train(x: &Mat, labels: &[BehaviorLabel], cfg: &TrainConfig) -> Result<TrainedModel, ClassifierError> {
    if x.rows() != labels.len() {
        return Err(ClassifierError::Dimension {
            expected: x.rows(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(ClassifierError::Empty);
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFinite("features"));
    }
    let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    if targets.iter().all(|&t| t == targets[0]) {
        return Err(ClassifierError::SingleClass);
    }
    let weights = cfg.balance_classes.then(|| inverse_frequency_weights(labels));
    let w = weights.as_deref();

    let mut params = MlpParams::init(x.cols(), cfg.hidden, cfg.seed);
    let mut flat = params.flatten();
    let (mut loss, mut grad) = loss_and_gradient(&params, x, &targets, w, cfg.l2);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    history.push(loss);
    let mut lr = cfg.learning_rate;
    for _ in 0..cfg.epochs {
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = flat.iter().zip(&grad).map(|(p, g)| p - lr * g).collect();
            let cand = params.unflatten(&trial)?;
            let (l, g) = loss_and_gradient(&cand, x, &targets, w, cfg.l2);
            if l.is_finite() && l <= loss {
                params = cand;
                flat = trial;
                loss = l;
                grad = g;
                lr *= 1.05;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        history.push(loss);
        if !accepted {
            break;
        }
    }
    Ok(TrainedModel {
        params,
        loss_history: history,
    })
}

/// `n / (C · count(class))` per sample, over the classes present.
pub fn inverse_frequency_weights(labels: &[BehaviorLabel]) -> Vec<f64> {
    let mut counts = [0usize; NUM_CLASSES];
    labels.iter().for_each(|l| counts[l.index()] += 1);
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = labels.len() as f64;
    labels
        .iter()
        .map(|l| n / (present * counts[l.index()] as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: BehaviorLabel,
    pub scores: [f64; NUM_CLASSES],
}

/// First index of the maximum; NaN scores never win.
pub fn argmax(scores: &[f64; NUM_CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if scores[c] > scores[best] || scores[best].is_nan() && !scores[c].is_nan() {
            best = c;
        }
    }
    best
}

pub fn predict(p: &MlpParams, x: &Mat) -> Result<Vec<Prediction>, ClassifierError> {
    if x.cols() != p.input {
        return Err(ClassifierError::Dimension {
            expected: p.input,
            got: x.cols(),
        });
    }
    Ok((0..x.rows())
        .map(|i| {
            let scores = p.forward(x.row(i));
            Prediction {
                label: BehaviorLabel::ALL[argmax(&scores)],
                scores,
            }
        })
        .collect())
}

fn check_aligned(pred: &[BehaviorLabel], truth: &[BehaviorLabel]) -> Result<(), ClassifierError> {
    if pred.len() != truth.len() {
        return Err(ClassifierError::Dimension {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(ClassifierError::Empty);
    }
    Ok(())
}

/// `counts[t][p]`: truth `t` predicted as `p`.
pub fn confusion_matrix(
    pred: &[BehaviorLabel],
    truth: &[BehaviorLabel],
) -> Result<[[usize; NUM_CLASSES]; NUM_CLASSES], ClassifierError> {
    check_aligned(pred, truth)?;
    let mut m = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (p, t) in pred.iter().zip(truth) {
        m[t.index()][p.index()] += 1;
    }
    Ok(m)
}

/// Recall per class; `None` for classes absent from `truth`.
pub fn per_class_recall(
    pred: &[BehaviorLabel],
    truth: &[BehaviorLabel],
) -> Result<[Option<f64>; NUM_CLASSES], ClassifierError> {
    let m = confusion_matrix(pred, truth)?;
    let mut out = [None; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let total: usize = m[c].iter().sum();
        if total > 0 {
            out[c] = Some(m[c][c] as f64 / total as f64);
        }
    }
    Ok(out)
}

/// `Σ_c f_c A_c` with `f_c` the class frequency in `truth` and `A_c` the
/// recall of class `c`.
pub fn weighted_accuracy(pred: &[BehaviorLabel], truth: &[BehaviorLabel]) -> Result<f64, ClassifierError> {
    check_aligned(pred, truth)?;
    let n = truth.len() as f64;
    let mut per_class: BTreeMap<BehaviorLabel, (usize, usize)> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        let e = per_class.entry(*t).or_default();
        e.0 += 1;
        if p == t {
            e.1 += 1;
        }
    }
    Ok(per_class
        .values()
        .map(|&(total, hit)| (total as f64 / n) * (hit as f64 / total as f64))
        .sum())
}

/// Fraction of samples whose predicted superclass matches the truth.
pub fn superclass_accuracy(pred: &[BehaviorLabel], truth: &[BehaviorLabel]) -> Result<f64, ClassifierError> {
    check_aligned(pred, truth)?;
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.superclass() == t.superclass())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Assigns whole agents to train or test, stratified by label, so that no
/// agent has samples on both sides. Each class with at least two agents
/// keeps at least one on each side.
pub fn stratified_split(
    agent_ids: &[AgentId],
    labels: &[BehaviorLabel],
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<Split>, ClassifierError> {
    if agent_ids.len() != labels.len() {
        return Err(ClassifierError::Dimension {
            expected: labels.len(),
            got: agent_ids.len(),
        });
    }
    let mut by_class: BTreeMap<BehaviorLabel, Vec<AgentId>> = BTreeMap::new();
    let mut seen: BTreeMap<AgentId, ()> = BTreeMap::new();
    for (id, l) in agent_ids.iter().zip(labels) {
        if seen.insert(*id, ()).is_none() {
            by_class.entry(*l).or_default().push(*id);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut side: BTreeMap<AgentId, Split> = BTreeMap::new();
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
        let m = ids.len();
        let mut n_train = libm::round(train_fraction * m as f64) as usize;
        if m >= 2 {
            n_train = n_train.clamp(1, m - 1);
        }
        for (j, id) in ids.iter().enumerate() {
            side.insert(*id, if j < n_train { Split::Train } else { Split::Test });
        }
    }
    Ok(agent_ids.iter().map(|id| side[id]).collect())
}

/// Positions of the entries tagged `which`.
pub fn split_indices(split: &[Split], which: Split) -> Vec<usize> {
    split
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == which)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use BehaviorLabel::*;

    #[test]
    fn labels_parse_and_group() {
        for l in BehaviorLabel::ALL {
            assert_eq!(l.name().parse::<BehaviorLabel>().unwrap(), l);
        }
        assert!("angry".parse::<BehaviorLabel>().is_err());
        assert_eq!(Threatening.superclass(), Superclass::Aggressive);
        assert_eq!(Careful.superclass(), Superclass::Conservative);
    }

    #[test]
    fn weighted_accuracy_examples() {
        let t = [Careful, Careful, Careful, Timid];
        assert_eq!(weighted_accuracy(&t, &t).unwrap(), 1.0);
        let p = [Careful, Careful, Careful, Careful];
        assert_eq!(weighted_accuracy(&p, &t).unwrap(), 0.75);
        assert!(weighted_accuracy(&p[..2], &t).is_err());
    }

    #[test]
    fn zero_weights_pick_first_class() {
        let p = MlpParams::zeros(3, 4);
        let out = predict(&p, &Mat::from_rows(&[[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, Impatient);
        assert_eq!(out[0].scores.len(), NUM_CLASSES);
        assert!(predict(&p, &Mat::zeros(1, 2)).is_err());
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Mat::zeros(3, 2);
        assert_eq!(
            train(&x, &[Timid; 3], &TrainConfig::default()),
            Err(ClassifierError::SingleClass)
        );
    }

    #[test]
    fn flatten_round_trips() {
        let p = MlpParams::init(4, 3, 9);
        assert_eq!(p.unflatten(&p.flatten()).unwrap(), p);
        let lin = MlpParams::init(4, 0, 9);
        assert_eq!(lin.activation(), Activation::Linear);
        assert_eq!(lin.num_params(), 6 * 4 + 6);
    }

    #[test]
    fn split_keeps_agents_together() {
        let ids = [1, 1, 2, 2, 3, 4, 5, 6];
        let labels = [Timid, Timid, Timid, Timid, Timid, Careful, Careful, Careful];
        let s = stratified_split(&ids, &labels, 0.7, 3).unwrap();
        assert_eq!(s[0], s[1]);
        assert_eq!(s[2], s[3]);
        for class in [Timid, Careful] {
            let sides: Vec<Split> = (0..ids.len()).filter(|&i| labels[i] == class).map(|i| s[i]).collect();
            assert!(sides.contains(&Split::Train) && sides.contains(&Split::Test));
        }
    }
}
