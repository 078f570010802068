//! Resolved run configuration: defaults, then an optional `key=value` file,
//! then command-line flags.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use graphrqi_core::classifier::TrainConfig;
use graphrqi_core::features::Aggregation;
use graphrqi_core::pipeline::PipelineConfig;
use graphrqi_core::spectral::SolverConfig;
use graphrqi_core::synth::ScenarioSpec;
use graphrqi_core::trajgraph::Weighting;

use crate::bench::BenchConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Neighbors per agent in the kNN graph.
    pub k: usize,
    /// Eigenpairs tracked and feature width.
    pub spec_k: usize,
    pub reset: usize,
    pub eps: f64,
    pub max_iter: usize,
    pub chain_cap: usize,
    pub weighted: bool,
    pub aggregation: Aggregation,
    pub linear: bool,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub balance_classes: bool,
    pub train_fraction: f64,
    pub rate_hz: f64,
    pub n_agents: usize,
    pub duration: usize,
    pub noise_std: f64,
    pub sizes: Vec<usize>,
    pub steps: usize,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let scenario = ScenarioSpec::default();
        let bench = BenchConfig::default();
        let solver = SolverConfig::default();
        Self {
            seed: 0,
            k: 4,
            spec_k: solver.k,
            reset: 100,
            eps: solver.eps,
            max_iter: solver.max_iter,
            chain_cap: solver.chain_cap,
            weighted: false,
            aggregation: Aggregation::Final,
            linear: false,
            hidden: train.hidden,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            l2: train.l2,
            balance_classes: false,
            train_fraction: 0.7,
            rate_hz: 10.0,
            n_agents: scenario.n_agents,
            duration: scenario.duration,
            noise_std: scenario.noise_std,
            sizes: bench.sizes,
            steps: bench.steps,
            repeats: bench.repeats,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.trim().parse().map_err(|_| format!("invalid value {v:?} for {key}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, String> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("invalid value {v:?} for {key} (expected true or false)")),
    }
}

pub fn parse_aggregation(v: &str) -> Result<Aggregation, String> {
    match v.trim() {
        "final" => Ok(Aggregation::Final),
        "mean" => Ok(Aggregation::Mean),
        _ => Err(format!("unknown aggregation {v:?} (expected final or mean)")),
    }
}

pub fn parse_sizes(v: &str) -> Result<Vec<usize>, String> {
    v.split(',').map(|s| parse("sizes", s)).collect()
}

impl RunConfig {
    /// Sets one key; `T` and `reset` are the same setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "spec_k" => self.spec_k = parse(key, v)?,
            "T" | "reset" => self.reset = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "max_iter" => self.max_iter = parse(key, v)?,
            "chain_cap" => self.chain_cap = parse(key, v)?,
            "weighted" => self.weighted = parse_bool(key, v)?,
            "aggregation" => self.aggregation = parse_aggregation(v)?,
            "linear" => self.linear = parse_bool(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "l2" => self.l2 = parse(key, v)?,
            "balance_classes" => self.balance_classes = parse_bool(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "rate_hz" => self.rate_hz = parse(key, v)?,
            "n_agents" => self.n_agents = parse(key, v)?,
            "duration" => self.duration = parse(key, v)?,
            "noise_std" => self.noise_std = parse(key, v)?,
            "sizes" => self.sizes = parse_sizes(v)?,
            "steps" => self.steps = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            _ => return Err(format!("unknown configuration key {key:?}")),
        }
        Ok(())
    }

    /// Applies a `key=value` file. Blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), i + 1))?;
            self.set(k.trim(), v)
                .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        }
        Ok(())
    }

    /// Every setting as `key=value`, one per line, readable by
    /// [`RunConfig::apply_file`].
    pub fn dump(&self) -> String {
        let agg = match self.aggregation {
            Aggregation::Final => "final",
            Aggregation::Mean => "mean",
        };
        let sizes: Vec<String> = self.sizes.iter().map(ToString::to_string).collect();
        let mut out = String::new();
        for (k, v) in [
            ("seed", self.seed.to_string()),
            ("k", self.k.to_string()),
            ("spec_k", self.spec_k.to_string()),
            ("T", self.reset.to_string()),
            ("eps", format!("{:e}", self.eps)),
            ("max_iter", self.max_iter.to_string()),
            ("chain_cap", self.chain_cap.to_string()),
            ("weighted", self.weighted.to_string()),
            ("aggregation", agg.to_string()),
            ("linear", self.linear.to_string()),
            ("hidden", self.hidden.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("l2", self.l2.to_string()),
            ("balance_classes", self.balance_classes.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("rate_hz", self.rate_hz.to_string()),
            ("n_agents", self.n_agents.to_string()),
            ("duration", self.duration.to_string()),
            ("noise_std", self.noise_std.to_string()),
            ("sizes", sizes.join(",")),
            ("steps", self.steps.to_string()),
            ("repeats", self.repeats.to_string()),
        ] {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            k: self.spec_k,
            eps: self.eps,
            max_iter: self.max_iter,
            chain_cap: self.chain_cap,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            knn: self.k,
            reset: self.reset,
            weighting: if self.weighted {
                Weighting::Gaussian
            } else {
                Weighting::Unweighted
            },
            solver: self.solver(),
            aggregation: self.aggregation,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            hidden: if self.linear { 0 } else { self.hidden },
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            l2: self.l2,
            balance_classes: self.balance_classes,
        }
    }

    pub fn scenario(&self) -> ScenarioSpec {
        ScenarioSpec {
            n_agents: self.n_agents,
            duration: self.duration,
            noise_std: self.noise_std,
            seed: self.seed,
            ..ScenarioSpec::default()
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            sizes: self.sizes.clone(),
            k: self.spec_k,
            steps: self.steps,
            repeats: self.repeats,
            seed: self.seed,
            eps: self.eps,
            ..BenchConfig::default()
        }
    }
}
