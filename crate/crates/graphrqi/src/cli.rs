//! Command-line front end. Exit codes: 0 success, 2 usage, 3 data, 4 solver
//! or correctness gate.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use graphrqi_core::classifier::{
    confusion_matrix, per_class_recall, predict, split_indices, stratified_split, superclass_accuracy, train,
    weighted_accuracy, BehaviorLabel, ClassifierError, Split, Standardizer,
};
use graphrqi_core::features::FeatureMatrix;
use graphrqi_core::pipeline::{self, PipelineError};
use graphrqi_core::spectral::{dense_oracle, inverse_iteration_baseline, GraphRqi, SpectralError, Spectrum};
use graphrqi_core::synth;
use graphrqi_core::trajgraph::{AgentId, DynamicLaplacian, Point, TrajectorySet};

use crate::bench::{self, BenchError};
use crate::config::{parse_aggregation, parse_sizes, RunConfig};
use crate::error::Error;
use crate::formats::{self, Metrics};
use crate::io;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Solver(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Solver(m) => m,
        }
    }
}

fn data(stage: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| match e {
        Error::OutputExists(_) => CliError::Usage(format!("{stage}: {e}")),
        e => CliError::Data(format!("{stage}: {e}")),
    }
}

fn spectral(stage: &str, e: SpectralError) -> CliError {
    match e {
        SpectralError::InvalidConfig | SpectralError::KTooLarge { .. } => CliError::Usage(format!("{stage}: {e}")),
        SpectralError::Asymmetric(_) | SpectralError::Dimension { .. } | SpectralError::ZeroVector => {
            CliError::Data(format!("{stage}: {e}"))
        }
        _ => CliError::Solver(format!("{stage}: {e}")),
    }
}

fn classifier(stage: &str, e: ClassifierError) -> CliError {
    CliError::Data(format!("{stage}: {e}"))
}

#[derive(Parser, Debug)]
#[command(
    name = "graphrqi",
    version,
    about = "Incremental Laplacian spectra and spectral driver-behavior classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic scenario (trajectories.csv, labels.csv).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Dump the Laplacian at a frame.
    Graph {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Dump the top eigenpairs at a frame.
    Spectrum {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SpectrumMethod::Graphrqi)]
        method: SpectrumMethod,
        #[command(flatten)]
        common: Common,
    },
    /// Train a classifier from a features CSV and a labels CSV.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Predict labels for a features CSV; with --labels also writes metrics.
    Classify {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, requires = "labels")]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Trajectories to features, model, predictions, metrics and ranking.
    Pipeline {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Time GraphRQI against the baselines on growing graphs.
    Bench {
        /// CSV output, or JSON with --json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
        /// Corrupt the tracker's answer at this timed step (gate test).
        #[arg(long, hide = true)]
        inject_fault: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SpectrumMethod {
    Graphrqi,
    Baseline,
    Oracle,
}

#[derive(Args, Debug)]
struct Input {
    /// Trajectory file (frame,agent_id,x,y).
    #[arg(long)]
    input: PathBuf,
    /// Read the input as Argoverse CSV (TIMESTAMP,TRACK_ID,X,Y).
    #[arg(long)]
    argoverse: bool,
    /// Last frame to process (default: last frame in the file).
    #[arg(long, allow_negative_numbers = true)]
    frame: Option<i64>,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration to stdout.
    #[arg(long)]
    dump_config: bool,
    /// Overwrite non-empty output directories.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// kNN neighbors per agent.
    #[arg(long)]
    k: Option<usize>,
    /// Eigenpairs tracked (feature width).
    #[arg(long)]
    spec_k: Option<usize>,
    /// Reset period in frames.
    #[arg(long = "T")]
    reset: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Gaussian edge weights exp(-d) instead of unit weights.
    #[arg(long)]
    weighted: bool,
    /// Linear classifier (no hidden layer).
    #[arg(long)]
    linear: bool,
    /// Feature aggregation per window: final or mean.
    #[arg(long, value_parser = parse_aggregation)]
    aggregation: Option<graphrqi_core::features::Aggregation>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    /// Weight training samples by inverse class frequency.
    #[arg(long)]
    balance_classes: bool,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Argoverse frame rate.
    #[arg(long)]
    rate_hz: Option<f64>,
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long)]
    duration: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    /// Benchmark sizes, comma-separated.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::default();
        if let Some(p) = &self.config {
            c.apply_file(p).map_err(CliError::Usage)?;
        }
        macro_rules! take {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    c.$f = v;
                }
            )*};
        }
        take!(
            seed,
            k,
            spec_k,
            reset,
            eps,
            aggregation,
            hidden,
            epochs,
            learning_rate,
            l2,
            train_fraction,
            rate_hz,
            n_agents,
            duration,
            noise_std,
            steps,
            repeats
        );
        if let Some(v) = &self.sizes {
            c.sizes = parse_sizes(v).map_err(CliError::Usage)?;
        }
        c.weighted |= self.weighted;
        c.linear |= self.linear;
        c.balance_classes |= self.balance_classes;
        if c.k == 0 {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        if c.spec_k == 0 {
            return Err(CliError::Usage("spec_k must be at least 1".into()));
        }
        if !(c.train_fraction > 0.0 && c.train_fraction < 1.0) {
            return Err(CliError::Usage(format!(
                "train_fraction = {} must lie in (0, 1)",
                c.train_fraction
            )));
        }
        if self.dump_config {
            print!("{}", c.dump());
        }
        Ok(c)
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Synth { out, common } => cmd_synth(&out, &common),
        Command::Graph { input, out, common } => cmd_graph(&input, &out, &common),
        Command::Spectrum {
            input,
            out,
            method,
            common,
        } => cmd_spectrum(&input, &out, method, &common),
        Command::Train {
            features,
            labels,
            out,
            common,
        } => cmd_train(&features, &labels, &out, &common),
        Command::Classify {
            features,
            model,
            out,
            labels,
            metrics,
            common,
        } => cmd_classify(&features, &model, &out, labels.as_deref(), metrics.as_deref(), &common),
        Command::Pipeline {
            input,
            labels,
            out,
            common,
        } => cmd_pipeline(&input, &labels, &out, &common),
        Command::Bench {
            out,
            json,
            inject_fault,
            common,
        } => cmd_bench(&out, json, inject_fault, &common),
    }
}

fn cmd_synth(out: &Path, common: &Common) -> Result<(), CliError> {
    let cfg = common.resolve()?;
    let scenario = synth::generate(&cfg.scenario()).map_err(|e| CliError::Usage(format!("synth: {e}")))?;
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    io::export_scenario(&scenario, out, common.force).map_err(data("synth export"))?;
    println!(
        "wrote {} agents over {} frames to {}",
        scenario.trajectories.len(),
        cfg.duration,
        out.display()
    );
    Ok(())
}

fn load(input: &Input, cfg: &RunConfig) -> Result<TrajectorySet, CliError> {
    let set = if input.argoverse {
        io::load_argoverse(&input.input, cfg.rate_hz).map(|(s, _)| s)
    } else {
        io::load_trajectories(&input.input)
    };
    set.map_err(data("load trajectories"))
}

/// Steps the graph through every frame up to `until` (resetting every `T`
/// steps) and calls `each` after every step.
fn replay_graph<F>(
    traj: &TrajectorySet,
    cfg: &RunConfig,
    until: Option<i64>,
    mut each: F,
) -> Result<DynamicLaplacian, CliError>
where
    F: FnMut(i64, &DynamicLaplacian, bool) -> Result<(), CliError>,
{
    let (first, last) = traj
        .frame_range()
        .ok_or_else(|| CliError::Data("load trajectories: no observations".into()))?;
    let last = until.unwrap_or(last);
    if last < first {
        return Err(CliError::Usage(format!(
            "frame {last} precedes the first frame {first}"
        )));
    }
    let mut g = DynamicLaplacian::new(cfg.pipeline().weighting);
    for frame in first..=last {
        let mut positions: Vec<(AgentId, Point)> = Vec::new();
        for s in traj.snapshot(frame) {
            if s.present {
                positions.push((s.id, s.pos));
            } else if g.index_of(s.id).is_some_and(|r| !g.is_departed(r)) {
                g.mark_departed(s.id)
                    .map_err(|e| CliError::Data(format!("graph, frame {frame}: {e}")))?;
            }
        }
        if positions.is_empty() && g.n() == 0 {
            continue;
        }
        g.step(&positions, cfg.k)
            .map_err(|e| CliError::Data(format!("graph, frame {frame}: {e}")))?;
        each(frame, &g, frame == last)?;
        if frame != last {
            g.maybe_reset(cfg.reset);
        }
    }
    Ok(g)
}

fn cmd_graph(input: &Input, out: &Path, common: &Common) -> Result<(), CliError> {
    let cfg = common.resolve()?;
    let traj = load(input, &cfg)?;
    let g = replay_graph(&traj, &cfg, input.frame, |_, _, _| Ok(()))?;
    formats::write_laplacian(out, &g.dense()).map_err(data("write Laplacian"))?;
    println!("n={} edges={} written to {}", g.n(), g.edge_count(), out.display());
    Ok(())
}

fn cmd_spectrum(input: &Input, out: &Path, method: SpectrumMethod, common: &Common) -> Result<(), CliError> {
    let cfg = common.resolve()?;
    let traj = load(input, &cfg)?;
    let solver = cfg.solver();
    let mut tracker = GraphRqi::new(solver);
    let mut result: Option<Spectrum> = None;
    replay_graph(&traj, &cfg, input.frame, |frame, g, is_last| {
        let k = solver.k;
        if k > g.n() && is_last {
            return Err(CliError::Usage(format!(
                "spectrum: spec_k = {k} exceeds the {} agents at frame {frame}",
                g.n()
            )));
        }
        let stage = format!("spectrum, frame {frame}");
        match method {
            SpectrumMethod::Graphrqi => {
                let s = tracker.spectrum_k(g, k.min(g.n())).map_err(|e| spectral(&stage, e))?;
                if is_last {
                    result = Some(s);
                }
            }
            SpectrumMethod::Baseline if is_last => {
                result = Some(inverse_iteration_baseline(&g.dense(), &solver).map_err(|e| spectral(&stage, e))?);
            }
            SpectrumMethod::Oracle if is_last => {
                let full = dense_oracle(&g.dense()).map_err(|e| spectral(&stage, e))?;
                result = Some(top_k(&full, k));
            }
            _ => {}
        }
        Ok(())
    })?;
    let s = result.ok_or_else(|| CliError::Data("spectrum: no frame processed".into()))?;
    formats::write_spectrum(out, &s).map_err(data("write spectrum"))?;
    println!("eigenvalues: {:?}", s.values);
    Ok(())
}

fn top_k(full: &Spectrum, k: usize) -> Spectrum {
    let n = full.n();
    let cols: Vec<usize> = (n - k..n).collect();
    let mut vectors = graphrqi_core::Mat::zeros(n, k);
    for (j, &c) in cols.iter().enumerate() {
        vectors.set_column(j, &full.vector(c));
    }
    Spectrum {
        vectors,
        values: cols.iter().map(|&c| full.values[c]).collect(),
        residuals: cols.iter().map(|&c| full.residuals[c]).collect(),
        iterations: vec![0; k],
    }
}

/// Labels aligned with feature rows; every row must be labeled.
fn align_labels(
    f: &FeatureMatrix,
    labels: &BTreeMap<AgentId, BehaviorLabel>,
    path: &Path,
) -> Result<Vec<BehaviorLabel>, CliError> {
    f.agent_ids
        .iter()
        .map(|id| {
            labels
                .get(id)
                .copied()
                .ok_or_else(|| CliError::Data(format!("labels: agent {id} has no label in {}", path.display())))
        })
        .collect()
}

fn read_labels(path: &Path) -> Result<BTreeMap<AgentId, BehaviorLabel>, CliError> {
    formats::read_labels(path).map_err(data("labels"))
}

fn cmd_train(features: &Path, labels: &Path, out: &Path, common: &Common) -> Result<(), CliError> {
    let cfg = common.resolve()?;
    let f = formats::read_features(features).map_err(data("features"))?;
    let y = align_labels(&f, &read_labels(labels)?, labels)?;
    let scaler = Standardizer::fit(&f.rows);
    let x = scaler.transform(&f.rows).map_err(|e| classifier("train", e))?;
    let model = train(&x, &y, &cfg.train()).map_err(|e| classifier("train", e))?;
    formats::write_model(out, &model.params, &scaler).map_err(data("write model"))?;
    println!(
        "trained on {} samples; final loss {:.6}",
        f.len(),
        model.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn metrics(pred: &[BehaviorLabel], truth: &[BehaviorLabel], n_train: usize) -> Result<Metrics, CliError> {
    let err = |e| classifier("metrics", e);
    let recall = per_class_recall(pred, truth).map_err(err)?;
    let cm = confusion_matrix(pred, truth).map_err(err)?;
    Ok(Metrics {
        weighted_accuracy: weighted_accuracy(pred, truth).map_err(err)?,
        superclass_accuracy: superclass_accuracy(pred, truth).map_err(err)?,
        per_class_recall: BehaviorLabel::ALL
            .iter()
            .map(|l| (l.name().to_string(), recall[l.index()]))
            .collect(),
        confusion_matrix: cm.iter().map(|r| r.to_vec()).collect(),
        classes: BehaviorLabel::ALL.iter().map(|l| l.name().to_string()).collect(),
        n_train,
        n_test: truth.len(),
    })
}

fn cmd_classify(
    features: &Path,
    model: &Path,
    out: &Path,
    labels: Option<&Path>,
    metrics_out: Option<&Path>,
    common: &Common,
) -> Result<(), CliError> {
    common.resolve()?;
    let f = formats::read_features(features).map_err(data("features"))?;
    let (params, scaler) = formats::read_model(model).map_err(data("model"))?;
    let x = scaler.transform(&f.rows).map_err(|e| classifier("classify", e))?;
    let preds = predict(&params, &x).map_err(|e| classifier("classify", e))?;
    formats::write_predictions(out, &f.agent_ids, &preds).map_err(data("write predictions"))?;
    if let Some(lp) = labels {
        let truth = align_labels(&f, &read_labels(lp)?, lp)?;
        let pred: Vec<BehaviorLabel> = preds.iter().map(|p| p.label).collect();
        let m = metrics(&pred, &truth, 0)?;
        println!(
            "weighted accuracy {:.4}, superclass accuracy {:.4}",
            m.weighted_accuracy, m.superclass_accuracy
        );
        if let Some(mp) = metrics_out {
            formats::write_metrics(mp, &m).map_err(data("write metrics"))?;
        }
    }
    Ok(())
}

pub const FEATURES_FILE: &str = "features.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const RANKING_FILE: &str = "ranking.csv";
pub const MODEL_FILE: &str = "model.txt";

fn cmd_pipeline(input: &Input, labels_path: &Path, out: &Path, common: &Common) -> Result<(), CliError> {
    let cfg = common.resolve()?;
    let labels = read_labels(labels_path)?;
    let traj = load(input, &cfg)?;
    io::prepare_output_dir(out, common.force).map_err(data("output"))?;

    let run = pipeline::run(&traj, &cfg.pipeline()).map_err(|e| match e {
        PipelineError::Empty => CliError::Data("graphs: no observations".into()),
        PipelineError::Graph { .. } => CliError::Data(format!("graphs: {e}")),
        PipelineError::Spectral { source, frame } => spectral(&format!("spectra, frame {frame}"), source),
        PipelineError::Feature(f) => CliError::Data(format!("features: {f}")),
    })?;
    let all = run.features();
    formats::write_features(&out.join(FEATURES_FILE), &all).map_err(data("write features"))?;
    formats::write_ranking(&out.join(RANKING_FILE), &run.windows).map_err(data("write ranking"))?;

    let labeled: Vec<usize> = (0..all.len())
        .filter(|&i| labels.contains_key(&all.agent_ids[i]))
        .collect();
    if labeled.len() < all.len() {
        log::warn!(
            "{} feature rows have no label and are left out of training",
            all.len() - labeled.len()
        );
    }
    let f = all.select(&labeled);
    let y = align_labels(&f, &labels, labels_path)?;
    let split = stratified_split(&f.agent_ids, &y, cfg.train_fraction, cfg.seed).map_err(|e| classifier("split", e))?;
    let (tr, te) = (split_indices(&split, Split::Train), split_indices(&split, Split::Test));
    if tr.is_empty() || te.is_empty() {
        return Err(CliError::Data("split: train or test split is empty".into()));
    }
    let ftr = f.select(&tr);
    let fte = f.select(&te);
    let scaler = Standardizer::fit(&ftr.rows);
    let xtr = scaler.transform(&ftr.rows).map_err(|e| classifier("train", e))?;
    let ytr: Vec<BehaviorLabel> = tr.iter().map(|&i| y[i]).collect();
    let model = train(&xtr, &ytr, &cfg.train()).map_err(|e| classifier("train", e))?;
    formats::write_model(&out.join(MODEL_FILE), &model.params, &scaler).map_err(data("write model"))?;

    let xte = scaler.transform(&fte.rows).map_err(|e| classifier("predict", e))?;
    let preds = predict(&model.params, &xte).map_err(|e| classifier("predict", e))?;
    formats::write_predictions(&out.join(PREDICTIONS_FILE), &fte.agent_ids, &preds)
        .map_err(data("write predictions"))?;
    let yte: Vec<BehaviorLabel> = te.iter().map(|&i| y[i]).collect();
    let pred: Vec<BehaviorLabel> = preds.iter().map(|p| p.label).collect();
    let m = metrics(&pred, &yte, tr.len())?;
    formats::write_metrics(&out.join(METRICS_FILE), &m).map_err(data("write metrics"))?;
    println!(
        "{} windows, {} samples ({} train / {} test): weighted accuracy {:.4}, superclass accuracy {:.4}",
        run.windows.len(),
        f.len(),
        tr.len(),
        te.len(),
        m.weighted_accuracy,
        m.superclass_accuracy
    );
    Ok(())
}

fn cmd_bench(out: &Path, json: bool, inject_fault: Option<usize>, common: &Common) -> Result<(), CliError> {
    let cfg = common.resolve()?;
    let bc = bench::BenchConfig {
        inject_fault,
        ..cfg.bench()
    };
    let results = match bench::run_bench(&bc) {
        Ok(r) => r,
        Err(BenchError::InvalidConfig(m)) => return Err(CliError::Usage(format!("bench: {m}"))),
        Err(e @ BenchError::Correctness { .. }) => {
            let BenchError::Correctness { ref laplacian, .. } = e else {
                unreachable!()
            };
            let dump = out.with_extension("offending_laplacian.txt");
            let note = match formats::write_laplacian(&dump, laplacian) {
                Ok(()) => format!("; Laplacian written to {}", dump.display()),
                Err(w) => format!("; could not write Laplacian: {w}"),
            };
            return Err(CliError::Solver(format!("bench: {e}{note}")));
        }
        Err(e) => return Err(CliError::Solver(format!("bench: {e}"))),
    };
    if json {
        bench::write_json(out, &results)
    } else {
        bench::write_csv(out, &results)
    }
    .map_err(data("bench report"))?;
    print!("{}", bench::summary(&results));
    Ok(())
}
