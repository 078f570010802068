//! Plain-text matrix dumps, the model file, and the CSV/JSON artifacts of a
//! pipeline run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use graphrqi_core::classifier::{BehaviorLabel, MlpParams, Prediction, Standardizer, NUM_CLASSES};
use graphrqi_core::features::FeatureMatrix;
use graphrqi_core::pipeline::WindowOutput;
use graphrqi_core::spectral::Spectrum;
use graphrqi_core::trajgraph::AgentId;
use graphrqi_core::Mat;

use crate::error::{Error, Result};
use crate::io::write_file;

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_row(out: &mut String, row: &[f64]) {
    let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
    out.push_str(&cells.join(" "));
    out.push('\n');
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Whitespace-separated numeric lines, with 1-based line numbers. Blank
/// lines are skipped.
struct Lines<'a> {
    path: &'a Path,
    it: std::iter::Peekable<Box<dyn Iterator<Item = (u64, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (u64, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i as u64 + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self {
            path,
            it: it.peekable(),
        }
    }

    fn is_done(&mut self) -> bool {
        self.it.peek().is_none()
    }

    fn numbers<T: std::str::FromStr>(&mut self, expect: usize, what: &str) -> Result<Vec<T>> {
        let Some((line, text)) = self.it.next() else {
            return Err(Error::format(
                self.path,
                format!("unexpected end of file reading {what}"),
            ));
        };
        let vals: Vec<T> = text
            .split_whitespace()
            .map(|t| t.parse::<T>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::parse(self.path, line, format!("bad number in {what}")))?;
        if vals.len() != expect {
            return Err(Error::parse(
                self.path,
                line,
                format!("{what}: expected {expect} values, found {}", vals.len()),
            ));
        }
        Ok(vals)
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Mat> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.numbers::<f64>(cols, what)?);
        }
        Ok(Mat::from_vec(rows, cols, data))
    }
}

/// First line `n`, then `n` rows of `n` values.
pub fn write_laplacian(path: &Path, l: &Mat) -> Result<()> {
    let mut out = format!("{}\n", l.rows());
    for i in 0..l.rows() {
        push_row(&mut out, l.row(i));
    }
    write_file(path, out.as_bytes())
}

pub fn read_laplacian(path: &Path) -> Result<Mat> {
    let text = read_text(path)?;
    let mut lines = Lines::new(path, &text);
    let n = lines.numbers::<usize>(1, "dimension")?[0];
    lines.matrix(n, n, "Laplacian row")
}

/// Line 1 `n k`, line 2 the eigenvalues, then `n` rows of `k` entries.
pub fn write_spectrum(path: &Path, s: &Spectrum) -> Result<()> {
    let mut out = format!("{} {}\n", s.n(), s.k());
    push_row(&mut out, &s.values);
    for i in 0..s.n() {
        push_row(&mut out, s.vectors.row(i));
    }
    write_file(path, out.as_bytes())
}

/// Eigenvalues and the eigenvector matrix of a spectrum dump.
pub fn read_spectrum(path: &Path) -> Result<(Vec<f64>, Mat)> {
    let text = read_text(path)?;
    let mut lines = Lines::new(path, &text);
    let nk = lines.numbers::<usize>(2, "header")?;
    let values = lines.numbers::<f64>(nk[1], "eigenvalues")?;
    let vectors = lines.matrix(nk[0], nk[1], "eigenvector row")?;
    Ok((values, vectors))
}

/// Line 1 `k h 6`; then `W1` (h rows), `b1`, `W2` (6 rows), `b2`, one line
/// each, skipping the hidden layer when `h = 0`; then the feature scaler as
/// a `mean` line and a `std` line.
pub fn write_model(path: &Path, p: &MlpParams, scaler: &Standardizer) -> Result<()> {
    let mut out = format!("{} {} {}\n", p.input, p.hidden, NUM_CLASSES);
    if p.hidden > 0 {
        for i in 0..p.hidden {
            push_row(&mut out, p.w1.row(i));
        }
        push_row(&mut out, &p.b1);
    }
    for c in 0..NUM_CLASSES {
        push_row(&mut out, p.w2.row(c));
    }
    push_row(&mut out, &p.b2);
    push_row(&mut out, &scaler.mean);
    push_row(&mut out, &scaler.std);
    write_file(path, out.as_bytes())
}

/// Reads a model file. Files without the scaler lines get an identity
/// scaler.
pub fn read_model(path: &Path) -> Result<(MlpParams, Standardizer)> {
    let text = read_text(path)?;
    let mut lines = Lines::new(path, &text);
    let head = lines.numbers::<usize>(3, "header")?;
    let (k, h) = (head[0], head[1]);
    if head[2] != NUM_CLASSES {
        return Err(Error::format(
            path,
            format!("expected {NUM_CLASSES} outputs, found {}", head[2]),
        ));
    }
    let mut p = MlpParams::zeros(k, h);
    if h > 0 {
        p.w1 = lines.matrix(h, k, "W1")?;
        p.b1 = lines.numbers(h, "b1")?;
    }
    let mid = if h == 0 { k } else { h };
    p.w2 = lines.matrix(NUM_CLASSES, mid, "W2")?;
    p.b2 = lines.numbers(NUM_CLASSES, "b2")?;
    let scaler = if lines.is_done() {
        Standardizer::identity(k)
    } else {
        Standardizer {
            mean: lines.numbers(k, "scaler mean")?,
            std: lines.numbers(k, "scaler std")?,
        }
    };
    if !p.is_finite() {
        return Err(Error::format(path, "non-finite model parameter"));
    }
    Ok((p, scaler))
}

pub fn write_labels(path: &Path, labels: &BTreeMap<AgentId, BehaviorLabel>) -> Result<()> {
    let mut out = String::from("agent_id,label\n");
    for (id, l) in labels {
        let _ = writeln!(out, "{id},{l}");
    }
    write_file(path, out.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<AgentId, BehaviorLabel>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::parse(path, line, "expected agent_id,label"));
        }
        let id: AgentId = rec[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("agent_id = {:?}", &rec[0])))?;
        let label: BehaviorLabel = rec[1].parse().map_err(|e| Error::parse(path, line, format!("{e}")))?;
        if out.insert(id, label).is_some() {
            return Err(Error::parse(path, line, format!("agent {id} labeled twice")));
        }
    }
    Ok(out)
}

/// Header `agent_id,f1..fk`; an agent appears once per window.
pub fn write_features(path: &Path, f: &FeatureMatrix) -> Result<()> {
    let mut out = String::from("agent_id");
    for j in 1..=f.dim() {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for i in 0..f.len() {
        let _ = write!(out, "{}", f.agent_ids[i]);
        for v in f.row(i) {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let dim = rdr.headers().map_err(|e| Error::csv(path, e))?.len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        ids.push(
            rec[0]
                .parse::<AgentId>()
                .map_err(|_| Error::parse(path, line, format!("agent_id = {:?}", &rec[0])))?,
        );
        for cell in rec.iter().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, line, format!("feature {cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, "non-finite feature"));
            }
            data.push(v);
        }
    }
    let n = ids.len();
    FeatureMatrix::new(ids, Mat::from_vec(n, dim, data)).map_err(|e| Error::format(path, e.to_string()))
}

/// Header `agent_id,label,score_<class>...`.
pub fn write_predictions(path: &Path, agent_ids: &[AgentId], preds: &[Prediction]) -> Result<()> {
    let mut out = String::from("agent_id,label");
    for l in BehaviorLabel::ALL {
        let _ = write!(out, ",score_{l}");
    }
    out.push('\n');
    for (id, p) in agent_ids.iter().zip(preds) {
        let _ = write!(out, "{id},{}", p.label);
        for s in p.scores {
            let _ = write!(out, ",{}", fmt_f64(s));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub weighted_accuracy: f64,
    pub superclass_accuracy: f64,
    /// Recall per class; `null` for classes absent from the test labels.
    pub per_class_recall: BTreeMap<String, Option<f64>>,
    /// Rows are true classes, columns predicted, both in `classes` order.
    pub confusion_matrix: Vec<Vec<usize>>,
    pub classes: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
}

pub fn write_metrics(path: &Path, m: &Metrics) -> Result<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::format(path, e.to_string()))?;
    write_file(path, (text + "\n").as_bytes())
}

/// Agents of every window ranked by `|w|`, header
/// `window,rank,agent_id,w,abs_w`.
pub fn write_ranking(path: &Path, windows: &[WindowOutput]) -> Result<()> {
    let mut out = String::from("window,rank,agent_id,w,abs_w\n");
    for win in windows {
        for (rank, &i) in win.topology.ranking().iter().enumerate() {
            let w = win.topology.w[i];
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                win.index,
                rank + 1,
                win.agents[i],
                fmt_f64(w),
                fmt_f64(w.abs())
            );
        }
    }
    write_file(path, out.as_bytes())
}
