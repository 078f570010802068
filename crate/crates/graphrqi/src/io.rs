//! Trajectory files: the `frame,agent_id,x,y` format, the Argoverse column
//! adapter, and scenario export.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use graphrqi_core::synth::LabeledScenario;
use graphrqi_core::trajgraph::{AgentId, Observation, Point, TrajError, TrajectorySet};

use crate::error::{Error, Result};
use crate::formats;

pub const TRAF_HEADER: [&str; 4] = ["frame", "agent_id", "x", "y"];

fn open(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn finite(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{field} = {raw:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("{field} = {raw:?} is not finite")));
    }
    Ok(v)
}

fn traj_error(path: &Path, line: u64, e: TrajError) -> Error {
    Error::parse(path, line, e.to_string())
}

/// Reads a traf-csv file. The header row is optional.
pub fn load_trajectories(path: &Path) -> Result<TrajectorySet> {
    parse_trajectories(&open(path)?, path)
}

/// Parses traf-csv text; `path` only labels errors.
pub fn parse_trajectories(data: &[u8], path: &Path) -> Result<TrajectorySet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(data);
    let mut seen: HashMap<(AgentId, i64), u64> = HashMap::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && rec.iter().eq(TRAF_HEADER) {
            continue;
        }
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 4 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 4 fields, found {}", rec.len()),
            ));
        }
        let frame: i64 = rec[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("frame = {:?} is not an integer", &rec[0])))?;
        let agent: AgentId = rec[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("agent_id = {:?} is not an integer", &rec[1])))?;
        let x = finite(path, line, "x", &rec[2])?;
        let y = finite(path, line, "y", &rec[3])?;
        if let Some(first) = seen.insert((agent, frame), line) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate observation of agent {agent} at frame {frame} (first on line {first})"),
            ));
        }
        rows.push((
            agent,
            Observation {
                frame,
                pos: Point::new(x, y),
            },
        ));
    }
    TrajectorySet::from_observations(rows).map_err(|e| traj_error(path, 0, e))
}

/// Argoverse track ids mapped to the numeric ids used internally, in order
/// of first appearance starting at 1.
pub type TrackIds = BTreeMap<AgentId, String>;

/// Reads an Argoverse forecasting CSV (`TIMESTAMP,TRACK_ID,X,Y` plus any other
/// columns). Timestamps are bucketed to frames at `rate_hz` relative to the
/// earliest timestamp.
pub fn load_argoverse(path: &Path, rate_hz: f64) -> Result<(TrajectorySet, TrackIds)> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::format(path, format!("invalid frame rate {rate_hz}")));
    }
    let data = open(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(data.as_slice());
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(path, format!("missing column {name}")))
    };
    let (ct, cid, cx, cy) = (col("TIMESTAMP")?, col("TRACK_ID")?, col("X")?, col("Y")?);

    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |c: usize| rec.get(c).unwrap_or("");
        let t = finite(path, line, "TIMESTAMP", get(ct))?;
        let x = finite(path, line, "X", get(cx))?;
        let y = finite(path, line, "Y", get(cy))?;
        raw.push((line, t, get(cid).to_string(), Point::new(x, y)));
    }
    let t0 = raw.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let mut ids: HashMap<String, AgentId> = HashMap::new();
    let mut names = TrackIds::new();
    let mut seen: HashMap<(AgentId, i64), u64> = HashMap::new();
    let mut rows = Vec::with_capacity(raw.len());
    for (line, t, track, pos) in raw {
        let next = ids.len() as AgentId + 1;
        let id = *ids.entry(track.clone()).or_insert_with(|| {
            names.insert(next, track);
            next
        });
        let frame = ((t - t0) * rate_hz).round() as i64;
        if let Some(first) = seen.insert((id, frame), line) {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "track {} has two samples in frame {frame} (first on line {first})",
                    names[&id]
                ),
            ));
        }
        rows.push((id, Observation { frame, pos }));
    }
    let set = TrajectorySet::from_observations(rows).map_err(|e| traj_error(path, 0, e))?;
    Ok((set, names))
}

/// Writes traf-csv sorted by frame, then agent. Coordinates use the shortest
/// representation that parses back to the same value.
pub fn write_trajectories(path: &Path, set: &TrajectorySet) -> Result<()> {
    let mut rows: Vec<(i64, AgentId, Point)> = set
        .iter()
        .flat_map(|(id, t)| t.iter().map(move |o| (o.frame, id, o.pos)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::with_capacity(rows.len() * 32);
    out.push_str(&TRAF_HEADER.join(","));
    out.push('\n');
    for (f, id, p) in rows {
        out.push_str(&format!("{f},{id},{},{}\n", p.x, p.y));
    }
    write_file(path, out.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// Creates `dir` if needed. An existing non-empty directory is refused
/// unless `force` is set.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    match fs::read_dir(dir) {
        Ok(mut it) => {
            if it.next().is_some() && !force {
                return Err(Error::OutputExists(dir.to_path_buf()));
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        Err(e) => Err(Error::io(dir, e)),
    }
}

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const LABELS_FILE: &str = "labels.csv";

/// Writes `trajectories.csv` and `labels.csv` into `dir`.
pub fn export_scenario(scenario: &LabeledScenario, dir: &Path, force: bool) -> Result<()> {
    prepare_output_dir(dir, force)?;
    write_trajectories(&dir.join(TRAJECTORIES_FILE), &scenario.trajectories)?;
    formats::write_labels(&dir.join(LABELS_FILE), &scenario.labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<TrajectorySet> {
        parse_trajectories(s.as_bytes(), Path::new("t.csv"))
    }

    #[test]
    fn three_rows_two_agents() {
        let set = parse("0,1,0.0,0.0\n0,2,1.0,0.0\n1,1,0.5,0.5\n").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.track(1).unwrap().len(), 2);
        assert_eq!(set.track(2).unwrap().len(), 1);
        let with_header = parse("frame,agent_id,x,y\n0,1,0.0,0.0\n0,2,1.0,0.0\n1,1,0.5,0.5\n").unwrap();
        assert_eq!(set, with_header);
    }

    #[test]
    fn empty_file_is_empty_set() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("frame,agent_id,x,y\n").unwrap().is_empty());
    }

    #[test]
    fn nan_names_the_line() {
        let err = parse("frame,agent_id,x,y\n0,1,0,0\n1,1,nan,0\n").unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("x"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_observation_is_rejected() {
        let err = parse("0,1,0,0\n0,1,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_rows_name_the_line() {
        assert!(matches!(parse("0,1,0\n").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(
            parse("0,1,0,0\nx,1,0,0\n").unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }
}
