//! Scenario, vehicle and trajectory types plus ingestion from the JSONL/CSV
//! interchange formats.
//!
//! One interchange row is one vehicle frame:
//! `{"scenario_id", "vehicle_id", "t", "x", "y", "v", "a", "phi", "omega"}`.
//! Rows are grouped by `(scenario_id, vehicle_id)` in order of first
//! appearance and sorted by `t` within a group.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sample rate assumed when the `t` column is absent.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 10.0;

/// Relative tolerance on each frame spacing against the median spacing.
const SAMPLING_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Speed along heading, m/s.
    pub v: f64,
    /// m/s².
    pub a: f64,
    /// Heading, radians.
    pub phi: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
}

impl VehicleState {
    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("x", self.x),
            ("y", self.y),
            ("v", self.v),
            ("a", self.a),
            ("phi", self.phi),
            ("omega", self.omega),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario_id: String,
    pub vehicle_id: String,
    pub sample_rate_hz: f64,
    pub states: Vec<VehicleState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.states.len() as f64 / self.sample_rate_hz
    }

    pub fn key(&self) -> (String, String) {
        (self.scenario_id.clone(), self.vehicle_id.clone())
    }

    pub fn omega(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.omega).collect()
    }

    pub fn accel(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.a).collect()
    }

    pub fn speed(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.v).collect()
    }

    /// Builds a trajectory from positions alone, deriving speed, heading,
    /// acceleration and yaw rate by finite differences.
    pub fn from_positions(
        scenario_id: impl Into<String>,
        vehicle_id: impl Into<String>,
        sample_rate_hz: f64,
        positions: &[(f64, f64)],
    ) -> Result<Self, KinematicsError> {
        let k = derive_kinematics(positions, sample_rate_hz)?;
        let states = positions
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| VehicleState { x, y, v: k.v[i], a: k.a[i], phi: k.phi[i], omega: k.omega[i] })
            .collect();
        Ok(Trajectory { scenario_id: scenario_id.into(), vehicle_id: vehicle_id.into(), sample_rate_hz, states })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetadata {
    pub source: String,
    /// Shared sample rate, when every trajectory agrees on one.
    pub sample_rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub trajectories: Vec<Trajectory>,
    pub metadata: CorpusMetadata,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("duplicate trajectory id {scenario_id}:{vehicle_id}")]
    DuplicateId { scenario_id: String, vehicle_id: String },
    #[error("trajectory {scenario_id}:{vehicle_id} has no states")]
    EmptyTrajectory { scenario_id: String, vehicle_id: String },
    #[error("trajectory {scenario_id}:{vehicle_id} has invalid sample rate {rate}")]
    InvalidSampleRate { scenario_id: String, vehicle_id: String, rate: f64 },
}

impl Corpus {
    /// Validates id uniqueness and non-empty trajectories.
    pub fn new(trajectories: Vec<Trajectory>, source: impl Into<String>) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for t in &trajectories {
            if !seen.insert((t.scenario_id.as_str(), t.vehicle_id.as_str())) {
                return Err(CorpusError::DuplicateId {
                    scenario_id: t.scenario_id.clone(),
                    vehicle_id: t.vehicle_id.clone(),
                });
            }
            if t.states.is_empty() {
                return Err(CorpusError::EmptyTrajectory {
                    scenario_id: t.scenario_id.clone(),
                    vehicle_id: t.vehicle_id.clone(),
                });
            }
            if !(t.sample_rate_hz.is_finite() && t.sample_rate_hz > 0.0) {
                return Err(CorpusError::InvalidSampleRate {
                    scenario_id: t.scenario_id.clone(),
                    vehicle_id: t.vehicle_id.clone(),
                    rate: t.sample_rate_hz,
                });
            }
        }
        let sample_rate_hz = match trajectories.first() {
            Some(first) if trajectories.iter().all(|t| t.sample_rate_hz == first.sample_rate_hz) => {
                Some(first.sample_rate_hz)
            }
            _ => None,
        };
        Ok(Corpus { trajectories, metadata: CorpusMetadata { source: source.into(), sample_rate_hz } })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Binary snapshot used between CLI steps.
    pub fn to_bytes(&self) -> Vec<u8> {
        bincode::serialize(self).expect("corpus serialization is infallible")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IngestError> {
        bincode::deserialize(bytes).map_err(|e| IngestError::Binary(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("input contains no rows")]
    EmptyFile,
    #[error("row {row}: missing column `{column}`")]
    MissingColumn { row: usize, column: String },
    #[error("row {row}: non-finite value in column `{column}`")]
    NonFiniteValue { row: usize, column: String },
    #[error("row {row}: negative speed {value}")]
    NegativeSpeed { row: usize, value: f64 },
    #[error("row {row}: cannot parse: {message}")]
    Parse { row: usize, message: String },
    #[error("trajectory {scenario_id}:{vehicle_id}: frame spacing deviates from median by more than 1%")]
    NonUniformSampling { scenario_id: String, vehicle_id: String },
    #[error("corrupt corpus snapshot: {0}")]
    Binary(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl IngestError {
    /// Row index for row-scoped errors (0-based, header excluded).
    pub fn row(&self) -> Option<usize> {
        match self {
            IngestError::MissingColumn { row, .. }
            | IngestError::NonFiniteValue { row, .. }
            | IngestError::NegativeSpeed { row, .. }
            | IngestError::Parse { row, .. } => Some(*row),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Used when `t` is absent, and for single-frame trajectories.
    pub default_sample_rate_hz: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { default_sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ }
    }
}

struct Row {
    scenario_id: String,
    vehicle_id: String,
    t: Option<f64>,
    state: VehicleState,
}

const STATE_COLUMNS: [&str; 6] = ["x", "y", "v", "a", "phi", "omega"];

pub fn ingest(path: &Path, format: Format) -> Result<Corpus, IngestError> {
    ingest_with(path, format, IngestOptions::default())
}

pub fn ingest_with(path: &Path, format: Format, options: IngestOptions) -> Result<Corpus, IngestError> {
    let file = fs::File::open(path)?;
    let rows = match format {
        Format::Jsonl => read_jsonl_rows(BufReader::new(file))?,
        Format::Csv => read_csv_rows(file)?,
    };
    assemble(rows, options, path.display().to_string())
}

/// Parses interchange text already held in memory.
pub fn ingest_str(text: &str, format: Format, options: IngestOptions) -> Result<Corpus, IngestError> {
    let rows = match format {
        Format::Jsonl => read_jsonl_rows(text.as_bytes())?,
        Format::Csv => read_csv_rows(text.as_bytes())?,
    };
    assemble(rows, options, "<memory>".to_string())
}

fn json_id(value: Option<&serde_json::Value>, row: usize, column: &str) -> Result<String, IngestError> {
    match value {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
        _ => Err(IngestError::MissingColumn { row, column: column.to_string() }),
    }
}

fn json_number(value: Option<&serde_json::Value>, row: usize, column: &str) -> Result<Option<f64>, IngestError> {
    let non_finite = || IngestError::NonFiniteValue { row, column: column.to_string() };
    match value {
        None => Ok(None),
        Some(serde_json::Value::Number(n)) => n.as_f64().map(Some).ok_or_else(non_finite),
        // JSON cannot carry NaN/Inf as numbers; accept the usual spellings as strings
        Some(serde_json::Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|e| IngestError::Parse { row, message: format!("column `{column}`: {e}") }),
        Some(serde_json::Value::Null) => Err(non_finite()),
        Some(other) => Err(IngestError::Parse { row, message: format!("column `{column}`: unexpected {other}") }),
    }
}

fn read_jsonl_rows<R: BufRead>(reader: R) -> Result<Vec<Row>, IngestError> {
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = rows.len();
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&line).map_err(|e| IngestError::Parse { row, message: e.to_string() })?;
        let scenario_id = json_id(obj.get("scenario_id"), row, "scenario_id")?;
        let vehicle_id = json_id(obj.get("vehicle_id"), row, "vehicle_id")?;
        let t = json_number(obj.get("t"), row, "t")?;
        let mut vals = [0.0; 6];
        for (slot, col) in vals.iter_mut().zip(STATE_COLUMNS) {
            *slot = json_number(obj.get(col), row, col)?
                .ok_or_else(|| IngestError::MissingColumn { row, column: col.to_string() })?;
        }
        rows.push(make_row(row, scenario_id, vehicle_id, t, vals)?);
    }
    Ok(rows)
}

fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<Row>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| IngestError::Parse { row: 0, message: e.to_string() })?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut index = HashMap::new();
    for name in ["scenario_id", "vehicle_id"].iter().chain(STATE_COLUMNS.iter()) {
        let i = col(name).ok_or_else(|| IngestError::MissingColumn { row: 0, column: name.to_string() })?;
        index.insert(*name, i);
    }
    let t_col = col("t");

    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::Parse { row, message: e.to_string() })?;
        let field = |name: &str| -> Result<&str, IngestError> {
            record.get(index[name]).ok_or_else(|| IngestError::MissingColumn { row, column: name.to_string() })
        };
        let number = |name: &str, raw: &str| -> Result<f64, IngestError> {
            raw.parse::<f64>().map_err(|e| IngestError::Parse { row, message: format!("column `{name}`: {e}") })
        };
        let scenario_id = field("scenario_id")?.to_string();
        let vehicle_id = field("vehicle_id")?.to_string();
        let t = match t_col.and_then(|i| record.get(i)) {
            Some(raw) if !raw.is_empty() => Some(number("t", raw)?),
            _ => None,
        };
        let mut vals = [0.0; 6];
        for (slot, name) in vals.iter_mut().zip(STATE_COLUMNS) {
            *slot = number(name, field(name)?)?;
        }
        rows.push(make_row(row, scenario_id, vehicle_id, t, vals)?);
    }
    Ok(rows)
}

fn make_row(row: usize, scenario_id: String, vehicle_id: String, t: Option<f64>, v: [f64; 6]) -> Result<Row, IngestError> {
    if let Some(t) = t {
        if !t.is_finite() {
            return Err(IngestError::NonFiniteValue { row, column: "t".to_string() });
        }
    }
    let state = VehicleState { x: v[0], y: v[1], v: v[2], a: v[3], phi: v[4], omega: v[5] };
    for (name, value) in state.fields() {
        if !value.is_finite() {
            return Err(IngestError::NonFiniteValue { row, column: name.to_string() });
        }
    }
    if state.v < 0.0 {
        return Err(IngestError::NegativeSpeed { row, value: state.v });
    }
    Ok(Row { scenario_id, vehicle_id, t, state })
}

/// Snap inferred rates to 1e-6 Hz so that rates written as `i / rate`
/// survive a text round trip unchanged.
fn snap_rate(rate: f64) -> f64 {
    (rate * 1e6).round() / 1e6
}

fn assemble(rows: Vec<Row>, options: IngestOptions, source: String) -> Result<Corpus, IngestError> {
    if rows.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), Vec<(Option<f64>, VehicleState)>> = HashMap::new();
    for r in rows {
        let key = (r.scenario_id, r.vehicle_id);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        entry.push((r.t, r.state));
    }

    let mut trajectories = Vec::with_capacity(order.len());
    for key in order {
        let mut frames = groups.remove(&key).expect("group exists");
        let has_time = frames.iter().all(|(t, _)| t.is_some());
        let sample_rate_hz = if has_time && frames.len() >= 2 {
            frames.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
            let times: Vec<f64> = frames.iter().map(|(t, _)| t.unwrap()).collect();
            let mut dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            let mut sorted = dts.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = sorted[sorted.len() / 2];
            let uniform = median > 0.0 && dts.iter_mut().all(|dt| ((*dt - median) / median).abs() <= SAMPLING_TOLERANCE);
            if !uniform {
                return Err(IngestError::NonUniformSampling { scenario_id: key.0, vehicle_id: key.1 });
            }
            snap_rate(1.0 / median)
        } else {
            options.default_sample_rate_hz
        };
        trajectories.push(Trajectory {
            scenario_id: key.0,
            vehicle_id: key.1,
            sample_rate_hz,
            states: frames.into_iter().map(|(_, s)| s).collect(),
        });
    }
    Ok(Corpus::new(trajectories, source)?)
}

#[derive(Serialize)]
struct RowOut<'a> {
    scenario_id: &'a str,
    vehicle_id: &'a str,
    t: f64,
    x: f64,
    y: f64,
    v: f64,
    a: f64,
    phi: f64,
    omega: f64,
}

fn rows_out(corpus: &Corpus) -> impl Iterator<Item = RowOut<'_>> {
    corpus.trajectories.iter().flat_map(|traj| {
        traj.states.iter().enumerate().map(move |(i, s)| RowOut {
            scenario_id: &traj.scenario_id,
            vehicle_id: &traj.vehicle_id,
            t: i as f64 / traj.sample_rate_hz,
            x: s.x,
            y: s.y,
            v: s.v,
            a: s.a,
            phi: s.phi,
            omega: s.omega,
        })
    })
}

/// Writes the corpus in interchange form. `ingest` of the output yields an
/// equal set of trajectories.
pub fn export<W: Write>(corpus: &Corpus, format: Format, mut out: W) -> Result<(), IngestError> {
    match format {
        Format::Jsonl => {
            for row in rows_out(corpus) {
                serde_json::to_writer(&mut out, &row).map_err(|e| IngestError::Io(e.into()))?;
                out.write_all(b"\n")?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows_out(corpus) {
                w.serialize(row).map_err(|e| IngestError::Io(std::io::Error::other(e)))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("need at least 3 positions, got {0}")]
    TooShort(usize),
    #[error("sample rate must be positive")]
    InvalidSampleRate,
}

/// Kinematic channels derived from positions.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChannels {
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub phi: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Central differences in the interior, one-sided at both ends.
fn gradient(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (values[1] - values[0]) / dt
            } else if i == n - 1 {
                (values[n - 1] - values[n - 2]) / dt
            } else {
                (values[i + 1] - values[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let d = a - angles[i - 1];
            // shortest signed difference
            let wrapped = (d + PI).rem_euclid(TAU) - PI;
            offset += wrapped - d;
        }
        out.push(a + offset);
    }
    out
}

pub fn derive_kinematics(positions: &[(f64, f64)], sample_rate_hz: f64) -> Result<KinematicChannels, KinematicsError> {
    if positions.len() < 3 {
        return Err(KinematicsError::TooShort(positions.len()));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(KinematicsError::InvalidSampleRate);
    }
    let dt = 1.0 / sample_rate_hz;
    let xs: Vec<f64> = positions.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = positions.iter().map(|p| p.1).collect();
    let vx = gradient(&xs, dt);
    let vy = gradient(&ys, dt);
    let v: Vec<f64> = vx.iter().zip(&vy).map(|(x, y)| x.hypot(*y)).collect();
    let raw_phi: Vec<f64> = vx.iter().zip(&vy).map(|(x, y)| y.atan2(*x)).collect();
    let unwrapped = unwrap_angles(&raw_phi);
    let omega = gradient(&unwrapped, dt);
    let a = gradient(&v, dt);
    Ok(KinematicChannels { v, a, phi: raw_phi, omega })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(sid: &str, vid: &str, t: f64, a: &str) -> String {
        format!(
            r#"{{"scenario_id":"{sid}","vehicle_id":"{vid}","t":{t},"x":0.0,"y":0.0,"v":1.0,"a":{a},"phi":0.0,"omega":0.0}}"#
        )
    }

    #[test]
    fn two_rows_one_vehicle() {
        let text = [line("s", "v", 0.0, "0"), line("s", "v", 0.1, "0")].join("\n");
        let c = ingest_str(&text, Format::Jsonl, IngestOptions::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.trajectories[0].len(), 2);
        assert_eq!(c.trajectories[0].sample_rate_hz, 10.0);
    }

    #[test]
    fn nan_acceleration_reports_row() {
        let mut lines: Vec<String> = (0..10).map(|i| line("s", "v", i as f64 * 0.1, "0")).collect();
        lines[7] = line("s", "v", 0.7, "\"NaN\"");
        let err = ingest_str(&lines.join("\n"), Format::Jsonl, IngestOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::NonFiniteValue { row: 7, ref column } if column == "a"), "{err:?}");

        let mut csv = String::from("scenario_id,vehicle_id,t,x,y,v,a,phi,omega\n");
        for i in 0..10 {
            let a = if i == 7 { "NaN" } else { "0" };
            csv.push_str(&format!("s,v,{},0,0,1,{a},0,0\n", i as f64 * 0.1));
        }
        let err = ingest_str(&csv, Format::Csv, IngestOptions::default()).unwrap_err();
        assert_eq!(err.row(), Some(7));
    }

    #[test]
    fn groups_vehicles_within_scenario() {
        let text = [line("s", "a", 0.0, "0"), line("s", "b", 0.0, "0"), line("s", "a", 0.1, "0"), line("s", "b", 0.1, "0")]
            .join("\n");
        let c = ingest_str(&text, Format::Jsonl, IngestOptions::default()).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.trajectories.iter().all(|t| t.scenario_id == "s" && t.len() == 2));
        assert_eq!(c.trajectories[0].vehicle_id, "a");
    }

    #[test]
    fn sorts_by_time() {
        let text = [line("s", "v", 0.2, "3"), line("s", "v", 0.0, "1"), line("s", "v", 0.1, "2")].join("\n");
        let c = ingest_str(&text, Format::Jsonl, IngestOptions::default()).unwrap();
        assert_eq!(c.trajectories[0].accel(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(ingest_str("", Format::Jsonl, IngestOptions::default()), Err(IngestError::EmptyFile)));
        let missing = r#"{"scenario_id":"s","vehicle_id":"v","x":0,"y":0,"v":1,"a":0,"phi":0}"#;
        assert!(matches!(
            ingest_str(missing, Format::Jsonl, IngestOptions::default()),
            Err(IngestError::MissingColumn { ref column, .. }) if column == "omega"
        ));
        let csv = "scenario_id,vehicle_id,t,x,y,v,a,phi\ns,v,0,0,0,1,0,0\n";
        assert!(matches!(ingest_str(csv, Format::Csv, IngestOptions::default()), Err(IngestError::MissingColumn { .. })));
        let jittery = [0.0, 0.1, 0.2, 0.35].iter().map(|&t| line("s", "v", t, "0")).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            ingest_str(&jittery, Format::Jsonl, IngestOptions::default()),
            Err(IngestError::NonUniformSampling { .. })
        ));
        let neg = r#"{"scenario_id":"s","vehicle_id":"v","t":0,"x":0,"y":0,"v":-1,"a":0,"phi":0,"omega":0}"#;
        assert!(matches!(ingest_str(neg, Format::Jsonl, IngestOptions::default()), Err(IngestError::NegativeSpeed { .. })));
    }

    #[test]
    fn missing_time_uses_default_rate() {
        let csv = "scenario_id,vehicle_id,x,y,v,a,phi,omega\ns,v,0,0,1,0,0,0\ns,v,1,0,1,0,0,0\n";
        let opts = IngestOptions { default_sample_rate_hz: 25.0 };
        let c = ingest_str(csv, Format::Csv, opts).unwrap();
        assert_eq!(c.trajectories[0].sample_rate_hz, 25.0);
        assert_eq!(c.trajectories[0].len(), 2);
    }

    #[test]
    fn constant_velocity_kinematics() {
        let k = derive_kinematics(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], 1.0).unwrap();
        assert_eq!(k.v, vec![1.0; 3]);
        assert_eq!(k.omega, vec![0.0; 3]);
        assert_eq!(k.a, vec![0.0; 3]);
        assert_eq!(derive_kinematics(&[(0.0, 0.0), (1.0, 0.0)], 1.0), Err(KinematicsError::TooShort(2)));
    }

    #[test]
    fn heading_unwrap_crosses_pi() {
        let phi = unwrap_angles(&[3.0, -3.0, -2.9]);
        assert_abs_diff_eq!(phi[1], -3.0 + std::f64::consts::TAU, epsilon = 1e-12);
        assert!(phi.windows(2).all(|w| (w[1] - w[0]).abs() < 0.5));
    }
}
