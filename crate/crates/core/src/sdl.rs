//! Segment-level behavior labels and their canonical text form.
//!
//! Times are kept in whole milliseconds so that equality, hashing and the
//! three-decimal text form agree exactly.

use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::actions::{LateralAction, Level, LongitudinalAction, StreamLabel};
use crate::pipeline::{runs, FrameLabels};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SdlError {
    #[error("cannot project {from} labels to the finer level {to}")]
    InvalidDirection { from: Level, to: Level },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{stream} segment {index}: {message}")]
    Invalid { stream: &'static str, index: usize, message: String },
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<SdlError> },
}

/// A half-open interval `[start, end)` carrying one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionSegment<L> {
    pub label: L,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl<L> ActionSegment<L> {
    pub fn start_s(&self) -> f64 {
        self.start_ms as f64 / 1000.0
    }

    pub fn end_s(&self) -> f64 {
        self.end_ms as f64 / 1000.0
    }

    pub fn duration_s(&self) -> f64 {
        (self.end_ms - self.start_ms) as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SdlLabel {
    pub scenario_id: String,
    pub vehicle_id: String,
    pub level: Level,
    pub lateral: Vec<ActionSegment<LateralAction>>,
    pub longitudinal: Vec<ActionSegment<LongitudinalAction>>,
}

/// Frame index to milliseconds from the start of the trajectory.
pub fn frame_ms(frame: usize, sample_rate_hz: f64) -> u64 {
    (frame as f64 * 1000.0 / sample_rate_hz).round() as u64
}

fn segments<L: StreamLabel>(labels: &[L], sample_rate_hz: f64) -> Vec<ActionSegment<L>> {
    runs(labels)
        .into_iter()
        .map(|(s, e)| ActionSegment { label: labels[s], start_ms: frame_ms(s, sample_rate_hz), end_ms: frame_ms(e, sample_rate_hz) })
        .collect()
}

fn coalesce<L: StreamLabel>(segs: impl IntoIterator<Item = ActionSegment<L>>) -> Vec<ActionSegment<L>> {
    let mut out: Vec<ActionSegment<L>> = Vec::new();
    for seg in segs {
        match out.last_mut() {
            Some(last) if last.label == seg.label => last.end_ms = seg.end_ms,
            _ => out.push(seg),
        }
    }
    out
}

/// Maximal frame runs become segments.
pub fn to_sdl(frames: &FrameLabels, scenario_id: &str, vehicle_id: &str) -> SdlLabel {
    SdlLabel {
        scenario_id: scenario_id.to_string(),
        vehicle_id: vehicle_id.to_string(),
        level: frames.level,
        lateral: segments(&frames.lateral, frames.sample_rate_hz),
        longitudinal: segments(&frames.longitudinal, frames.sample_rate_hz),
    }
}

fn validate_stream<L: StreamLabel>(stream: &'static str, segs: &[ActionSegment<L>], level: Level) -> Result<(), SdlError> {
    let err = |index: usize, message: String| Err(SdlError::Invalid { stream, index, message });
    if segs.is_empty() {
        return err(0, "stream is empty".into());
    }
    for (i, seg) in segs.iter().enumerate() {
        if !seg.label.is_legal(level) {
            return err(i, format!("`{}` is not a {level} label", seg.label));
        }
        if seg.end_ms <= seg.start_ms {
            return err(i, "segment ends before it starts".into());
        }
        let expected_start = if i == 0 { 0 } else { segs[i - 1].end_ms };
        if seg.start_ms < expected_start {
            return err(i, "overlaps the previous segment".into());
        }
        if seg.start_ms > expected_start {
            return err(i, "leaves a gap after the previous segment".into());
        }
        if i > 0 && segs[i - 1].label == seg.label {
            return err(i, "repeats the previous label".into());
        }
    }
    Ok(())
}

impl SdlLabel {
    pub fn key(&self) -> (String, String) {
        (self.scenario_id.clone(), self.vehicle_id.clone())
    }

    pub fn end_ms(&self) -> u64 {
        self.lateral.last().map_or(0, |s| s.end_ms)
    }

    pub fn lateral_labels(&self) -> Vec<LateralAction> {
        self.lateral.iter().map(|s| s.label).collect()
    }

    pub fn longitudinal_labels(&self) -> Vec<LongitudinalAction> {
        self.longitudinal.iter().map(|s| s.label).collect()
    }

    /// Segments start at 0, are contiguous, coalesced and legal for the
    /// level, and both streams end together.
    pub fn validate(&self) -> Result<(), SdlError> {
        validate_stream("lateral", &self.lateral, self.level)?;
        validate_stream("longitudinal", &self.longitudinal, self.level)?;
        let (a, b) = (self.lateral.last().expect("validated").end_ms, self.longitudinal.last().expect("validated").end_ms);
        if a != b {
            return Err(SdlError::Invalid {
                stream: "longitudinal",
                index: self.longitudinal.len() - 1,
                message: format!("stream ends at {b} ms, lateral ends at {a} ms"),
            });
        }
        Ok(())
    }

    /// Renames every action to its ancestor at `level` and re-coalesces.
    pub fn project(&self, level: Level) -> Result<SdlLabel, SdlError> {
        if level > self.level {
            return Err(SdlError::InvalidDirection { from: self.level, to: level });
        }
        Ok(SdlLabel {
            scenario_id: self.scenario_id.clone(),
            vehicle_id: self.vehicle_id.clone(),
            level,
            lateral: coalesce(self.lateral.iter().map(|s| ActionSegment { label: s.label.project(level), ..*s })),
            longitudinal: coalesce(self.longitudinal.iter().map(|s| ActionSegment { label: s.label.project(level), ..*s })),
        })
    }

    /// One-line JSON record with sorted keys and three-decimal times.
    pub fn to_canonical(&self) -> String {
        fn stream<L: StreamLabel>(out: &mut String, segs: &[ActionSegment<L>]) {
            out.push('[');
            for (i, s) in segs.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(
                    out,
                    "{{\"end_s\":{}.{:03},\"label\":\"{}\",\"start_s\":{}.{:03}}}",
                    s.end_ms / 1000,
                    s.end_ms % 1000,
                    s.label,
                    s.start_ms / 1000,
                    s.start_ms % 1000
                );
            }
            out.push(']');
        }
        let quote = |s: &str| serde_json::to_string(s).expect("strings serialize");
        let mut out = String::from("{\"lateral\":");
        stream(&mut out, &self.lateral);
        let _ = write!(out, ",\"level\":\"{}\",\"longitudinal\":", self.level);
        stream(&mut out, &self.longitudinal);
        let _ = write!(out, ",\"scenario_id\":{},\"vehicle_id\":{}}}", quote(&self.scenario_id), quote(&self.vehicle_id));
        out
    }

    /// Parses and validates one record. Field order and number formatting
    /// are free; times are rounded to the millisecond.
    pub fn from_canonical(text: &str) -> Result<SdlLabel, SdlError> {
        let raw: RawLabel = serde_json::from_str(text)
            .map_err(|e| SdlError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        let label = SdlLabel {
            scenario_id: raw.scenario_id,
            vehicle_id: raw.vehicle_id,
            level: raw.level,
            lateral: convert("lateral", raw.lateral)?,
            longitudinal: convert("longitudinal", raw.longitudinal)?,
        };
        label.validate()?;
        Ok(label)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    label: String,
    start_s: f64,
    end_s: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabel {
    scenario_id: String,
    vehicle_id: String,
    level: Level,
    lateral: Vec<RawSegment>,
    longitudinal: Vec<RawSegment>,
}

fn to_ms(seconds: f64) -> Option<u64> {
    (seconds.is_finite() && seconds >= 0.0).then(|| (seconds * 1000.0).round() as u64)
}

fn convert<L: StreamLabel>(stream: &'static str, raw: Vec<RawSegment>) -> Result<Vec<ActionSegment<L>>, SdlError> {
    raw.into_iter()
        .enumerate()
        .map(|(index, r)| {
            let invalid = |message: String| SdlError::Invalid { stream, index, message };
            let label = r.label.parse::<L>().map_err(|e| invalid(e.to_string()))?;
            let start_ms = to_ms(r.start_s).ok_or_else(|| invalid("start_s must be a non-negative number".into()))?;
            let end_ms = to_ms(r.end_s).ok_or_else(|| invalid("end_s must be a non-negative number".into()))?;
            Ok(ActionSegment { label, start_ms, end_ms })
        })
        .collect()
}

/// One canonical record per line.
pub fn write_jsonl<'a>(labels: impl IntoIterator<Item = &'a SdlLabel>) -> String {
    let mut out = String::new();
    for l in labels {
        out.push_str(&l.to_canonical());
        out.push('\n');
    }
    out
}

/// Parses a JSONL document; blank lines are skipped. Errors carry the
/// 1-based line number.
pub fn parse_jsonl(text: &str) -> Result<Vec<SdlLabel>, SdlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| SdlLabel::from_canonical(l).map_err(|e| SdlError::AtLine { line: i + 1, source: Box::new(e) }))
        .collect()
}
