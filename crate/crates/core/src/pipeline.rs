//! The four labeling stages.
//!
//! Stage 1 applies the threshold rules frame by frame. Stage 2 applies the
//! stopped-vehicle rule and a label smoother. Stage 3 joins opposite turns
//! into merges. Stage 4 refines turns by yaw-rate magnitude and moving
//! longitudinal runs by speed band.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{Direction, Intensity, LateralAction, Level, LongitudinalAction, SpeedProfile, StreamLabel};
use crate::partition::{partition_index, ThresholdError, ThresholdSet};
use crate::trajectory::Trajectory;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Thresholds(#[from] ThresholdError),
    #[error("trajectory has no frames")]
    EmptyTrajectory,
    #[error("trajectory sampled at {got} Hz, config expects {expected} Hz")]
    RateMismatch { expected: f64, got: f64 },
    #[error("expected {expected} labels, got {got}")]
    WrongLevel { expected: Level, got: Level },
    #[error("labels cover {got} frames, trajectory has {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub thresholds: ThresholdSet,
    /// When set, trajectories sampled at any other rate are rejected.
    pub sample_rate_hz: Option<f64>,
    pub min_action_duration_s: f64,
    pub merge_max_gap_s: f64,
    pub smoother_max_blip_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            thresholds: ThresholdSet::default(),
            sample_rate_hz: None,
            min_action_duration_s: 1.0,
            merge_max_gap_s: 4.0,
            smoother_max_blip_s: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn with_thresholds(thresholds: ThresholdSet) -> Self {
        PipelineConfig { thresholds, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.thresholds.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if let Some(rate) = self.sample_rate_hz {
            if !positive(rate) {
                return Err(PipelineError::InvalidConfig("sample_rate_hz must be positive".into()));
            }
        }
        if !positive(self.min_action_duration_s) || !positive(self.merge_max_gap_s) || !positive(self.smoother_max_blip_s) {
            return Err(PipelineError::InvalidConfig("durations must be positive".into()));
        }
        if self.merge_max_gap_s < self.min_action_duration_s {
            return Err(PipelineError::InvalidConfig("merge_max_gap_s must be at least min_action_duration_s".into()));
        }
        Ok(())
    }

    fn check(&self, trajectory: &Trajectory) -> Result<(), PipelineError> {
        if trajectory.states.is_empty() {
            return Err(PipelineError::EmptyTrajectory);
        }
        if let Some(expected) = self.sample_rate_hz {
            let got = trajectory.sample_rate_hz;
            if (expected - got).abs() > 1e-9 * expected.max(got) {
                return Err(PipelineError::RateMismatch { expected, got });
            }
        }
        Ok(())
    }
}

/// Smallest frame count whose duration is at least `seconds`.
pub fn frames_for(seconds: f64, sample_rate_hz: f64) -> usize {
    ((seconds * sample_rate_hz - TIME_EPS).ceil().max(1.0)) as usize
}

/// One label per frame for both streams at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabels {
    pub level: Level,
    pub sample_rate_hz: f64,
    #[serde(with = "label_names")]
    pub lateral: Vec<LateralAction>,
    #[serde(with = "label_names")]
    pub longitudinal: Vec<LongitudinalAction>,
}

impl FrameLabels {
    pub fn len(&self) -> usize {
        self.lateral.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lateral.is_empty()
    }

    /// True when both streams have the same length and every label is legal
    /// at `self.level`.
    pub fn is_valid(&self) -> bool {
        self.lateral.len() == self.longitudinal.len()
            && self.lateral.iter().all(|l| l.is_legal(self.level))
            && self.longitudinal.iter().all(|l| l.is_legal(self.level))
    }

    /// Frame-wise projection to a coarser level. Returns `None` if `level`
    /// is finer than `self.level`.
    pub fn project(&self, level: Level) -> Option<FrameLabels> {
        if level > self.level {
            return None;
        }
        Some(FrameLabels {
            level,
            sample_rate_hz: self.sample_rate_hz,
            lateral: self.lateral.iter().map(|l| l.project(level)).collect(),
            longitudinal: self.longitudinal.iter().map(|l| l.project(level)).collect(),
        })
    }
}

mod label_names {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::actions::StreamLabel;

    pub fn serialize<L: StreamLabel, S: Serializer>(labels: &[L], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(labels.iter().map(|l| l.to_string()))
    }

    pub fn deserialize<'de, L: StreamLabel, D: Deserializer<'de>>(d: D) -> Result<Vec<L>, D::Error> {
        Vec::<String>::deserialize(d)?.iter().map(|s| s.parse().map_err(D::Error::custom)).collect()
    }
}

/// All four levels produced by one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLabels {
    pub trace: FrameLabels,
    pub trend: FrameLabels,
    pub maneuver: FrameLabels,
    pub action: FrameLabels,
}

impl LevelLabels {
    pub fn get(&self, level: Level) -> &FrameLabels {
        match level {
            Level::Trace => &self.trace,
            Level::Trend => &self.trend,
            Level::Maneuver => &self.maneuver,
            Level::Action => &self.action,
        }
    }
}

/// Maximal runs of equal values as `[start, end)` ranges.
pub fn runs<T: PartialEq>(values: &[T]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] != values[start] {
            out.push((start, i));
            start = i;
        }
    }
    out
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn lateral_rule(omega: f64, t: &ThresholdSet) -> LateralAction {
    let straight = t.omega[0];
    if omega > straight {
        LateralAction::Turn(Direction::Left, None)
    } else if omega < -straight {
        LateralAction::Turn(Direction::Right, None)
    } else {
        LateralAction::Straight
    }
}

fn accel_rule(a: f64, t: &ThresholdSet) -> LongitudinalAction {
    let [dec, acc] = t.accel;
    if a > acc {
        LongitudinalAction::ACCELERATE
    } else if a < dec {
        LongitudinalAction::DECELERATE
    } else {
        LongitudinalAction::MAINTAIN
    }
}

fn intensity(omega_abs: f64, t: &ThresholdSet) -> Intensity {
    Intensity::ALL[partition_index(omega_abs, &t.omega[1..])]
}

fn speed_profile(v: f64, t: &ThresholdSet) -> SpeedProfile {
    SpeedProfile::ALL[partition_index(v, &t.velocity[1..])]
}

pub fn stage1_trace(trajectory: &Trajectory, config: &PipelineConfig) -> Result<FrameLabels, PipelineError> {
    config.validate()?;
    config.check(trajectory)?;
    let t = &config.thresholds;
    Ok(FrameLabels {
        level: Level::Trace,
        sample_rate_hz: trajectory.sample_rate_hz,
        lateral: trajectory.states.iter().map(|s| lateral_rule(s.omega, t)).collect(),
        longitudinal: trajectory.states.iter().map(|s| accel_rule(s.a, t)).collect(),
    })
}

#[derive(Clone, Copy)]
struct Run<L> {
    label: L,
    start: usize,
    len: usize,
    prev: Option<usize>,
    next: Option<usize>,
}

/// Replaces interior runs shorter than `blip` frames, shortest first (ties:
/// earliest), until none is left.
///
/// A blip between equal flanks takes the flank label. Otherwise `reclass`
/// gives the label of the blip's mean channel value; if that matches a
/// flank the blip joins it, else the blip is split between its flanks.
/// Runs touching a `pinned` frame are never replaced. Changed frames are
/// flagged in `altered`.
fn smooth<L: Copy + Eq>(
    labels: &mut [L],
    blip: usize,
    pinned: &[bool],
    reclass: impl Fn(usize, usize) -> L,
    altered: &mut [bool],
) {
    let mut pinned_before = vec![0usize; labels.len() + 1];
    for (i, &p) in pinned.iter().enumerate() {
        pinned_before[i + 1] = pinned_before[i] + p as usize;
    }
    let spans = runs(labels);
    let mut rs: Vec<Run<L>> = spans
        .iter()
        .enumerate()
        .map(|(k, &(s, e))| Run {
            label: labels[s],
            start: s,
            len: e - s,
            prev: k.checked_sub(1),
            next: (k + 1 < spans.len()).then_some(k + 1),
        })
        .collect();
    let is_blip = |r: &Run<L>| {
        r.prev.is_some() && r.next.is_some() && r.len < blip && pinned_before[r.start + r.len] == pinned_before[r.start]
    };
    let mut heap: BinaryHeap<Reverse<(usize, usize, usize)>> =
        rs.iter().enumerate().filter(|(_, r)| is_blip(r)).map(|(k, r)| Reverse((r.len, r.start, k))).collect();
    let mut alive = vec![true; rs.len()];

    let mut paint = |labels: &mut [L], from: usize, to: usize, label: L| {
        for i in from..to {
            if labels[i] != label {
                labels[i] = label;
                altered[i] = true;
            }
        }
    };

    while let Some(Reverse((len, start, k))) = heap.pop() {
        if !alive[k] || rs[k].len != len || rs[k].start != start || !is_blip(&rs[k]) {
            continue;
        }
        let (p, n) = (rs[k].prev.expect("interior"), rs[k].next.expect("interior"));
        let end = start + len;
        alive[k] = false;
        if rs[p].label == rs[n].label {
            paint(labels, start, end, rs[p].label);
            rs[p].len += len + rs[n].len;
            rs[p].next = rs[n].next;
            if let Some(nn) = rs[n].next {
                rs[nn].prev = Some(p);
            }
            alive[n] = false;
            if is_blip(&rs[p]) {
                heap.push(Reverse((rs[p].len, rs[p].start, p)));
            }
            continue;
        }
        let target = reclass(start, end);
        let left_share = if target == rs[p].label {
            len
        } else if target == rs[n].label {
            0
        } else {
            len / 2
        };
        paint(labels, start, start + left_share, rs[p].label);
        paint(labels, start + left_share, end, rs[n].label);
        rs[p].len += left_share;
        rs[n].start = start + left_share;
        rs[n].len += len - left_share;
        rs[p].next = Some(n);
        rs[n].prev = Some(p);
        for j in [p, n] {
            if is_blip(&rs[j]) {
                heap.push(Reverse((rs[j].len, rs[j].start, j)));
            }
        }
    }
}

/// Trend labels together with the frames the smoother changed in each
/// stream (the stopped-vehicle rule is not counted).
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct TrendDetail {
    pub labels: FrameLabels,
    pub lateral_altered: Vec<bool>,
    pub longitudinal_altered: Vec<bool>,
}

pub(crate) fn stage2_detail(
    trajectory: &Trajectory,
    trace: &FrameLabels,
    config: &PipelineConfig,
) -> Result<TrendDetail, PipelineError> {
    config.validate()?;
    config.check(trajectory)?;
    expect_level(trace, Level::Trace, trajectory.len())?;
    let t = &config.thresholds;
    let states = &trajectory.states;
    let n = states.len();
    let blip = frames_for(config.smoother_max_blip_s, trajectory.sample_rate_hz);
    let stop = t.velocity[0];

    let mut lateral = trace.lateral.clone();
    let mut longitudinal = trace.longitudinal.clone();
    for (i, s) in states.iter().enumerate() {
        if s.v < stop {
            longitudinal[i] = LongitudinalAction::Stopped;
            lateral[i] = LateralAction::Straight;
        }
    }

    let mut longitudinal_altered = vec![false; n];
    smooth(
        &mut longitudinal,
        blip,
        &vec![false; n],
        |a, b| {
            let v = mean(&states[a..b].iter().map(|s| s.v).collect::<Vec<_>>());
            if v < stop {
                LongitudinalAction::Stopped
            } else {
                accel_rule(mean(&states[a..b].iter().map(|s| s.a).collect::<Vec<_>>()), t)
            }
        },
        &mut longitudinal_altered,
    );

    let pinned: Vec<bool> = longitudinal.iter().map(|l| *l == LongitudinalAction::Stopped).collect();
    let mut lateral_altered = vec![false; n];
    for i in 0..n {
        if pinned[i] && lateral[i] != LateralAction::Straight {
            lateral[i] = LateralAction::Straight;
            lateral_altered[i] = true;
        }
    }
    smooth(
        &mut lateral,
        blip,
        &pinned,
        |a, b| lateral_rule(mean(&states[a..b].iter().map(|s| s.omega).collect::<Vec<_>>()), t),
        &mut lateral_altered,
    );

    Ok(TrendDetail {
        labels: FrameLabels { level: Level::Trend, sample_rate_hz: trajectory.sample_rate_hz, lateral, longitudinal },
        lateral_altered,
        longitudinal_altered,
    })
}

pub fn stage2_trend(trajectory: &Trajectory, trace: &FrameLabels, config: &PipelineConfig) -> Result<FrameLabels, PipelineError> {
    Ok(stage2_detail(trajectory, trace, config)?.labels)
}

fn expect_level(labels: &FrameLabels, level: Level, frames: usize) -> Result<(), PipelineError> {
    if labels.level != level {
        return Err(PipelineError::WrongLevel { expected: level, got: labels.level });
    }
    if labels.lateral.len() != frames || labels.longitudinal.len() != frames {
        return Err(PipelineError::LengthMismatch { expected: frames, got: labels.lateral.len().min(labels.longitudinal.len()) });
    }
    Ok(())
}

fn turn_direction(label: LateralAction) -> Option<Direction> {
    match label {
        LateralAction::Turn(d, _) => Some(d),
        _ => None,
    }
}

/// Frame ranges `[start, end)` that become merges, each with the direction
/// of its initial turn. A turn pair is consumed by the merge it forms. A gap
/// holding a stopped frame never joins two turns.
pub fn merge_spans(
    lateral: &[LateralAction],
    longitudinal: &[LongitudinalAction],
    sample_rate_hz: f64,
    merge_max_gap_s: f64,
) -> Vec<(usize, usize, Direction)> {
    let rs = runs(lateral);
    let gap_ok = |(s, e): (usize, usize)| {
        (e - s) as f64 / sample_rate_hz <= merge_max_gap_s + TIME_EPS
            && !longitudinal[s..e].contains(&LongitudinalAction::Stopped)
    };
    let mut out = Vec::new();
    let mut k = 0;
    while k < rs.len() {
        let Some(d) = turn_direction(lateral[rs[k].0]) else {
            k += 1;
            continue;
        };
        let second = match rs.get(k + 1).map(|r| lateral[r.0]) {
            Some(LateralAction::Turn(..)) => Some(k + 1),
            Some(LateralAction::Straight) => rs.get(k + 2).and_then(|r| {
                (turn_direction(lateral[r.0]) == Some(d.opposite()) && gap_ok(rs[k + 1])).then_some(k + 2)
            }),
            _ => None,
        };
        match second {
            Some(j) => {
                out.push((rs[k].0, rs[j].1, d));
                k = j + 1;
            }
            None => k += 1,
        }
    }
    out
}

pub fn stage3_maneuver(trend: &FrameLabels, config: &PipelineConfig) -> Result<FrameLabels, PipelineError> {
    config.validate()?;
    expect_level(trend, Level::Trend, trend.len())?;
    let mut lateral = trend.lateral.clone();
    for (s, e, d) in merge_spans(&lateral, &trend.longitudinal, trend.sample_rate_hz, config.merge_max_gap_s) {
        lateral[s..e].fill(LateralAction::Merge(d, None));
    }
    Ok(FrameLabels { level: Level::Maneuver, sample_rate_hz: trend.sample_rate_hz, lateral, longitudinal: trend.longitudinal.clone() })
}

/// Per-frame refinement of one parent run, collapsed to the run mean when
/// any refined sub-run is shorter than `min_frames`.
fn refine<R: Copy + PartialEq>(values: &[f64], min_frames: usize, classify: impl Fn(f64) -> R) -> Vec<R> {
    let per_frame: Vec<R> = values.iter().map(|&v| classify(v)).collect();
    if runs(&per_frame).iter().any(|(s, e)| e - s < min_frames) {
        vec![classify(mean(values)); values.len()]
    } else {
        per_frame
    }
}

pub fn stage4_action(trajectory: &Trajectory, maneuver: &FrameLabels, config: &PipelineConfig) -> Result<FrameLabels, PipelineError> {
    config.validate()?;
    config.check(trajectory)?;
    expect_level(maneuver, Level::Maneuver, trajectory.len())?;
    let t = &config.thresholds;
    let states = &trajectory.states;
    let min_frames = frames_for(config.min_action_duration_s, trajectory.sample_rate_hz);

    let mut lateral = maneuver.lateral.clone();
    for (s, e) in runs(&maneuver.lateral) {
        let omega_abs: Vec<f64> = states[s..e].iter().map(|x| x.omega.abs()).collect();
        match maneuver.lateral[s] {
            LateralAction::Straight => {}
            LateralAction::Turn(d, _) => {
                for (slot, i) in lateral[s..e].iter_mut().zip(refine(&omega_abs, min_frames, |w| intensity(w, t))) {
                    *slot = LateralAction::Turn(d, Some(i));
                }
            }
            LateralAction::Merge(d, _) => {
                // one intensity for the whole merge, from its turning frames
                let turning: Vec<f64> = omega_abs.iter().copied().filter(|&w| w > t.omega[0]).collect();
                let basis = if turning.is_empty() { &omega_abs } else { &turning };
                lateral[s..e].fill(LateralAction::Merge(d, Some(intensity(mean(basis), t))));
            }
        }
    }

    let mut longitudinal = maneuver.longitudinal.clone();
    for (s, e) in runs(&maneuver.longitudinal) {
        if let LongitudinalAction::Moving(change, _) = maneuver.longitudinal[s] {
            let v: Vec<f64> = states[s..e].iter().map(|x| x.v).collect();
            for (slot, p) in longitudinal[s..e].iter_mut().zip(refine(&v, min_frames, |v| speed_profile(v, t))) {
                *slot = LongitudinalAction::Moving(change, Some(p));
            }
        }
    }
    Ok(FrameLabels { level: Level::Action, sample_rate_hz: trajectory.sample_rate_hz, lateral, longitudinal })
}

pub fn run_pipeline(trajectory: &Trajectory, config: &PipelineConfig) -> Result<LevelLabels, PipelineError> {
    let trace = stage1_trace(trajectory, config)?;
    let trend = stage2_trend(trajectory, &trace, config)?;
    let maneuver = stage3_maneuver(&trend, config)?;
    let action = stage4_action(trajectory, &maneuver, config)?;
    Ok(LevelLabels { trace, trend, maneuver, action })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::trajectory::VehicleState;
    use proptest::prelude::*;

    pub(crate) fn trajectory(omega: &[f64], a: &[f64], v: &[f64], rate: f64) -> Trajectory {
        let states = omega
            .iter()
            .zip(a)
            .zip(v)
            .map(|((&omega, &a), &v)| VehicleState { x: 0.0, y: 0.0, v, a, phi: 0.0, omega })
            .collect();
        Trajectory { scenario_id: "s".into(), vehicle_id: "v".into(), sample_rate_hz: rate, states }
    }

    fn constant(n: usize, x: f64) -> Vec<f64> {
        vec![x; n]
    }

    /// Segments of constant value, durations in frames.
    fn pieces(parts: &[(usize, f64)]) -> Vec<f64> {
        parts.iter().flat_map(|&(n, x)| std::iter::repeat_n(x, n)).collect()
    }

    fn lateral_runs(l: &[LateralAction]) -> Vec<(String, usize, usize)> {
        runs(l).into_iter().map(|(s, e)| (l[s].to_string(), s, e)).collect()
    }

    fn longitudinal_runs(l: &[LongitudinalAction]) -> Vec<(String, usize, usize)> {
        runs(l).into_iter().map(|(s, e)| (l[s].to_string(), s, e)).collect()
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn still_signals_are_straight_and_maintained() {
        let t = trajectory(&constant(30, 0.0), &constant(30, 0.0), &constant(30, 5.0), 10.0);
        let l = stage1_trace(&t, &cfg()).unwrap();
        assert!(l.lateral.iter().all(|x| *x == LateralAction::Straight));
        assert!(l.longitudinal.iter().all(|x| *x == LongitudinalAction::MAINTAIN));
    }

    #[test]
    fn right_turn_trace_boundaries() {
        let omega = pieces(&[(10, 0.0), (36, -0.2), (34, 0.0)]);
        let t = trajectory(&omega, &constant(80, 0.0), &constant(80, 6.26), 10.0);
        let l = stage1_trace(&t, &cfg()).unwrap();
        assert_eq!(
            lateral_runs(&l.lateral),
            vec![("Straight".into(), 0, 10), ("RightTurn".into(), 10, 46), ("Straight".into(), 46, 80)]
        );
    }

    #[test]
    fn accel_ramp_has_one_transition() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 * 0.03).collect();
        let t = trajectory(&constant(50, 0.0), &a, &constant(50, 5.0), 10.0);
        let l = stage1_trace(&t, &cfg()).unwrap();
        let first = a.iter().position(|&x| x > 0.5).unwrap();
        assert_eq!(
            longitudinal_runs(&l.longitudinal),
            vec![("MaintainSpeed".into(), 0, first), ("Accelerate".into(), first, 50)]
        );
    }

    #[test]
    fn decel_threshold_is_maintain_in_stage_one() {
        let t = trajectory(&[0.0], &[-0.5], &[5.0], 10.0);
        assert_eq!(stage1_trace(&t, &cfg()).unwrap().longitudinal[0], LongitudinalAction::MAINTAIN);
    }

    #[test]
    fn stationary_vehicle_is_stopped_and_straight() {
        let omega: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 0.4 } else { -0.3 }).collect();
        let t = trajectory(&omega, &constant(40, 0.8), &constant(40, 0.0), 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        for level in [Level::Trend, Level::Maneuver, Level::Action] {
            let l = out.get(level);
            assert!(l.lateral.iter().all(|x| *x == LateralAction::Straight));
            assert!(l.longitudinal.iter().all(|x| *x == LongitudinalAction::Stopped));
        }
    }

    #[test]
    fn short_maintain_inside_accelerate_is_smoothed() {
        let a = pieces(&[(20, 1.0), (4, 0.0), (20, 1.0)]);
        let t = trajectory(&constant(44, 0.0), &a, &constant(44, 5.0), 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        assert!(out.trend.longitudinal.iter().all(|x| *x == LongitudinalAction::ACCELERATE));
        assert!(out.trace.longitudinal.contains(&LongitudinalAction::MAINTAIN));
    }

    #[test]
    fn short_left_blip_is_smoothed() {
        let omega = pieces(&[(20, 0.0), (3, 0.2), (20, 0.0)]);
        let t = trajectory(&omega, &constant(43, 0.0), &constant(43, 5.0), 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        assert!(out.trend.lateral.iter().all(|x| *x == LateralAction::Straight));
    }

    #[test]
    fn blip_between_different_flanks_is_split() {
        // Decelerate | 5 accelerating frames | Maintain
        let a = pieces(&[(20, -1.0), (5, 0.9), (20, 0.0)]);
        let t = trajectory(&constant(45, 0.0), &a, &constant(45, 5.0), 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        // neither flank matches, so the blip is split between them
        assert_eq!(
            longitudinal_runs(&out.trend.longitudinal),
            vec![("Decelerate".into(), 0, 22), ("MaintainSpeed".into(), 22, 45)]
        );
    }

    fn trend_of(lateral: &[(usize, LateralAction)], rate: f64) -> FrameLabels {
        let lateral: Vec<LateralAction> = lateral.iter().flat_map(|&(n, l)| std::iter::repeat_n(l, n)).collect();
        let n = lateral.len();
        FrameLabels { level: Level::Trend, sample_rate_hz: rate, lateral, longitudinal: vec![LongitudinalAction::MAINTAIN; n] }
    }

    const LEFT: LateralAction = LateralAction::Turn(Direction::Left, None);
    const RIGHT: LateralAction = LateralAction::Turn(Direction::Right, None);
    const STRAIGHT: LateralAction = LateralAction::Straight;

    #[test]
    fn lane_change_becomes_one_merge() {
        let trend = trend_of(&[(15, LEFT), (20, STRAIGHT), (15, RIGHT)], 10.0);
        let m = stage3_maneuver(&trend, &cfg()).unwrap();
        assert!(m.lateral.iter().all(|x| *x == LateralAction::Merge(Direction::Left, None)));
        assert_eq!(m.longitudinal, trend.longitudinal);
    }

    #[test]
    fn long_gap_keeps_two_turns() {
        let trend = trend_of(&[(15, LEFT), (50, STRAIGHT), (15, RIGHT)], 10.0);
        assert_eq!(stage3_maneuver(&trend, &cfg()).unwrap().lateral, trend.lateral);
    }

    #[test]
    fn same_direction_never_merges() {
        for gap in [0, 5, 20, 39] {
            let trend = trend_of(&[(15, LEFT), (gap, STRAIGHT), (15, LEFT)], 10.0);
            assert_eq!(stage3_maneuver(&trend, &cfg()).unwrap().lateral, trend.lateral);
        }
    }

    #[test]
    fn merged_turns_are_consumed() {
        let trend = trend_of(&[(15, RIGHT), (10, STRAIGHT), (15, LEFT), (10, STRAIGHT), (15, RIGHT)], 10.0);
        let m = stage3_maneuver(&trend, &cfg()).unwrap();
        assert_eq!(
            lateral_runs(&m.lateral),
            vec![("RightMerge".into(), 0, 40), ("Straight".into(), 40, 50), ("RightTurn".into(), 50, 65)]
        );
    }

    #[test]
    fn stop_between_turns_blocks_merge() {
        let mut trend = trend_of(&[(15, LEFT), (20, STRAIGHT), (15, RIGHT)], 10.0);
        trend.longitudinal[20..32].fill(LongitudinalAction::Stopped);
        assert_eq!(stage3_maneuver(&trend, &cfg()).unwrap().lateral, trend.lateral);
    }

    #[test]
    fn gap_limit_is_inclusive() {
        let at = trend_of(&[(15, LEFT), (40, STRAIGHT), (15, RIGHT)], 10.0);
        assert!(stage3_maneuver(&at, &cfg()).unwrap().lateral.iter().all(|x| matches!(x, LateralAction::Merge(..))));
        let over = trend_of(&[(15, LEFT), (41, STRAIGHT), (15, RIGHT)], 10.0);
        assert_eq!(stage3_maneuver(&over, &cfg()).unwrap().lateral, over.lateral);
    }

    #[test]
    fn constant_turn_rate_has_one_intensity() {
        let omega = pieces(&[(10, 0.0), (30, 0.2), (10, 0.0)]);
        let t = trajectory(&omega, &constant(50, 0.0), &constant(50, 5.0), 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        assert_eq!(
            lateral_runs(&out.action.lateral),
            vec![("Straight".into(), 0, 10), ("MediumLeftTurn".into(), 10, 40), ("Straight".into(), 40, 50)]
        );
    }

    #[test]
    fn short_intensity_sliver_collapses_to_run_mean() {
        // 0.4 s of aggressive yaw inside a medium turn
        let omega = pieces(&[(10, 0.0), (13, -0.2), (4, -0.5), (13, -0.2), (10, 0.0)]);
        let t = trajectory(&omega, &constant(50, 0.0), &constant(50, 5.0), 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        let mean_abs = (26.0 * 0.2 + 4.0 * 0.5) / 30.0;
        assert!(mean_abs > 0.15 && mean_abs <= 0.3);
        assert!(out.action.lateral[10..40].iter().all(|x| *x == LateralAction::Turn(Direction::Right, Some(Intensity::Medium))));
    }

    #[test]
    fn speed_profiles_within_moving_runs() {
        let v = pieces(&[(30, 6.26), (30, 9.83)]);
        let a = pieces(&[(15, 0.0), (45, 1.4)]);
        let t = trajectory(&constant(60, 0.0), &a, &v, 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        assert_eq!(
            longitudinal_runs(&out.action.longitudinal),
            vec![
                ("MaintainSlowSpeed".into(), 0, 15),
                ("AccelerateSlowSpeed".into(), 15, 30),
                ("AccelerateMediumSpeed".into(), 30, 60)
            ]
        );
    }

    #[test]
    fn merge_intensity_ignores_gap_frames() {
        let omega = pieces(&[(10, 0.0), (15, 0.2), (20, 0.0), (15, -0.2), (10, 0.0)]);
        let t = trajectory(&omega, &constant(70, 0.0), &constant(70, 5.0), 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        assert_eq!(
            lateral_runs(&out.action.lateral),
            vec![("Straight".into(), 0, 10), ("MediumLeftMerge".into(), 10, 60), ("Straight".into(), 60, 70)]
        );
    }

    #[test]
    fn wrong_inputs_are_rejected() {
        let t = trajectory(&[0.0; 5], &[0.0; 5], &[1.0; 5], 10.0);
        let trace = stage1_trace(&t, &cfg()).unwrap();
        assert!(matches!(stage3_maneuver(&trace, &cfg()), Err(PipelineError::WrongLevel { .. })));
        let empty = trajectory(&[], &[], &[], 10.0);
        assert_eq!(run_pipeline(&empty, &cfg()).unwrap_err(), PipelineError::EmptyTrajectory);
        let fixed = PipelineConfig { sample_rate_hz: Some(20.0), ..cfg() };
        assert!(matches!(run_pipeline(&t, &fixed), Err(PipelineError::RateMismatch { .. })));
        let bad = PipelineConfig { merge_max_gap_s: 0.5, ..cfg() };
        assert!(matches!(run_pipeline(&t, &bad), Err(PipelineError::InvalidConfig(_))));
    }

    /// Piecewise-constant channels with short pieces, so smoothing and
    /// merging both get exercised.
    pub(crate) fn arb_trajectory() -> impl Strategy<Value = Trajectory> {
        let piece = (1usize..25, -0.5f64..0.5, -1.5f64..1.5, 0.0f64..20.0);
        proptest::collection::vec(piece, 1..14).prop_map(|ps| {
            let mut omega = Vec::new();
            let mut a = Vec::new();
            let mut v = Vec::new();
            for (n, w, acc, speed) in ps {
                let speed = if speed < 2.0 { 0.1 } else { speed };
                omega.extend(std::iter::repeat_n(w, n));
                a.extend(std::iter::repeat_n(acc, n));
                v.extend(std::iter::repeat_n(speed, n));
            }
            trajectory(&omega, &a, &v, 10.0)
        })
    }

    fn no_short_interior_runs<L: PartialEq>(labels: &[L], min: usize, pinned: &[bool]) -> bool {
        let rs = runs(labels);
        rs.iter().enumerate().all(|(k, &(s, e))| {
            k == 0 || k + 1 == rs.len() || e - s >= min || pinned[s..e].iter().any(|&p| p)
        })
    }

    proptest! {
        #[test]
        fn stage_invariants(t in arb_trajectory()) {
            let c = cfg();
            let out = run_pipeline(&t, &c).unwrap();
            let n = t.len();
            for level in Level::ALL {
                let l = out.get(level);
                prop_assert_eq!(l.len(), n);
                prop_assert!(l.is_valid());
            }
            // stopped frames never turn
            for level in [Level::Trend, Level::Maneuver, Level::Action] {
                let l = out.get(level);
                for i in 0..n {
                    if l.longitudinal[i] == LongitudinalAction::Stopped {
                        prop_assert_eq!(l.lateral[i], LateralAction::Straight);
                    }
                }
            }
            // smoother fixed point
            let pinned: Vec<bool> = out.trend.longitudinal.iter().map(|l| *l == LongitudinalAction::Stopped).collect();
            prop_assert!(no_short_interior_runs(&out.trend.longitudinal, 10, &vec![false; n]));
            prop_assert!(no_short_interior_runs(&out.trend.lateral, 10, &pinned));
            // action runs meet the minimum duration away from the ends
            prop_assert!(no_short_interior_runs(&out.action.lateral, 10, &vec![false; n]));
            prop_assert!(no_short_interior_runs(&out.action.longitudinal, 10, &vec![false; n]));
            // refinement never changes the coarser label
            prop_assert_eq!(out.action.project(Level::Maneuver).unwrap(), out.maneuver.clone());
            let merged = merge_spans(&out.trend.lateral, &out.trend.longitudinal, 10.0, c.merge_max_gap_s);
            let coarse = out.maneuver.project(Level::Trend).unwrap();
            prop_assert_eq!(&coarse.longitudinal, &out.trend.longitudinal);
            for i in 0..n {
                if !merged.iter().any(|&(s, e, _)| s <= i && i < e) {
                    prop_assert_eq!(coarse.lateral[i], out.trend.lateral[i]);
                }
            }
            // trend matches trace wherever neither the stop rule nor the smoother acted
            let detail = stage2_detail(&t, &out.trace, &c).unwrap();
            let down = out.trend.project(Level::Trace).unwrap();
            for i in 0..n {
                let stopped = t.states[i].v < c.thresholds.velocity[0];
                if !stopped && !detail.longitudinal_altered[i] {
                    prop_assert_eq!(down.longitudinal[i], out.trace.longitudinal[i]);
                }
                if !stopped && !detail.lateral_altered[i] && !pinned[i] {
                    prop_assert_eq!(down.lateral[i], out.trace.lateral[i]);
                }
            }
        }

        #[test]
        fn merges_join_opposite_turns_over_short_gaps(t in arb_trajectory()) {
            let out = run_pipeline(&t, &cfg()).unwrap();
            let trend = &out.trend.lateral;
            let maneuver = &out.maneuver.lateral;
            let mut i = 0;
            while i < maneuver.len() {
                let LateralAction::Merge(d, _) = maneuver[i] else {
                    i += 1;
                    continue;
                };
                // first turn, optional straight gap, opposite turn
                let mut j = i;
                while j < trend.len() && trend[j] == LateralAction::Turn(d, None) {
                    j += 1;
                }
                prop_assert!(j > i);
                let gap_start = j;
                while j < trend.len() && trend[j] == LateralAction::Straight {
                    prop_assert!(out.trend.longitudinal[j] != LongitudinalAction::Stopped);
                    j += 1;
                }
                prop_assert!((j - gap_start) as f64 / 10.0 <= 4.0 + 1e-9);
                let second = j;
                while j < trend.len() && trend[j] == LateralAction::Turn(d.opposite(), None) {
                    j += 1;
                }
                prop_assert!(j > second);
                for k in i..j {
                    prop_assert_eq!(maneuver[k], LateralAction::Merge(d, None));
                }
                i = j;
            }
        }

        #[test]
        fn labeling_is_deterministic(t in arb_trajectory()) {
            prop_assert_eq!(run_pipeline(&t, &cfg()).unwrap(), run_pipeline(&t, &cfg()).unwrap());
        }
    }

    #[test]
    fn smoother_handles_alternating_frames() {
        let omega: Vec<f64> = (0..2000).map(|i| if i % 2 == 0 { 0.2 } else { -0.2 }).collect();
        let a: Vec<f64> = (0..2000).map(|i| [1.0, 0.0, -1.0][i % 3]).collect();
        let t = trajectory(&omega, &a, &constant(2000, 5.0), 10.0);
        let out = run_pipeline(&t, &cfg()).unwrap();
        assert!(no_short_interior_runs(&out.trend.lateral, 10, &vec![false; 2000]));
        assert!(no_short_interior_runs(&out.trend.longitudinal, 10, &vec![false; 2000]));
    }
}
