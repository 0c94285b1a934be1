//! Synthetic trajectories with known labels.
//!
//! A script is a list of primitives, each holding one lateral and one
//! longitudinal action for a duration. Channel values sit inside the
//! partition of the intended label; transitions are ramped over 0.2 s but
//! kept inside the destination partition, so the label switches exactly at
//! primitive boundaries. Noise is bounded and uniform.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::actions::{Direction, Intensity, LateralAction, Level, LongitudinalAction, SpeedChange, SpeedProfile, StreamLabel};
use crate::partition::ThresholdSet;
use crate::pipeline::{frames_for, merge_spans, runs, FrameLabels, LevelLabels, PipelineConfig, PipelineError};
use crate::sdl::{to_sdl, SdlLabel};
use crate::search::{LabeledCorpus, RecordId, SearchError, Signature};
use crate::trajectory::{Corpus, CorpusError, Trajectory, VehicleState};

/// Transition length between primitives.
pub const RAMP_S: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("primitive {primitive}: {channel} value {value} is within {margin:.4} of a threshold, noise is {noise}")]
    AmbiguousScript { primitive: usize, channel: &'static str, value: f64, margin: f64, noise: f64 },
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    /// Straight or a turn with intensity.
    pub lateral: LateralAction,
    /// Stopped or a speed change with speed band.
    pub longitudinal: LongitudinalAction,
    pub duration_s: f64,
    /// Signed yaw rate; the partition center when unset.
    pub yaw_rate: Option<f64>,
    pub accel: Option<f64>,
    /// Speed at the start of the primitive.
    pub speed: Option<f64>,
    /// When set, speed changes linearly from `speed` to this value.
    pub speed_end: Option<f64>,
}

impl Primitive {
    pub fn new(lateral: LateralAction, longitudinal: LongitudinalAction, duration_s: f64) -> Self {
        Primitive { lateral, longitudinal, duration_s, yaw_rate: None, accel: None, speed: None, speed_end: None }
    }
}

/// Half-width of the uniform noise on each channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Noise {
    pub omega: f64,
    pub accel: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorScript {
    pub scenario_id: String,
    pub vehicle_id: String,
    pub primitives: Vec<Primitive>,
    pub noise: Noise,
    /// Inject sub-second label blips inside long runs.
    pub chatter: bool,
    pub seed: u64,
}

impl BehaviorScript {
    pub fn new(scenario_id: &str, vehicle_id: &str, primitives: Vec<Primitive>) -> Self {
        BehaviorScript {
            scenario_id: scenario_id.to_string(),
            vehicle_id: vehicle_id.to_string(),
            primitives,
            noise: Noise::default(),
            chatter: false,
            seed: 0,
        }
    }

    pub fn total_duration_s(&self) -> f64 {
        self.primitives.iter().map(|p| p.duration_s).sum()
    }
}

/// Interval of one partition. `floor` marks a physical lower limit that is
/// not a threshold (speed cannot go below zero).
#[derive(Debug, Clone, Copy)]
struct Band {
    lo: f64,
    hi: f64,
    floor: bool,
}

impl Band {
    fn open(lo: f64, hi: f64) -> Band {
        Band { lo, hi, floor: false }
    }

    fn margin(&self, v: f64) -> f64 {
        let below = if self.floor { f64::INFINITY } else { v - self.lo };
        below.min(self.hi - v)
    }

    /// Midpoint, or half a neighbouring width inside an unbounded side.
    fn center(&self, width: f64) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => self.lo + 0.5 * width,
            (false, true) => self.hi - 0.5 * width,
            (false, false) => 0.0,
        }
    }

    fn clamp_inside(&self, v: f64, margin: f64) -> f64 {
        let lo = if self.floor { f64::NEG_INFINITY } else { self.lo + 0.5 * margin };
        v.clamp(lo, self.hi - 0.5 * margin)
    }
}

fn intensity_band(i: Intensity, t: &ThresholdSet) -> Band {
    let [s, g, m] = t.omega;
    match i {
        Intensity::Gradual => Band::open(s, g),
        Intensity::Medium => Band::open(g, m),
        Intensity::Aggressive => Band::open(m, f64::INFINITY),
    }
}

fn lateral_band(l: LateralAction, t: &ThresholdSet) -> Option<Band> {
    match l {
        LateralAction::Straight => Some(Band::open(-t.omega[0], t.omega[0])),
        LateralAction::Turn(d, Some(i)) => {
            let b = intensity_band(i, t);
            Some(match d {
                Direction::Left => b,
                Direction::Right => Band::open(-b.hi, -b.lo),
            })
        }
        _ => None,
    }
}

fn accel_band(l: LongitudinalAction, t: &ThresholdSet) -> Band {
    let [dec, acc] = t.accel;
    match l {
        LongitudinalAction::Moving(SpeedChange::Accelerate, _) => Band::open(acc, f64::INFINITY),
        LongitudinalAction::Moving(SpeedChange::Decelerate, _) => Band::open(f64::NEG_INFINITY, dec),
        _ => Band::open(dec, acc),
    }
}

fn speed_band(l: LongitudinalAction, t: &ThresholdSet) -> Option<Band> {
    let [stop, slow, med] = t.velocity;
    match l {
        LongitudinalAction::Stopped => Some(Band { lo: 0.0, hi: stop, floor: true }),
        LongitudinalAction::Moving(_, Some(SpeedProfile::Slow)) => Some(Band::open(stop, slow)),
        LongitudinalAction::Moving(_, Some(SpeedProfile::Medium)) => Some(Band::open(slow, med)),
        LongitudinalAction::Moving(_, Some(SpeedProfile::Fast)) => Some(Band::open(med, f64::INFINITY)),
        LongitudinalAction::Moving(_, None) => None,
    }
}

/// Resolved per-primitive channel targets with their margins.
struct Targets {
    omega: f64,
    accel: f64,
    speed: (f64, f64),
    bands: (Band, Band, Band),
    margins: (f64, f64, f64),
}

fn targets(p: &Primitive, t: &ThresholdSet) -> Result<Targets, SynthError> {
    let lat_band = lateral_band(p.lateral, t).ok_or_else(|| {
        SynthError::InvalidScript(format!("lateral `{}` must be Straight or a turn with intensity", p.lateral))
    })?;
    let v_band = speed_band(p.longitudinal, t).ok_or_else(|| {
        SynthError::InvalidScript(format!("longitudinal `{}` must be Stopped or carry a speed band", p.longitudinal))
    })?;
    if p.longitudinal == LongitudinalAction::Stopped && p.lateral != LateralAction::Straight {
        return Err(SynthError::InvalidScript("a stopped primitive must be Straight".into()));
    }
    let a_band = accel_band(p.longitudinal, t);
    let omega = p.yaw_rate.unwrap_or_else(|| lat_band.center(t.omega[2] - t.omega[1]));
    let accel = p.accel.unwrap_or_else(|| a_band.center(t.accel[1] - t.accel[0]));
    let v0 = p.speed.unwrap_or_else(|| v_band.center(t.velocity[2] - t.velocity[1]));
    let v1 = p.speed_end.unwrap_or(v0);
    let margins = (lat_band.margin(omega), a_band.margin(accel), v_band.margin(v0).min(v_band.margin(v1)));
    Ok(Targets { omega, accel, speed: (v0, v1), bands: (lat_band, a_band, v_band), margins })
}

/// One injected label blip: `len` frames from `start` in one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blip {
    pub lateral: bool,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub trajectory: Trajectory,
    /// Frame labels the pipeline should produce at every level. The trace
    /// level does not account for chatter blips.
    pub truth: LevelLabels,
    pub blips: Vec<Blip>,
}

impl Generated {
    pub fn truth_label(&self, level: Level) -> SdlLabel {
        to_sdl(self.truth.get(level), &self.trajectory.scenario_id, &self.trajectory.vehicle_id)
    }
}

fn frame_bounds(script: &BehaviorScript, rate: f64) -> Vec<usize> {
    let mut bounds = vec![0];
    let mut t = 0.0;
    for p in &script.primitives {
        t += p.duration_s;
        bounds.push((t * rate).round() as usize);
    }
    bounds
}

/// Checks every channel margin against twice the noise.
fn check_margin(primitive: usize, channel: &'static str, value: f64, margin: f64, noise: f64) -> Result<(), SynthError> {
    if !(margin > 2.0 * noise && margin > 0.0) {
        return Err(SynthError::AmbiguousScript { primitive, channel, value, margin, noise });
    }
    Ok(())
}

pub fn generate(script: &BehaviorScript, thresholds: &ThresholdSet, sample_rate_hz: f64) -> Result<Generated, SynthError> {
    generate_with(script, &PipelineConfig::with_thresholds(*thresholds), sample_rate_hz)
}

pub fn generate_with(script: &BehaviorScript, config: &PipelineConfig, sample_rate_hz: f64) -> Result<Generated, SynthError> {
    config.validate()?;
    let t = &config.thresholds;
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(SynthError::InvalidScript("sample rate must be positive".into()));
    }
    if script.primitives.is_empty() {
        return Err(SynthError::InvalidScript("script has no primitives".into()));
    }
    let noise = script.noise;
    if [noise.omega, noise.accel, noise.speed].iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
        return Err(SynthError::InvalidScript("noise amplitudes must be non-negative".into()));
    }
    let bounds = frame_bounds(script, sample_rate_hz);
    let min_frames = frames_for(config.min_action_duration_s, sample_rate_hz);
    let mut all = Vec::with_capacity(script.primitives.len());
    for (k, p) in script.primitives.iter().enumerate() {
        if !(p.duration_s >= config.min_action_duration_s - 1e-9) || bounds[k + 1] - bounds[k] < min_frames {
            return Err(SynthError::InvalidScript(format!("primitive {k} is shorter than the minimum action duration")));
        }
        let tg = targets(p, t)?;
        check_margin(k, "omega", tg.omega, tg.margins.0, noise.omega)?;
        check_margin(k, "a", tg.accel, tg.margins.1, noise.accel)?;
        check_margin(k, "v", tg.speed.0, tg.margins.2, noise.speed)?;
        all.push(tg);
    }

    // clean channel values
    let n = *bounds.last().expect("bounds");
    let ramp = (RAMP_S * sample_rate_hz).round() as usize;
    let mut omega = Vec::with_capacity(n);
    let mut accel = Vec::with_capacity(n);
    let mut speed = Vec::with_capacity(n);
    let mut action_lat = Vec::with_capacity(n);
    let mut action_long = Vec::with_capacity(n);
    for (k, tg) in all.iter().enumerate() {
        let len = bounds[k + 1] - bounds[k];
        let v_at = |i: usize| tg.speed.0 + (tg.speed.1 - tg.speed.0) * i as f64 / (len.max(2) - 1) as f64;
        let prev = (k > 0).then(|| (all[k - 1].omega, all[k - 1].accel, all[k - 1].speed.1));
        for i in 0..len {
            let mut w = tg.omega;
            let mut a = tg.accel;
            let mut v = v_at(i);
            if let Some((pw, pa, pv)) = prev {
                if i < ramp {
                    let f = (i + 1) as f64 / (ramp + 1) as f64;
                    w = pw + (w - pw) * f;
                    a = pa + (a - pa) * f;
                    v = pv + (v - pv) * f;
                }
            }
            omega.push(tg.bands.0.clamp_inside(w, tg.margins.0));
            accel.push(tg.bands.1.clamp_inside(a, tg.margins.1));
            speed.push(tg.bands.2.clamp_inside(v, tg.margins.2));
            action_lat.push(script.primitives[k].lateral);
            action_long.push(script.primitives[k].longitudinal);
        }
    }

    let truth = truth_levels(&action_lat, &action_long, &omega, config, sample_rate_hz, noise.omega)?;

    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let jitter = |amp: f64, rng: &mut ChaCha8Rng| if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };
    for i in 0..n {
        omega[i] += jitter(noise.omega, &mut rng);
        accel[i] += jitter(noise.accel, &mut rng);
        speed[i] = (speed[i] + jitter(noise.speed, &mut rng)).max(0.0);
    }

    let blips = if script.chatter {
        inject_chatter(&truth, &mut omega, &mut accel, t, sample_rate_hz, config.smoother_max_blip_s, &mut rng)
    } else {
        Vec::new()
    };

    let dt = 1.0 / sample_rate_hz;
    let (mut x, mut y, mut phi) = (0.0f64, 0.0f64, 0.0f64);
    let states = (0..n)
        .map(|i| {
            let s = VehicleState { x, y, v: speed[i], a: accel[i], phi, omega: omega[i] };
            x += speed[i] * phi.cos() * dt;
            y += speed[i] * phi.sin() * dt;
            phi += omega[i] * dt;
            s
        })
        .collect();
    let trajectory = Trajectory {
        scenario_id: script.scenario_id.clone(),
        vehicle_id: script.vehicle_id.clone(),
        sample_rate_hz,
        states,
    };
    Ok(Generated { trajectory, truth, blips })
}

fn truth_levels(
    action_lat: &[LateralAction],
    action_long: &[LongitudinalAction],
    clean_omega: &[f64],
    config: &PipelineConfig,
    rate: f64,
    omega_noise: f64,
) -> Result<LevelLabels, SynthError> {
    let t = &config.thresholds;
    let action = FrameLabels { level: Level::Action, sample_rate_hz: rate, lateral: action_lat.to_vec(), longitudinal: action_long.to_vec() };
    let trend = action.project(Level::Trend).expect("coarser");
    let trace = trend.project(Level::Trace).expect("coarser");
    let mut maneuver = FrameLabels { level: Level::Maneuver, ..trend.clone() };
    let mut action = action;
    for (s, e, d) in merge_spans(&trend.lateral, &trend.longitudinal, rate, config.merge_max_gap_s) {
        maneuver.lateral[s..e].fill(LateralAction::Merge(d, None));
    }
    // adjacent merges in one direction form a single run with one intensity
    for (s, e) in runs(&maneuver.lateral) {
        let LateralAction::Merge(d, _) = maneuver.lateral[s] else { continue };
        let turning: Vec<f64> = clean_omega[s..e].iter().map(|w| w.abs()).filter(|&w| w > t.omega[0]).collect();
        let mean = turning.iter().sum::<f64>() / turning.len() as f64;
        let intensity = Intensity::ALL
            .into_iter()
            .find(|&i| intensity_band(i, t).margin(mean) >= 0.0)
            .expect("turning frames lie above the straight threshold");
        check_margin(s, "merge omega", mean, intensity_band(intensity, t).margin(mean), omega_noise)?;
        action.lateral[s..e].fill(LateralAction::Merge(d, Some(intensity)));
    }
    Ok(LevelLabels { trace, trend, maneuver, action })
}

/// One blip per long enough run: lateral blips inside moving straight
/// stretches (not merge gaps), longitudinal blips on acceleration inside
/// moving runs. Each sits at least one second from the run ends.
fn inject_chatter(
    truth: &LevelLabels,
    omega: &mut [f64],
    accel: &mut [f64],
    t: &ThresholdSet,
    rate: f64,
    max_blip_s: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Blip> {
    let second = frames_for(1.0, rate);
    let max_len = frames_for(max_blip_s.min(0.5), rate).min(frames_for(max_blip_s, rate) - 1).max(1);
    let mut out = Vec::new();
    let place = |s: usize, e: usize, rng: &mut ChaCha8Rng| -> Option<(usize, usize)> {
        let len = rng.random_range(1..=max_len);
        if e - s < 2 * second + len {
            return None;
        }
        Some((rng.random_range(s + second..=e - second - len), len))
    };
    let lat = &truth.maneuver.lateral;
    let stopped = |i: usize| truth.trend.longitudinal[i] == LongitudinalAction::Stopped;
    for (s, e) in runs(lat) {
        if lat[s] != LateralAction::Straight {
            continue;
        }
        if let Some((start, len)) = place(s, e, rng) {
            if (start..start + len).any(stopped) {
                continue;
            }
            omega[start..start + len].fill(0.5 * (t.omega[0] + t.omega[1]));
            out.push(Blip { lateral: true, start, len });
        }
    }
    let long = &truth.trend.longitudinal;
    for (s, e) in runs(long) {
        let LongitudinalAction::Moving(change, _) = long[s] else { continue };
        if let Some((start, len)) = place(s, e, rng) {
            let value = match change {
                SpeedChange::Maintain => t.accel[1] + 0.5 * (t.accel[1] - t.accel[0]),
                _ => 0.5 * (t.accel[0] + t.accel[1]),
            };
            accel[start..start + len].fill(value);
            out.push(Blip { lateral: false, start, len });
        }
    }
    out.sort_by_key(|b| (b.start, b.lateral));
    out
}

/// True when both label sequences agree and every boundary differs by at
/// most `tolerance_s`.
pub fn segments_match(truth: &SdlLabel, got: &SdlLabel, tolerance_s: f64) -> bool {
    fn stream<L: PartialEq>(a: &[crate::sdl::ActionSegment<L>], b: &[crate::sdl::ActionSegment<L>], tol_ms: f64) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.label == y.label
                    && (x.start_ms as f64 - y.start_ms as f64).abs() <= tol_ms
                    && (x.end_ms as f64 - y.end_ms as f64).abs() <= tol_ms
            })
    }
    let tol = tolerance_s * 1000.0 + 1e-6;
    truth.level == got.level && stream(&truth.lateral, &got.lateral, tol) && stream(&truth.longitudinal, &got.longitudinal, tol)
}

/// Per-channel noise at `fraction` of the smallest margin the script leaves.
pub fn noise_for(script: &BehaviorScript, config: &PipelineConfig, fraction: f64) -> Result<Noise, SynthError> {
    let t = &config.thresholds;
    let mut noise = Noise { omega: f64::INFINITY, accel: f64::INFINITY, speed: f64::INFINITY };
    for p in &script.primitives {
        let tg = targets(p, t)?;
        noise.omega = noise.omega.min(tg.margins.0);
        noise.accel = noise.accel.min(tg.margins.1);
        noise.speed = noise.speed.min(tg.margins.2);
    }
    // merged lane changes are classified from their mean yaw rate
    let clean = generate_with(&BehaviorScript { noise: Noise::default(), chatter: false, ..script.clone() }, config, 10.0)?;
    for (s, e) in runs(&clean.truth.action.lateral) {
        if let LateralAction::Merge(_, Some(i)) = clean.truth.action.lateral[s] {
            let turning: Vec<f64> = clean.trajectory.states[s..e].iter().map(|x| x.omega.abs()).filter(|&w| w > t.omega[0]).collect();
            let mean = turning.iter().sum::<f64>() / turning.len() as f64;
            noise.omega = noise.omega.min(intensity_band(i, t).margin(mean));
        }
    }
    Ok(Noise { omega: noise.omega * fraction, accel: noise.accel * fraction, speed: noise.speed * fraction })
}

/// The right-turn example: straight for 1 s, a 3.6 s right turn, then
/// straight; maintaining slow speed, accelerating from 3.0 s and reaching
/// the medium band at 5.6 s.
pub fn right_turn_example_script() -> BehaviorScript {
    let right = LateralAction::Turn(Direction::Right, Some(Intensity::Medium));
    let maintain_slow = LongitudinalAction::Moving(SpeedChange::Maintain, Some(SpeedProfile::Slow));
    let accel_slow = LongitudinalAction::Moving(SpeedChange::Accelerate, Some(SpeedProfile::Slow));
    let accel_medium = LongitudinalAction::Moving(SpeedChange::Accelerate, Some(SpeedProfile::Medium));
    let p = |lat, long, d, yaw: f64, a: f64, v0: f64, v1: f64| Primitive {
        yaw_rate: Some(yaw),
        accel: Some(a),
        speed: Some(v0),
        speed_end: Some(v1),
        ..Primitive::new(lat, long, d)
    };
    // 14 mph = 6.26 m/s, 22 mph = 9.83 m/s
    BehaviorScript::new(
        "example",
        "ego",
        vec![
            p(LateralAction::Straight, maintain_slow, 1.0, 0.0, 0.0, 6.26, 6.26),
            p(right, maintain_slow, 2.0, -0.2, 0.0, 6.26, 6.26),
            p(right, accel_slow, 1.6, -0.2, 1.37, 6.26, 7.2),
            p(LateralAction::Straight, accel_slow, 1.0, 0.0, 1.37, 7.2, 7.9),
            p(LateralAction::Straight, accel_medium, 2.4, 0.0, 1.37, 8.2, 9.83),
        ],
    )
}

/// Parameters for random scripts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptShape {
    pub min_primitives: usize,
    pub max_primitives: usize,
    /// Primitive durations are drawn in tenths of a second from this range.
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub stop_probability: f64,
    pub turn_probability: f64,
}

impl Default for ScriptShape {
    fn default() -> Self {
        ScriptShape {
            min_primitives: 2,
            max_primitives: 6,
            min_duration_s: 1.0,
            max_duration_s: 4.0,
            stop_probability: 0.1,
            turn_probability: 0.35,
        }
    }
}

fn pick<T: Copy>(rng: &mut impl Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn random_duration(rng: &mut impl Rng, shape: &ScriptShape) -> f64 {
    let lo = (shape.min_duration_s * 10.0).ceil() as u32;
    let hi = ((shape.max_duration_s * 10.0).floor() as u32).max(lo);
    rng.random_range(lo..=hi) as f64 / 10.0
}

fn random_moving(rng: &mut impl Rng) -> LongitudinalAction {
    let c = pick(rng, &[SpeedChange::Accelerate, SpeedChange::Maintain, SpeedChange::Decelerate]);
    LongitudinalAction::Moving(c, Some(pick(rng, &SpeedProfile::ALL)))
}

fn random_primitive(rng: &mut impl Rng, shape: &ScriptShape) -> Primitive {
    let d = random_duration(rng, shape);
    if rng.random_bool(shape.stop_probability) {
        return Primitive::new(LateralAction::Straight, LongitudinalAction::Stopped, d);
    }
    let lateral = if rng.random_bool(shape.turn_probability) {
        LateralAction::Turn(pick(rng, &[Direction::Left, Direction::Right]), Some(pick(rng, &Intensity::ALL)))
    } else {
        LateralAction::Straight
    };
    Primitive::new(lateral, random_moving(rng), d)
}

/// A lane change: turn, short straight gap, turn back at the same intensity.
fn lane_change(rng: &mut impl Rng, shape: &ScriptShape, merge_max_gap_s: f64) -> Vec<Primitive> {
    let d = pick(rng, &[Direction::Left, Direction::Right]);
    let i = pick(rng, &Intensity::ALL);
    let gap_shape = ScriptShape { max_duration_s: merge_max_gap_s.min(shape.max_duration_s).max(shape.min_duration_s), ..shape.clone() };
    vec![
        Primitive::new(LateralAction::Turn(d, Some(i)), random_moving(rng), random_duration(rng, shape)),
        Primitive::new(LateralAction::Straight, random_moving(rng), random_duration(rng, &gap_shape)),
        Primitive::new(LateralAction::Turn(d.opposite(), Some(i)), random_moving(rng), random_duration(rng, shape)),
    ]
}

fn merge_count(g: &Generated) -> usize {
    runs(&g.truth.maneuver.lateral).iter().filter(|(s, _)| matches!(g.truth.maneuver.lateral[*s], LateralAction::Merge(..))).count()
}

/// Draws a random script with exactly `merges` lane changes (0 or 1).
pub fn random_script(
    rng: &mut impl Rng,
    shape: &ScriptShape,
    config: &PipelineConfig,
    merges: usize,
    ids: (&str, &str),
) -> Result<BehaviorScript, SynthError> {
    if shape.min_primitives == 0 || shape.max_primitives < shape.min_primitives || shape.min_duration_s < config.min_action_duration_s {
        return Err(SynthError::InvalidSpec("script shape is empty or below the minimum action duration".into()));
    }
    loop {
        let count = rng.random_range(shape.min_primitives..=shape.max_primitives);
        let mut primitives: Vec<Primitive> = (0..count).map(|_| random_primitive(rng, shape)).collect();
        if merges > 0 {
            let at = rng.random_range(0..=primitives.len());
            let lc = lane_change(rng, shape, config.merge_max_gap_s);
            primitives.splice(at..at, lc);
        }
        let script = BehaviorScript::new(ids.0, ids.1, primitives);
        let g = match generate_with(&script, config, 10.0) {
            Err(SynthError::AmbiguousScript { .. }) => continue,
            other => other?,
        };
        if merge_count(&g) == merges {
            return Ok(script);
        }
    }
}

/// Corpus mix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n: usize,
    pub seed: u64,
    /// Trajectories whose action-level signature appears once.
    pub unique: usize,
    /// Fraction of trajectories containing a lane change.
    pub merge_fraction: f64,
    /// Noise half-width as a fraction of each script's smallest margin.
    pub noise_fraction: f64,
    pub chatter: bool,
    pub sample_rate_hz: f64,
    pub shape: ScriptShape,
    pub pipeline: PipelineConfig,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n: 100,
            seed: 0,
            unique: 0,
            merge_fraction: 0.008,
            noise_fraction: 0.0,
            chatter: false,
            sample_rate_hz: 10.0,
            shape: ScriptShape::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub scripts: Vec<BehaviorScript>,
    pub generated: Vec<Generated>,
    pub corpus: Corpus,
    /// Ids generated from unique scripts.
    pub unique: Vec<RecordId>,
}

impl SynthCorpus {
    pub fn truth(&self, level: Level) -> Result<LabeledCorpus, SynthError> {
        Ok(LabeledCorpus::from_labels(level, self.generated.iter().map(|g| g.truth_label(level)))?)
    }
}

fn action_signature(script: &BehaviorScript, config: &PipelineConfig) -> Result<Signature, SynthError> {
    let g = generate_with(&BehaviorScript { noise: Noise::default(), chatter: false, ..script.clone() }, config, 10.0)?;
    Ok(Signature::of(&g.truth_label(Level::Action)))
}

/// Same labels as `template` with fresh durations, falling back to the
/// template's own durations when the labels would change.
fn reuse(template: &BehaviorScript, rng: &mut impl Rng, shape: &ScriptShape, config: &PipelineConfig) -> Result<BehaviorScript, SynthError> {
    let want = action_signature(template, config)?;
    for _ in 0..8 {
        let mut s = template.clone();
        for p in &mut s.primitives {
            p.duration_s = random_duration(rng, shape);
        }
        if action_signature(&s, config)? == want {
            return Ok(s);
        }
    }
    Ok(template.clone())
}

/// Deterministic list of scripts for a corpus: shared templates each used
/// at least twice, lane-change templates, and unique scripts.
pub fn plan_corpus(spec: &CorpusSpec) -> Result<Vec<BehaviorScript>, SynthError> {
    spec.pipeline.validate()?;
    if spec.unique > spec.n {
        return Err(SynthError::InvalidSpec("more unique scripts than trajectories".into()));
    }
    if !(0.0..=1.0).contains(&spec.merge_fraction) || !(spec.noise_fraction >= 0.0 && spec.noise_fraction < 0.5) {
        return Err(SynthError::InvalidSpec("merge_fraction must be in [0, 1] and noise_fraction in [0, 0.5)".into()));
    }
    let shared = spec.n - spec.unique;
    if shared == 1 {
        return Err(SynthError::InvalidSpec("exactly one non-unique trajectory cannot share its labels".into()));
    }
    let mut merges = ((spec.n as f64 * spec.merge_fraction).round() as usize).min(shared);
    if merges == 1 {
        merges = 2.min(shared);
    }
    if shared - merges == 1 {
        merges += 1;
    }
    let plain = shared - merges;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cfg = &spec.pipeline;
    let mut planned: Vec<(BehaviorScript, bool)> = Vec::with_capacity(spec.n);
    let mut seen = HashSet::new();
    for (group, with_merge) in [(plain, 0), (merges, 1)] {
        if group == 0 {
            continue;
        }
        let templates: Vec<BehaviorScript> = (0..(group / 3).max(1))
            .map(|_| random_script(&mut rng, &spec.shape, cfg, with_merge, ("", "")))
            .collect::<Result<_, _>>()?;
        for t in &templates {
            seen.insert(action_signature(t, cfg)?);
        }
        for k in 0..group {
            planned.push((reuse(&templates[k % templates.len()], &mut rng, &spec.shape, cfg)?, false));
        }
    }
    for _ in 0..spec.unique {
        loop {
            let s = random_script(&mut rng, &spec.shape, cfg, 0, ("", ""))?;
            if seen.insert(action_signature(&s, cfg)?) {
                planned.push((s, true));
                break;
            }
        }
    }
    planned.shuffle(&mut rng);

    planned
        .into_iter()
        .enumerate()
        .map(|(k, (mut s, _))| {
            s.scenario_id = format!("scene-{:05}", k / 3);
            s.vehicle_id = format!("{}", k % 3);
            let mut stream = ChaCha8Rng::seed_from_u64(spec.seed);
            stream.set_stream(k as u64 + 1);
            s.seed = stream.next_u64();
            s.chatter = spec.chatter;
            if spec.noise_fraction > 0.0 {
                s.noise = noise_for(&s, cfg, spec.noise_fraction)?;
            }
            Ok(s)
        })
        .collect()
}

fn unique_ids(scripts: &[BehaviorScript], generated: &[Generated]) -> Vec<RecordId> {
    let mut counts = std::collections::HashMap::new();
    for g in generated {
        *counts.entry(Signature::of(&g.truth_label(Level::Action))).or_insert(0usize) += 1;
    }
    let mut out: Vec<RecordId> = scripts
        .iter()
        .zip(generated)
        .filter(|(_, g)| counts[&Signature::of(&g.truth_label(Level::Action))] == 1)
        .map(|(s, _)| (s.scenario_id.clone(), s.vehicle_id.clone()))
        .collect();
    out.sort();
    out
}

/// Generates every planned script. `generate_corpus` is `plan_corpus`
/// followed by this; callers may generate the scripts in parallel instead.
pub fn assemble(spec: &CorpusSpec, scripts: Vec<BehaviorScript>, generated: Vec<Generated>) -> Result<SynthCorpus, SynthError> {
    let corpus = Corpus::new(generated.iter().map(|g| g.trajectory.clone()).collect(), format!("synth:{}", spec.seed))?;
    let unique = unique_ids(&scripts, &generated);
    Ok(SynthCorpus { scripts, generated, corpus, unique })
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<SynthCorpus, SynthError> {
    let scripts = plan_corpus(spec)?;
    let generated = scripts.iter().map(|s| generate_with(s, &spec.pipeline, spec.sample_rate_hz)).collect::<Result<Vec<_>, _>>()?;
    assemble(spec, scripts, generated)
}

/// Legal Action-level primitive labels, for exhaustive tests.
pub fn primitive_labels() -> Vec<(LateralAction, LongitudinalAction)> {
    let mut out = vec![(LateralAction::Straight, LongitudinalAction::Stopped)];
    for lat in LateralAction::legal_set(Level::Action) {
        if matches!(lat, LateralAction::Merge(..)) {
            continue;
        }
        for long in LongitudinalAction::legal_set(Level::Action) {
            if long != LongitudinalAction::Stopped {
                out.push((lat, long));
            }
        }
    }
    out
}
