//! Browser bindings. Each export takes a JSON request string and returns a
//! JSON response string; errors come back as `{"error": "..."}`.

use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use tap_core::actions::{Level, LateralAction, LongitudinalAction};
use tap_core::optimizer::{optimize_channel, Mode, OptimizerConfig};
use tap_core::partition::{build_distributions, Channel, ChannelObjective, KinematicDistributions};
use tap_core::pipeline::{run_pipeline, PipelineConfig};
use tap_core::sdl::{to_sdl, SdlLabel};
use tap_core::synth::{generate_corpus, generate_with, noise_for, BehaviorScript, CorpusSpec, Primitive};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimitiveRequest {
    lateral: String,
    longitudinal: String,
    duration_s: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRequest {
    primitives: Vec<PrimitiveRequest>,
    #[serde(default)]
    noise_fraction: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "ten")]
    sample_rate_hz: f64,
}

fn ten() -> f64 {
    10.0
}

fn label_json(label: &SdlLabel) -> Value {
    serde_json::from_str(&label.to_canonical()).expect("canonical label is JSON")
}

/// Generates the scripted trajectory, runs the pipeline and compares every
/// level with the script's own labels.
pub fn label_script_json(request: &str) -> Result<String, String> {
    let req: LabelRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let primitives = req
        .primitives
        .iter()
        .map(|p| {
            let lat: LateralAction = p.lateral.parse().map_err(|e| format!("{e}"))?;
            let long: LongitudinalAction = p.longitudinal.parse().map_err(|e| format!("{e}"))?;
            Ok(Primitive::new(lat, long, p.duration_s))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let cfg = PipelineConfig::default();
    let mut script = BehaviorScript::new("demo", "ego", primitives);
    script.seed = req.seed;
    if req.noise_fraction > 0.0 {
        script.noise = noise_for(&script, &cfg, req.noise_fraction).map_err(|e| e.to_string())?;
    }
    let g = generate_with(&script, &cfg, req.sample_rate_hz).map_err(|e| e.to_string())?;
    let out = run_pipeline(&g.trajectory, &cfg).map_err(|e| e.to_string())?;
    let t = &g.trajectory;
    let mut levels = serde_json::Map::new();
    for level in Level::ALL {
        let got = to_sdl(out.get(level), "demo", "ego");
        let truth = g.truth_label(level);
        levels.insert(level.as_str().into(), json!({ "labels": label_json(&got), "matches_script": got == truth }));
    }
    Ok(json!({
        "t": (0..t.len()).map(|i| i as f64 / t.sample_rate_hz).collect::<Vec<_>>(),
        "omega": t.omega(),
        "a": t.accel(),
        "v": t.speed(),
        "thresholds": cfg.thresholds,
        "levels": levels,
    })
    .to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizeRequest {
    channel: String,
    #[serde(default = "forty")]
    trajectories: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    descent_only: bool,
    #[serde(default = "epochs")]
    max_epochs: usize,
}

fn forty() -> usize {
    40
}

fn epochs() -> usize {
    200
}

fn synthetic_distributions(trajectories: usize, seed: u64) -> Result<KinematicDistributions, String> {
    let spec = CorpusSpec { n: trajectories, seed, noise_fraction: 0.2, merge_fraction: 0.05, ..Default::default() };
    let synth = generate_corpus(&spec).map_err(|e| e.to_string())?;
    build_distributions(&synth.corpus).map_err(|e| e.to_string())
}

/// Learns one channel's thresholds on a synthetic corpus and returns the
/// per-seed objective traces.
pub fn optimize_trace_json(request: &str) -> Result<String, String> {
    let req: OptimizeRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let channel: Channel = req.channel.parse()?;
    let d = synthetic_distributions(req.trajectories, req.seed)?;
    let mut cfg = OptimizerConfig { max_epochs: req.max_epochs, ..Default::default() };
    if req.descent_only {
        cfg.mode = Mode::Descent;
    }
    let r = optimize_channel(&d, channel, &cfg).map_err(|e| e.to_string())?;
    let runs: Vec<Value> = r
        .runs
        .iter()
        .map(|run| {
            let j: Vec<f64> = std::iter::once(&run.initial).chain(&run.epochs).map(|e| e.objective).collect();
            json!({ "seed": run.initial.thresholds, "objective": j, "final": run.best_thresholds })
        })
        .collect();
    Ok(json!({
        "channel": channel.key(),
        "samples": d.rule_samples(channel),
        "thresholds": r.thresholds(),
        "objective": r.objective(),
        "epsilon": r.epsilon,
        "best": r.best,
        "runs": runs,
    })
    .to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LandscapeRequest {
    #[serde(default = "forty")]
    trajectories: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "steps")]
    steps: usize,
}

fn steps() -> usize {
    60
}

/// Objective over a grid of (deceleration, acceleration) thresholds.
pub fn objective_landscape_json(request: &str) -> Result<String, String> {
    let req: LandscapeRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if !(2..=200).contains(&req.steps) {
        return Err("steps must be between 2 and 200".into());
    }
    let d = synthetic_distributions(req.trajectories, req.seed)?;
    let obj = ChannelObjective::new(&d, Channel::Accel);
    let s = obj.samples();
    let (lo, hi) = (s[0], s[s.len() - 1]);
    let axis: Vec<f64> = (0..req.steps).map(|k| lo + (hi - lo) * k as f64 / (req.steps - 1) as f64).collect();
    // rows are deceleration thresholds, columns acceleration thresholds
    let grid: Vec<Vec<Option<f64>>> =
        axis.iter().map(|&dec| axis.iter().map(|&acc| (acc > dec).then(|| obj.evaluate(&[dec, acc]))).collect()).collect();
    Ok(json!({ "axis": axis, "objective": grid }).to_string())
}

fn respond(result: Result<String, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e }).to_string())
}

#[wasm_bindgen]
pub fn label_script(request: &str) -> String {
    respond(label_script_json(request))
}

#[wasm_bindgen]
pub fn optimize_trace(request: &str) -> String {
    respond(optimize_trace_json(request))
}

#[wasm_bindgen]
pub fn objective_landscape(request: &str) -> String {
    respond(objective_landscape_json(request))
}
