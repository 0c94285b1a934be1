//! Run configuration: defaults, then a config file, then `--set` flags.
//!
//! Every key is flat and dotted; the full list is in the README. Unknown
//! keys are rejected before any work starts.

use std::path::Path;

use tap_core::config::{parse_flat, reject_unknown, take_opt_bool, take_opt_f64, take_opt_string, take_opt_usize, FlatConfig};
use tap_core::optimizer::{CrossEntropyConfig, Mode, OptimizerConfig};
use tap_core::partition::Channel;
use tap_core::pipeline::PipelineConfig;
use tap_core::synth::{CorpusSpec, ScriptShape};
use tap_core::ThresholdSet;

use crate::error::{invalid, read_text, CliError};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub optimizer: OptimizerConfig,
    /// Thresholds here come from the `omega.*`, `a.*` and `v.*` keys.
    pub pipeline: PipelineConfig,
    pub synth: CorpusSpec,
}

/// Reads the file (if any) and applies `KEY=VALUE` overrides on top.
pub fn load_flat(file: Option<&Path>, overrides: &[String]) -> Result<FlatConfig, CliError> {
    let mut map = match file {
        Some(path) => parse_flat(&read_text(path)?).map_err(invalid)?,
        None => FlatConfig::new(),
    };
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
        let (key, value) = (key.trim(), value.trim());
        // bare words are taken as strings
        let parsed = parse_flat(&format!("{key} = {value}"))
            .or_else(|_| parse_flat(&format!("{key} = {}", serde_json::Value::String(value.to_string()))))
            .map_err(invalid)?;
        map.extend(parsed);
    }
    Ok(map)
}

fn thresholds(map: &mut FlatConfig) -> Result<ThresholdSet, CliError> {
    let mut t = ThresholdSet::default();
    for c in Channel::ALL {
        let mut values = t.channel(c).to_vec();
        for (slot, name) in values.iter_mut().zip(c.threshold_names()) {
            if let Some(v) = take_opt_f64(map, &format!("{}.{}", c.key(), name)).map_err(invalid)? {
                *slot = v;
            }
        }
        t = t.with_channel(c, &values).map_err(invalid)?;
    }
    Ok(t)
}

fn optimizer(map: &mut FlatConfig) -> Result<OptimizerConfig, CliError> {
    let d = OptimizerConfig::default();
    let f = |map: &mut FlatConfig, k: &str, default: f64| Ok::<_, CliError>(take_opt_f64(map, k).map_err(invalid)?.unwrap_or(default));
    let u = |map: &mut FlatConfig, k: &str, default: usize| Ok::<_, CliError>(take_opt_usize(map, k).map_err(invalid)?.unwrap_or(default));
    let b = |map: &mut FlatConfig, k: &str, default: bool| Ok::<_, CliError>(take_opt_bool(map, k).map_err(invalid)?.unwrap_or(default));

    let ce_default = CrossEntropyConfig::default();
    let ce = CrossEntropyConfig {
        population: u(map, "cross_entropy.population", ce_default.population)?,
        elite_fraction: f(map, "cross_entropy.elite_fraction", ce_default.elite_fraction)?,
        iterations: u(map, "cross_entropy.iterations", ce_default.iterations)?,
        rng_seed: u(map, "cross_entropy.rng_seed", ce_default.rng_seed as usize)? as u64,
    };
    let mode = match take_opt_string(map, "optimizer.mode").map_err(invalid)?.as_deref() {
        None | Some("hybrid") => Mode::Hybrid(ce),
        Some("descent") => Mode::Descent,
        Some("cross_entropy") => Mode::CrossEntropy(ce),
        Some(other) => return Err(CliError::invalid("InvalidConfig", format!("optimizer.mode `{other}` is not hybrid, descent or cross_entropy"))),
    };
    let config = OptimizerConfig {
        eta: take_opt_f64(map, "optimizer.eta").map_err(invalid)?,
        epsilon: take_opt_f64(map, "optimizer.epsilon").map_err(invalid)?,
        max_epochs: u(map, "optimizer.max_epochs", d.max_epochs)?,
        convergence_tol: f(map, "optimizer.convergence_tol", d.convergence_tol)?,
        patience: u(map, "optimizer.patience", d.patience)?,
        projection_margin: f(map, "optimizer.projection_margin", d.projection_margin)?,
        seeds: Vec::new(),
        quantile_seeds: u(map, "optimizer.quantile_seeds", d.quantile_seeds)?,
        domain_seed: b(map, "optimizer.domain_seed", true)?.then(ThresholdSet::default),
        line_search: b(map, "optimizer.line_search", d.line_search)?,
        max_backtracks: u(map, "optimizer.max_backtracks", d.max_backtracks)?,
        refinements: u(map, "optimizer.refinements", d.refinements)?,
        mode,
    };
    config.validate().map_err(invalid)?;
    Ok(config)
}

fn pipeline(map: &mut FlatConfig, thresholds: ThresholdSet) -> Result<PipelineConfig, CliError> {
    let d = PipelineConfig::default();
    let f = |map: &mut FlatConfig, k: &str, default: f64| Ok::<_, CliError>(take_opt_f64(map, k).map_err(invalid)?.unwrap_or(default));
    let config = PipelineConfig {
        thresholds,
        sample_rate_hz: take_opt_f64(map, "pipeline.sample_rate_hz").map_err(invalid)?,
        min_action_duration_s: f(map, "pipeline.min_action_duration_s", d.min_action_duration_s)?,
        merge_max_gap_s: f(map, "pipeline.merge_max_gap_s", d.merge_max_gap_s)?,
        smoother_max_blip_s: f(map, "pipeline.smoother_max_blip_s", d.smoother_max_blip_s)?,
    };
    config.validate().map_err(invalid)?;
    Ok(config)
}

fn synth(map: &mut FlatConfig, pipeline: &PipelineConfig) -> Result<CorpusSpec, CliError> {
    let d = CorpusSpec::default();
    let s = ScriptShape::default();
    let f = |map: &mut FlatConfig, k: &str, default: f64| Ok::<_, CliError>(take_opt_f64(map, k).map_err(invalid)?.unwrap_or(default));
    let u = |map: &mut FlatConfig, k: &str, default: usize| Ok::<_, CliError>(take_opt_usize(map, k).map_err(invalid)?.unwrap_or(default));
    Ok(CorpusSpec {
        n: u(map, "synth.n", d.n)?,
        seed: u(map, "synth.seed", d.seed as usize)? as u64,
        unique: u(map, "synth.unique", d.unique)?,
        merge_fraction: f(map, "synth.merge_fraction", d.merge_fraction)?,
        noise_fraction: f(map, "synth.noise_fraction", d.noise_fraction)?,
        chatter: take_opt_bool(map, "synth.chatter").map_err(invalid)?.unwrap_or(d.chatter),
        sample_rate_hz: f(map, "synth.sample_rate_hz", d.sample_rate_hz)?,
        shape: ScriptShape {
            min_primitives: u(map, "synth.min_primitives", s.min_primitives)?,
            max_primitives: u(map, "synth.max_primitives", s.max_primitives)?,
            min_duration_s: f(map, "synth.min_duration_s", s.min_duration_s)?,
            max_duration_s: f(map, "synth.max_duration_s", s.max_duration_s)?,
            stop_probability: f(map, "synth.stop_probability", s.stop_probability)?,
            turn_probability: f(map, "synth.turn_probability", s.turn_probability)?,
        },
        pipeline: pipeline.clone(),
    })
}

impl RunConfig {
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut map = load_flat(file, overrides)?;
        let t = thresholds(&mut map)?;
        let optimizer = optimizer(&mut map)?;
        let pipeline = pipeline(&mut map, t)?;
        let synth = synth(&mut map, &pipeline)?;
        reject_unknown(&map).map_err(invalid)?;
        Ok(RunConfig { optimizer, pipeline, synth })
    }
}
