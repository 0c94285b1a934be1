//! Threshold learning by finite-difference descent on the partition
//! objective.
//!
//! The objective is piecewise constant in the thresholds, so the gradient is
//! estimated with coordinate-wise central differences over a step `epsilon`
//! wide enough to cross sample boundaries. After every step the thresholds
//! are projected back onto the ordered feasible set. Each channel is
//! optimized on its own from several seeds and the lowest objective wins.
//!
//! Descent alone stalls on the many plateaus of the objective, so the
//! default mode first runs a cross-entropy search from each seed and then
//! polishes its best point by descent. Plain descent remains available.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::{validate_channel, Channel, ChannelObjective, KinematicDistributions, ThresholdError, ThresholdSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("{0} distribution is empty")]
    EmptyDistribution(Channel),
    #[error("invalid seed: {0}")]
    InvalidSeed(ThresholdError),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}

/// Population-based alternative to finite-difference descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropyConfig {
    pub population: usize,
    pub elite_fraction: f64,
    /// Iteration cap for the population phase of [`Mode::Hybrid`].
    pub iterations: usize,
    pub rng_seed: u64,
}

impl Default for CrossEntropyConfig {
    fn default() -> Self {
        CrossEntropyConfig { population: 128, elite_fraction: 0.2, iterations: 100, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    /// Finite-difference descent only.
    Descent,
    /// Population search only.
    CrossEntropy(CrossEntropyConfig),
    /// Population search from the seed, then finite-difference descent from
    /// the best point found. Both phases share `max_epochs`.
    Hybrid(CrossEntropyConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Learning rate. `None` scales it per run so the first step is about
    /// one `epsilon` wide: `epsilon^2 / J(seed)`.
    pub eta: Option<f64>,
    /// Finite-difference step. `None` uses half the channel's sample
    /// standard deviation.
    pub epsilon: Option<f64>,
    pub max_epochs: usize,
    /// Stop once |ΔJ| stays at or below this for `patience` epochs.
    pub convergence_tol: f64,
    pub patience: usize,
    /// Minimal gap kept between adjacent thresholds.
    pub projection_margin: f64,
    /// Explicit seeds. When empty, seeds come from the data distribution.
    pub seeds: Vec<ThresholdSet>,
    /// Number of quantile seeds drawn from the data when `seeds` is empty.
    pub quantile_seeds: usize,
    /// Domain-knowledge seed appended to the quantile seeds.
    pub domain_seed: Option<ThresholdSet>,
    /// Halve the step until the objective does not increase.
    pub line_search: bool,
    pub max_backtracks: usize,
    /// How many times `epsilon` may be halved once no step is accepted.
    pub refinements: usize,
    pub mode: Mode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eta: None,
            epsilon: None,
            max_epochs: 500,
            convergence_tol: 1e-8,
            patience: 3,
            projection_margin: 1e-4,
            seeds: Vec::new(),
            quantile_seeds: 4,
            domain_seed: Some(ThresholdSet::default()),
            line_search: true,
            max_backtracks: 12,
            refinements: 6,
            mode: Mode::Hybrid(CrossEntropyConfig::default()),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.to_string()));
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad("eta must be positive");
            }
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad("epsilon must be positive");
            }
        }
        if !(self.projection_margin > 0.0) {
            return bad("projection_margin must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be non-negative");
        }
        if self.seeds.is_empty() && self.quantile_seeds == 0 && self.domain_seed.is_none() {
            return bad("no seeds configured");
        }
        if let Mode::CrossEntropy(ce) | Mode::Hybrid(ce) = &self.mode {
            if ce.population < 2 || !(ce.elite_fraction > 0.0 && ce.elite_fraction <= 1.0) {
                return bad("cross-entropy needs population >= 2 and elite_fraction in (0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub thresholds: Vec<f64>,
    pub objective: f64,
}

/// One optimization run from one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub channel: Channel,
    /// Seed after projection, as epoch 0.
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    pub best_thresholds: Vec<f64>,
    pub best_objective: f64,
    pub converged: bool,
}

impl OptimizationTrace {
    pub fn epochs_used(&self) -> usize {
        self.epochs.len()
    }

    /// Objective values from epoch 0 onward.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial.objective).chain(self.epochs.iter().map(|e| e.objective)).collect()
    }
}

/// Multi-seed result for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelOptimization {
    pub channel: Channel,
    pub epsilon: f64,
    pub runs: Vec<OptimizationTrace>,
    /// Index of the run with the lowest final objective (first on ties).
    pub best: usize,
}

impl ChannelOptimization {
    pub fn best_run(&self) -> &OptimizationTrace {
        &self.runs[self.best]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.best_run().best_thresholds
    }

    pub fn objective(&self) -> f64 {
        self.best_run().best_objective
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllChannels {
    pub omega: ChannelOptimization,
    pub accel: ChannelOptimization,
    pub velocity: ChannelOptimization,
}

impl AllChannels {
    pub fn get(&self, channel: Channel) -> &ChannelOptimization {
        match channel {
            Channel::Omega => &self.omega,
            Channel::Accel => &self.accel,
            Channel::Velocity => &self.velocity,
        }
    }

    pub fn thresholds(&self) -> ThresholdSet {
        let mut t = ThresholdSet::default();
        t.omega.copy_from_slice(self.omega.thresholds());
        t.accel.copy_from_slice(self.accel.thresholds());
        t.velocity.copy_from_slice(self.velocity.thresholds());
        t
    }
}

/// Sorts and separates thresholds so adjacent values differ by at least
/// `margin`; yaw-rate and speed thresholds are kept at or above `margin`.
pub fn project(values: &[f64], channel: Channel, margin: f64) -> Vec<f64> {
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    if let (Some(lo), Some(first)) = (channel.lower_bound(), out.first_mut()) {
        *first = first.max(lo + margin);
    }
    for i in 1..out.len() {
        out[i] = out[i].max(out[i - 1] + margin);
    }
    out
}

/// Feasible interval for coordinate `i` with the others held fixed.
fn coordinate_bounds(x: &[f64], i: usize, channel: Channel, margin: f64) -> (f64, f64) {
    let lo = if i > 0 {
        x[i - 1] + margin
    } else {
        channel.lower_bound().map_or(f64::NEG_INFINITY, |b| b + margin)
    };
    let hi = if i + 1 < x.len() { x[i + 1] - margin } else { f64::INFINITY };
    (lo, hi)
}

/// The two probe points used for coordinate `i`: `x_i + h_plus` and
/// `x_i - h_minus`, each clamped so ordering is preserved.
pub fn probe_steps(x: &[f64], i: usize, channel: Channel, epsilon: f64, margin: f64) -> (f64, f64) {
    let (lo, hi) = coordinate_bounds(x, i, channel, margin);
    let h_plus = epsilon.min(hi - x[i]).max(0.0);
    let h_minus = epsilon.min(x[i] - lo).max(0.0);
    (h_plus, h_minus)
}

/// Coordinate-wise central difference of the objective. Probe steps are
/// clamped to the feasible set; the divisor is the clamped probe width.
pub fn fd_gradient_with(obj: &ChannelObjective, x: &[f64], epsilon: f64, margin: f64) -> Vec<f64> {
    let channel = obj.channel();
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let (hp, hm) = probe_steps(x, i, channel, epsilon, margin);
            if hp + hm <= 0.0 {
                return 0.0;
            }
            probe[i] = x[i] + hp;
            let up = obj.evaluate(&probe);
            probe[i] = x[i] - hm;
            let down = obj.evaluate(&probe);
            probe[i] = x[i];
            (up - down) / (hp + hm)
        })
        .collect()
}

/// Gradient estimate for one channel of `thresholds`, using the default
/// projection margin for clamping.
pub fn fd_gradient(distributions: &KinematicDistributions, channel: Channel, thresholds: &ThresholdSet, epsilon: f64) -> Vec<f64> {
    let obj = ChannelObjective::new(distributions, channel);
    fd_gradient_with(&obj, thresholds.channel(channel), epsilon, OptimizerConfig::default().projection_margin)
}

fn std_dev(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n;
    (samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Finite-difference step for a channel: configured, or half the sample
/// standard deviation (never below the projection margin).
pub fn default_epsilon(obj: &ChannelObjective, config: &OptimizerConfig) -> f64 {
    config.epsilon.unwrap_or_else(|| (0.5 * std_dev(obj.samples())).max(config.projection_margin))
}

/// Linear-interpolated quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn quantile_pattern(count: usize, k: usize) -> Vec<f64> {
    const THREE: [[f64; 3]; 6] = [
        [0.25, 0.50, 0.75],
        [0.15, 0.45, 0.80],
        [0.35, 0.60, 0.90],
        [0.10, 0.35, 0.65],
        [0.20, 0.55, 0.85],
        [0.05, 0.40, 0.70],
    ];
    const TWO: [[f64; 2]; 6] = [[0.20, 0.80], [0.10, 0.70], [0.30, 0.90], [0.15, 0.60], [0.40, 0.85], [0.05, 0.50]];
    match count {
        3 if k < THREE.len() => THREE[k].to_vec(),
        2 if k < TWO.len() => TWO[k].to_vec(),
        _ => {
            // low-discrepancy offsets once the fixed table runs out
            let phi = 0.618_033_988_749_895;
            let mut qs: Vec<f64> =
                (0..count).map(|j| ((k as f64 * phi + j as f64 / count as f64).fract() * 0.9) + 0.05).collect();
            qs.sort_by(f64::total_cmp);
            qs
        }
    }
}

/// Seeds placed at quantiles of the channel's rule samples (|omega| for
/// yaw rate). The first seed uses quartiles for three-threshold channels and
/// the 20/80 % quantiles for acceleration.
pub fn seed_from_distribution(
    distributions: &KinematicDistributions,
    channel: Channel,
    count: usize,
    margin: f64,
) -> Result<Vec<Vec<f64>>, OptimizerError> {
    let obj = ChannelObjective::new(distributions, channel);
    seeds_for(&obj, count, margin)
}

fn seeds_for(obj: &ChannelObjective, count: usize, margin: f64) -> Result<Vec<Vec<f64>>, OptimizerError> {
    if obj.is_empty() {
        return Err(OptimizerError::EmptyDistribution(obj.channel()));
    }
    let m = obj.channel().threshold_count();
    Ok((0..count)
        .map(|k| {
            let qs = quantile_pattern(m, k);
            let raw: Vec<f64> = qs.iter().map(|&q| quantile(obj.samples(), q)).collect();
            project(&raw, obj.channel(), margin)
        })
        .collect())
}

fn initial_seeds(obj: &ChannelObjective, config: &OptimizerConfig) -> Result<Vec<Vec<f64>>, OptimizerError> {
    let channel = obj.channel();
    if !config.seeds.is_empty() {
        return Ok(config.seeds.iter().map(|s| s.channel(channel).to_vec()).collect());
    }
    let mut seeds = if config.quantile_seeds > 0 {
        seeds_for(obj, config.quantile_seeds, config.projection_margin)?
    } else {
        Vec::new()
    };
    if let Some(domain) = &config.domain_seed {
        seeds.push(domain.channel(channel).to_vec());
    }
    Ok(seeds)
}

fn record(epoch: usize, x: &[f64], j: f64) -> EpochRecord {
    EpochRecord { epoch, thresholds: x.to_vec(), objective: j }
}

fn finish(channel: Channel, initial: EpochRecord, epochs: Vec<EpochRecord>, converged: bool) -> OptimizationTrace {
    let best = std::iter::once(&initial)
        .chain(epochs.iter())
        .fold(None::<&EpochRecord>, |acc, e| match acc {
            Some(b) if b.objective <= e.objective => Some(b),
            _ => Some(e),
        })
        .expect("initial record present");
    OptimizationTrace {
        channel,
        best_thresholds: best.thresholds.clone(),
        best_objective: best.objective,
        initial,
        epochs,
        converged,
    }
}

/// Finite-difference descent from one seed: `x <- project(x - eta * g)`.
///
/// When a non-zero gradient yields no acceptable step, the lowest probe
/// point is taken if it improves the objective; otherwise `epsilon` is
/// halved, down to `epsilon / 2^refinements`.
pub fn descend(obj: &ChannelObjective, seed: &[f64], epsilon: f64, config: &OptimizerConfig) -> Result<OptimizationTrace, OptimizerError> {
    descend_for(obj, seed, epsilon, config, config.max_epochs)
}

fn descend_for(
    obj: &ChannelObjective,
    seed: &[f64],
    epsilon: f64,
    config: &OptimizerConfig,
    budget: usize,
) -> Result<OptimizationTrace, OptimizerError> {
    let channel = obj.channel();
    validate_channel(channel, seed).map_err(OptimizerError::InvalidSeed)?;
    let margin = config.projection_margin;
    let mut x = project(seed, channel, margin);
    let mut j = obj.evaluate(&x);
    let initial = record(0, &x, j);
    let eta = config.eta.unwrap_or(if j > 0.0 { epsilon * epsilon / j } else { 1.0 });
    let min_epsilon = epsilon / f64::powi(2.0, config.refinements as i32);
    let mut eps = epsilon;

    let mut epochs = Vec::new();
    let mut quiet = 0;
    let mut converged = false;
    for epoch in 1..=budget {
        let g = fd_gradient_with(obj, &x, eps, margin);
        if g.iter().all(|&gi| gi == 0.0) {
            // plateau: the update is the identity from here on
            epochs.push(record(epoch, &x, j));
            converged = true;
            break;
        }
        let mut step = eta * (eps / epsilon);
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let candidate: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let candidate = project(&candidate, channel, margin);
            let jc = obj.evaluate(&candidate);
            if !config.line_search || jc <= j {
                accepted = Some((candidate, jc));
                break;
            }
            step *= 0.5;
        }
        if accepted.is_none() {
            accepted = best_probe(obj, &x, eps, margin).filter(|(_, jp)| *jp < j);
        }
        let Some((next, jn)) = accepted else {
            epochs.push(record(epoch, &x, j));
            if eps * 0.5 >= min_epsilon {
                eps *= 0.5;
                continue;
            }
            converged = true;
            break;
        };
        let delta = (jn - j).abs();
        let moved = next != x;
        x = next;
        j = jn;
        epochs.push(record(epoch, &x, j));
        if !moved {
            converged = true;
            break;
        }
        quiet = if delta <= config.convergence_tol { quiet + 1 } else { 0 };
        if quiet >= config.patience {
            converged = true;
            break;
        }
    }
    Ok(finish(channel, initial, epochs, converged))
}

/// Lowest of the 2m clamped probe points around `x`.
fn best_probe(obj: &ChannelObjective, x: &[f64], epsilon: f64, margin: f64) -> Option<(Vec<f64>, f64)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for i in 0..x.len() {
        let (hp, hm) = probe_steps(x, i, obj.channel(), epsilon, margin);
        for h in [hp, -hm] {
            if h == 0.0 {
                continue;
            }
            let mut p = x.to_vec();
            p[i] += h;
            let jp = obj.evaluate(&p);
            if best.as_ref().is_none_or(|(_, b)| jp < *b) {
                best = Some((p, jp));
            }
        }
    }
    best
}

/// Cross-entropy search from one seed: sample a Gaussian around the current
/// mean, refit mean and spread on the elite fraction.
pub fn cross_entropy(
    obj: &ChannelObjective,
    seed: &[f64],
    epsilon: f64,
    config: &OptimizerConfig,
    ce: &CrossEntropyConfig,
    stream: u64,
) -> Result<OptimizationTrace, OptimizerError> {
    cross_entropy_for(obj, seed, epsilon, config, ce, stream, config.max_epochs)
}

fn cross_entropy_for(
    obj: &ChannelObjective,
    seed: &[f64],
    epsilon: f64,
    config: &OptimizerConfig,
    ce: &CrossEntropyConfig,
    stream: u64,
    budget: usize,
) -> Result<OptimizationTrace, OptimizerError> {
    let channel = obj.channel();
    validate_channel(channel, seed).map_err(OptimizerError::InvalidSeed)?;
    let margin = config.projection_margin;
    let mut rng = ChaCha8Rng::seed_from_u64(ce.rng_seed);
    rng.set_stream(stream);

    let mut mean = project(seed, channel, margin);
    let mut sigma = vec![epsilon; mean.len()];
    let mut best_x = mean.clone();
    let mut best_j = obj.evaluate(&mean);
    let initial = record(0, &best_x, best_j);
    let elites = ((ce.population as f64 * ce.elite_fraction).ceil() as usize).clamp(1, ce.population);

    let mut epochs = Vec::new();
    let mut quiet = 0;
    let mut converged = false;
    for epoch in 1..=budget {
        let mut pop: Vec<(f64, Vec<f64>)> = (0..ce.population)
            .map(|_| {
                let raw: Vec<f64> = mean
                    .iter()
                    .zip(&sigma)
                    .map(|(&m, &s)| if s > 0.0 { Normal::new(m, s).expect("finite sigma").sample(&mut rng) } else { m })
                    .collect();
                let x = project(&raw, channel, margin);
                (obj.evaluate(&x), x)
            })
            .collect();
        pop.sort_by(|a, b| a.0.total_cmp(&b.0));
        let top = &pop[..elites];
        let dims = mean.len();
        mean = (0..dims).map(|d| top.iter().map(|(_, x)| x[d]).sum::<f64>() / elites as f64).collect();
        sigma = (0..dims)
            .map(|d| (top.iter().map(|(_, x)| (x[d] - mean[d]).powi(2)).sum::<f64>() / elites as f64).sqrt())
            .collect();
        let previous = best_j;
        if top[0].0 < best_j {
            best_j = top[0].0;
            best_x = top[0].1.clone();
        }
        epochs.push(record(epoch, &best_x, best_j));
        quiet = if (previous - best_j).abs() <= config.convergence_tol { quiet + 1 } else { 0 };
        if quiet >= config.patience && sigma.iter().all(|&s| s <= margin) {
            converged = true;
            break;
        }
    }
    Ok(finish(channel, initial, epochs, converged))
}

/// Population phase followed by descent from its best point; the two traces
/// are joined with continuous epoch numbers.
fn hybrid(
    obj: &ChannelObjective,
    seed: &[f64],
    epsilon: f64,
    config: &OptimizerConfig,
    ce: &CrossEntropyConfig,
    stream: u64,
) -> Result<OptimizationTrace, OptimizerError> {
    let coarse_budget = ce.iterations.min(config.max_epochs.saturating_sub(1)).max(1);
    let coarse = cross_entropy_for(obj, seed, epsilon, config, ce, stream, coarse_budget)?;
    let fine_budget = config.max_epochs.saturating_sub(coarse.epochs.len());
    if fine_budget == 0 {
        return Ok(coarse);
    }
    let fine = descend_for(obj, &coarse.best_thresholds, epsilon, config, fine_budget)?;
    let offset = coarse.epochs.len();
    let mut epochs = coarse.epochs;
    epochs.extend(fine.epochs.into_iter().map(|mut e| {
        e.epoch += offset;
        e
    }));
    Ok(finish(obj.channel(), coarse.initial, epochs, fine.converged))
}

fn run_seeds(obj: &ChannelObjective, seeds: &[Vec<f64>], config: &OptimizerConfig) -> Result<ChannelOptimization, OptimizerError> {
    if obj.is_empty() {
        return Err(OptimizerError::EmptyDistribution(obj.channel()));
    }
    let epsilon = default_epsilon(obj, config);
    let runs = seeds
        .iter()
        .enumerate()
        .map(|(k, seed)| match &config.mode {
            Mode::Descent => descend(obj, seed, epsilon, config),
            Mode::CrossEntropy(ce) => cross_entropy(obj, seed, epsilon, config, ce, k as u64),
            Mode::Hybrid(ce) => hybrid(obj, seed, epsilon, config, ce, k as u64),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.best_objective < runs[b].best_objective { i } else { b });
    Ok(ChannelOptimization { channel: obj.channel(), epsilon, runs, best })
}

/// Optimizes one channel from every configured seed.
pub fn optimize_channel(
    distributions: &KinematicDistributions,
    channel: Channel,
    config: &OptimizerConfig,
) -> Result<ChannelOptimization, OptimizerError> {
    config.validate()?;
    let obj = ChannelObjective::new(distributions, channel);
    if obj.is_empty() {
        return Err(OptimizerError::EmptyDistribution(channel));
    }
    let seeds = initial_seeds(&obj, config)?;
    run_seeds(&obj, &seeds, config)
}

/// Same as [`optimize_channel`] with explicit per-channel seeds.
pub fn optimize_channel_from(
    distributions: &KinematicDistributions,
    channel: Channel,
    seeds: &[Vec<f64>],
    config: &OptimizerConfig,
) -> Result<ChannelOptimization, OptimizerError> {
    config.validate()?;
    run_seeds(&ChannelObjective::new(distributions, channel), seeds, config)
}

/// Each channel is optimized independently.
pub fn optimize_all(distributions: &KinematicDistributions, config: &OptimizerConfig) -> Result<AllChannels, OptimizerError> {
    Ok(AllChannels {
        omega: optimize_channel(distributions, Channel::Omega, config)?,
        accel: optimize_channel(distributions, Channel::Accel, config)?,
        velocity: optimize_channel(distributions, Channel::Velocity, config)?,
    })
}
