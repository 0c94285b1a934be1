//! Kinematic distributions, the partition rule table and the partition
//! similarity objective.
//!
//! Each channel's thresholds split its pooled 1-second averages into
//! partitions (4 for yaw rate, 3 for acceleration, 4 for speed). A
//! partition's spread `mu` is its mean pairwise absolute difference and the
//! objective sums `(mu_i - mu_j)^2` over unordered pairs of partitions of
//! one channel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    Omega,
    Accel,
    Velocity,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Omega, Channel::Accel, Channel::Velocity];

    /// Number of thresholds (partitions minus one).
    pub fn threshold_count(self) -> usize {
        match self {
            Channel::Omega | Channel::Velocity => 3,
            Channel::Accel => 2,
        }
    }

    /// Short key used in config files and CSV output.
    pub fn key(self) -> &'static str {
        match self {
            Channel::Omega => "omega",
            Channel::Accel => "a",
            Channel::Velocity => "v",
        }
    }

    /// Names of the thresholds in config-file order.
    pub fn threshold_names(self) -> &'static [&'static str] {
        match self {
            Channel::Omega => &["str", "grad", "med"],
            Channel::Accel => &["dec", "acc"],
            Channel::Velocity => &["stop", "slow", "med"],
        }
    }

    /// Yaw-rate and speed thresholds must stay positive.
    pub fn lower_bound(self) -> Option<f64> {
        match self {
            Channel::Omega | Channel::Velocity => Some(0.0),
            Channel::Accel => None,
        }
    }

    pub fn partitions(self) -> &'static [Partition] {
        match self {
            Channel::Omega => &[Partition::Straight, Partition::GradualTurn, Partition::MediumTurn, Partition::AggressiveTurn],
            Channel::Accel => &[Partition::Decelerate, Partition::MaintainSpeed, Partition::Accelerate],
            Channel::Velocity => &[Partition::Stopped, Partition::Slow, Partition::Medium, Partition::Fast],
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "omega" | "yaw_rate" => Ok(Channel::Omega),
            "a" | "accel" | "acceleration" => Ok(Channel::Accel),
            "v" | "velocity" | "speed" => Ok(Channel::Velocity),
            _ => Err(format!("unknown channel `{s}`")),
        }
    }
}

/// A named partition of one channel's distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    Straight,
    GradualTurn,
    MediumTurn,
    AggressiveTurn,
    Decelerate,
    MaintainSpeed,
    Accelerate,
    Stopped,
    Slow,
    Medium,
    Fast,
}

impl Partition {
    pub fn channel(self) -> Channel {
        match self {
            Partition::Straight | Partition::GradualTurn | Partition::MediumTurn | Partition::AggressiveTurn => Channel::Omega,
            Partition::Decelerate | Partition::MaintainSpeed | Partition::Accelerate => Channel::Accel,
            Partition::Stopped | Partition::Slow | Partition::Medium | Partition::Fast => Channel::Velocity,
        }
    }

    /// Position within the channel, from the lowest partition upward.
    pub fn index(self) -> usize {
        self.channel().partitions().iter().position(|&p| p == self).expect("partition listed in its channel")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThresholdError {
    #[error("{channel} thresholds must be strictly increasing: {values:?}")]
    NotIncreasing { channel: Channel, values: Vec<f64> },
    #[error("{channel} thresholds must be positive: {values:?}")]
    NotPositive { channel: Channel, values: Vec<f64> },
    #[error("{channel} expects {expected} thresholds, got {got}")]
    WrongCount { channel: Channel, expected: usize, got: usize },
    #[error("threshold values must be finite")]
    NonFinite,
    #[error("thresholds file: {0}")]
    Config(#[from] crate::config::ConfigError),
}

/// The eight separation thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    /// Straight / gradual / medium yaw-rate bounds, rad/s.
    pub omega: [f64; 3],
    /// Decelerate / accelerate bounds, m/s².
    pub accel: [f64; 2],
    /// Stop / slow / medium speed bounds, m/s.
    pub velocity: [f64; 3],
}

impl Default for ThresholdSet {
    /// Domain-knowledge thresholds.
    fn default() -> Self {
        ThresholdSet { omega: [0.05, 0.15, 0.3], accel: [-0.5, 0.5], velocity: [0.5, 8.0, 16.0] }
    }
}

impl ThresholdSet {
    pub fn new(omega: [f64; 3], accel: [f64; 2], velocity: [f64; 3]) -> Result<Self, ThresholdError> {
        let t = ThresholdSet { omega, accel, velocity };
        t.validate()?;
        Ok(t)
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Omega => &self.omega,
            Channel::Accel => &self.accel,
            Channel::Velocity => &self.velocity,
        }
    }

    /// Copy with one channel replaced. Fails if the new values are invalid.
    pub fn with_channel(&self, channel: Channel, values: &[f64]) -> Result<Self, ThresholdError> {
        validate_channel(channel, values)?;
        let mut out = *self;
        match channel {
            Channel::Omega => out.omega.copy_from_slice(values),
            Channel::Accel => out.accel.copy_from_slice(values),
            Channel::Velocity => out.velocity.copy_from_slice(values),
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ThresholdError> {
        for c in Channel::ALL {
            validate_channel(c, self.channel(c))?;
        }
        Ok(())
    }

    /// Flat `channel.name = value` text, one threshold per line.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for c in Channel::ALL {
            for (name, v) in c.threshold_names().iter().zip(self.channel(c)) {
                out.push_str(&format!("{}.{} = {:?}\n", c.key(), name, v));
            }
        }
        out
    }

    pub fn from_config_str(text: &str) -> Result<Self, ThresholdError> {
        let mut map = crate::config::parse_flat(text)?;
        let mut take = |c: Channel| -> Result<Vec<f64>, ThresholdError> {
            c.threshold_names().iter().map(|n| Ok(crate::config::take_f64(&mut map, &format!("{}.{}", c.key(), n))?)).collect()
        };
        let omega = take(Channel::Omega)?;
        let accel = take(Channel::Accel)?;
        let velocity = take(Channel::Velocity)?;
        crate::config::reject_unknown(&map)?;
        ThresholdSet::new(
            [omega[0], omega[1], omega[2]],
            [accel[0], accel[1]],
            [velocity[0], velocity[1], velocity[2]],
        )
    }
}

pub fn validate_channel(channel: Channel, values: &[f64]) -> Result<(), ThresholdError> {
    if values.len() != channel.threshold_count() {
        return Err(ThresholdError::WrongCount { channel, expected: channel.threshold_count(), got: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ThresholdError::NonFinite);
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ThresholdError::NotIncreasing { channel, values: values.to_vec() });
    }
    if let Some(lo) = channel.lower_bound() {
        if values[0] <= lo {
            return Err(ThresholdError::NotPositive { channel, values: values.to_vec() });
        }
    }
    Ok(())
}

/// Index of the partition holding `value`: the number of thresholds strictly
/// below it, so a value equal to a threshold falls in the lower partition.
pub fn partition_index(value: f64, thresholds: &[f64]) -> usize {
    thresholds.iter().take_while(|&&t| value > t).count()
}

/// Partition of a channel sample. Yaw rate is classified by magnitude.
pub fn classify(value: f64, channel: Channel, thresholds: &ThresholdSet) -> Partition {
    let value = if channel == Channel::Omega { value.abs() } else { value };
    channel.partitions()[partition_index(value, thresholds.channel(channel))]
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("trajectory {scenario_id}:{vehicle_id} is shorter than one 1-second window")]
    TrajectoryTooShort { scenario_id: String, vehicle_id: String },
}

/// Pooled 1-second window means of each channel over a corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicDistributions {
    /// Signed yaw-rate means, rad/s.
    pub omega: Vec<f64>,
    pub accel: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl KinematicDistributions {
    pub fn channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Omega => &self.omega,
            Channel::Accel => &self.accel,
            Channel::Velocity => &self.velocity,
        }
    }

    /// Samples as the partition rules see them (|omega| for yaw rate).
    pub fn rule_samples(&self, channel: Channel) -> Vec<f64> {
        let s = self.channel(channel);
        if channel == Channel::Omega {
            s.iter().map(|v| v.abs()).collect()
        } else {
            s.to_vec()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty() && self.accel.is_empty() && self.velocity.is_empty()
    }
}

fn window_means(values: impl Iterator<Item = f64>, window: usize, out: &mut Vec<f64>) {
    let values: Vec<f64> = values.collect();
    for chunk in values.chunks_exact(window) {
        out.push(chunk.iter().sum::<f64>() / window as f64);
    }
}

/// Non-overlapping 1-second windows; trailing partial windows are dropped.
pub fn build_distributions(corpus: &Corpus) -> Result<KinematicDistributions, DistributionError> {
    let mut d = KinematicDistributions::default();
    for t in &corpus.trajectories {
        let window = (t.sample_rate_hz.round() as usize).max(1);
        if t.states.len() < window {
            return Err(DistributionError::TrajectoryTooShort {
                scenario_id: t.scenario_id.clone(),
                vehicle_id: t.vehicle_id.clone(),
            });
        }
        window_means(t.states.iter().map(|s| s.omega), window, &mut d.omega);
        window_means(t.states.iter().map(|s| s.a), window, &mut d.accel);
        window_means(t.states.iter().map(|s| s.v), window, &mut d.velocity);
    }
    Ok(d)
}

/// Sum of pairwise absolute differences of an ascending slice.
///
/// Each gap between neighbours is crossed by `left * right` pairs; summing
/// gaps keeps the result translation invariant to rounding.
fn sorted_pairwise_sum(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    sorted.windows(2).enumerate().map(|(i, w)| (w[1] - w[0]) * ((i + 1) * (n - i - 1)) as f64).sum()
}

fn pairs(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Mean pairwise absolute difference of an ascending slice; 0 for fewer than
/// two samples.
pub fn mu_sorted(sorted: &[f64]) -> f64 {
    if sorted.len() < 2 {
        return 0.0;
    }
    sorted_pairwise_sum(sorted) / pairs(sorted.len())
}

/// Mean pairwise absolute difference within a partition, O(n log n).
pub fn mu_part(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    mu_sorted(&sorted)
}

/// Sum of squared differences over unordered pairs of partition spreads.
pub fn pairwise_squared_spread(mus: &[f64]) -> f64 {
    let mut j = 0.0;
    for (i, a) in mus.iter().enumerate() {
        for b in &mus[i + 1..] {
            j += (a - b) * (a - b);
        }
    }
    j
}

/// One channel's samples pre-sorted for repeated objective evaluation.
#[derive(Debug, Clone)]
pub struct ChannelObjective {
    channel: Channel,
    sorted: Vec<f64>,
}

impl ChannelObjective {
    pub fn new(distributions: &KinematicDistributions, channel: Channel) -> Self {
        Self::from_samples(channel, distributions.rule_samples(channel))
    }

    /// `samples` are taken as the rule sees them (already |omega| for yaw).
    pub fn from_samples(channel: Channel, mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        ChannelObjective { channel, sorted: samples }
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Contiguous index ranges of each partition in the sorted samples.
    pub fn partition_bounds(&self, thresholds: &[f64]) -> Vec<(usize, usize)> {
        let mut cuts = vec![0];
        cuts.extend(thresholds.iter().map(|&t| self.sorted.partition_point(|&x| x <= t)));
        cuts.push(self.sorted.len());
        // a non-increasing threshold vector yields empty trailing ranges
        for i in 1..cuts.len() {
            cuts[i] = cuts[i].max(cuts[i - 1]);
        }
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn partition_sizes(&self, thresholds: &[f64]) -> Vec<usize> {
        self.partition_bounds(thresholds).iter().map(|(a, b)| b - a).collect()
    }

    pub fn partition_mus(&self, thresholds: &[f64]) -> Vec<f64> {
        self.partition_bounds(thresholds).iter().map(|&(a, b)| mu_sorted(&self.sorted[a..b])).collect()
    }

    pub fn evaluate(&self, thresholds: &[f64]) -> f64 {
        pairwise_squared_spread(&self.partition_mus(thresholds))
    }
}

/// Objective for one channel under `thresholds`.
pub fn objective(distributions: &KinematicDistributions, channel: Channel, thresholds: &ThresholdSet) -> f64 {
    ChannelObjective::new(distributions, channel).evaluate(thresholds.channel(channel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Trajectory, VehicleState};

    fn brute_mu(s: &[f64]) -> f64 {
        if s.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                total += (s[i] - s[j]).abs();
            }
        }
        total / (s.len() * (s.len() - 1) / 2) as f64
    }

    fn traj(accel: impl Iterator<Item = f64>) -> Trajectory {
        let states = accel.map(|a| VehicleState { x: 0.0, y: 0.0, v: 5.0, a, phi: 0.0, omega: 0.0 }).collect();
        Trajectory { scenario_id: "s".into(), vehicle_id: "v".into(), sample_rate_hz: 10.0, states }
    }

    #[test]
    fn window_means_follow_floor_rule() {
        let c = Corpus::new(vec![traj(std::iter::repeat_n(2.0, 20))], "t").unwrap();
        assert_eq!(build_distributions(&c).unwrap().accel, vec![2.0, 2.0]);
        let c = Corpus::new(vec![traj(std::iter::repeat_n(1.0, 25))], "t").unwrap();
        assert_eq!(build_distributions(&c).unwrap().accel.len(), 2);
        let c = Corpus::new(vec![traj((0..20).map(f64::from))], "t").unwrap();
        assert_eq!(build_distributions(&c).unwrap().accel, vec![4.5, 14.5]);
        let c = Corpus::new(vec![traj(std::iter::repeat_n(1.0, 9))], "t").unwrap();
        assert!(matches!(build_distributions(&c), Err(DistributionError::TrajectoryTooShort { .. })));
    }

    #[test]
    fn classify_uses_lower_inclusive_bounds() {
        let t = ThresholdSet::default();
        assert_eq!(classify(0.0, Channel::Omega, &t), Partition::Straight);
        assert_eq!(classify(-0.2, Channel::Omega, &t), Partition::MediumTurn);
        assert_eq!(classify(t.accel[0], Channel::Accel, &t), Partition::Decelerate);
        assert_eq!(classify(t.accel[1], Channel::Accel, &t), Partition::MaintainSpeed);
        assert_eq!(classify(t.velocity[2] + 0.01, Channel::Velocity, &t), Partition::Fast);
        assert_eq!(classify(t.velocity[2], Channel::Velocity, &t), Partition::Medium);
        assert_eq!(classify(t.velocity[0], Channel::Velocity, &t), Partition::Stopped);
    }

    #[test]
    fn mu_small_cases() {
        assert_eq!(mu_part(&[5.0]), 0.0);
        assert_eq!(mu_part(&[]), 0.0);
        assert_eq!(mu_part(&[0.0, 2.0]), 2.0);
        assert_eq!(mu_part(&[0.0, 1.0, 3.0]), 2.0);
        assert_eq!(mu_part(&[3.0, 0.0, 1.0]), brute_mu(&[3.0, 0.0, 1.0]));
    }

    #[test]
    fn objective_pair_enumeration() {
        assert_eq!(pairwise_squared_spread(&[2.0, 5.0, 5.0]), 18.0);
        assert_eq!(pairwise_squared_spread(&[1.5; 4]), 0.0);
    }

    #[test]
    fn objective_on_explicit_partitions() {
        // partitions {-3,-2} {0,1} {3,7}: mu = 1, 1, 4 -> J = 0 + 9 + 9
        let d = KinematicDistributions { accel: vec![-3.0, -2.0, 0.0, 1.0, 3.0, 7.0], ..Default::default() };
        let t = ThresholdSet { accel: [-1.0, 2.0], ..Default::default() };
        assert_eq!(objective(&d, Channel::Accel, &t), 18.0);
        let obj = ChannelObjective::new(&d, Channel::Accel);
        assert_eq!(obj.partition_sizes(&[-1.0, 2.0]), vec![2, 2, 2]);
        // emptying the middle partition only touches terms involving it
        let t2 = ThresholdSet { accel: [-1.0, -0.5], ..Default::default() };
        let mus = obj.partition_mus(&t2.accel);
        assert_eq!(mus[0], 1.0);
        assert_eq!(mus[1], 0.0);
        assert_eq!(mus[2], brute_mu(&[0.0, 1.0, 3.0, 7.0]));
    }

    #[test]
    fn omega_objective_uses_magnitudes() {
        let d = KinematicDistributions { omega: vec![-0.4, 0.4, 0.01, -0.01], ..Default::default() };
        let obj = ChannelObjective::new(&d, Channel::Omega);
        assert_eq!(obj.partition_sizes(&[0.05, 0.15, 0.3]), vec![2, 0, 0, 2]);
    }

    #[test]
    fn threshold_validation() {
        assert!(ThresholdSet::default().validate().is_ok());
        assert!(ThresholdSet::new([0.1, 0.05, 0.3], [-0.5, 0.5], [0.5, 8.0, 16.0]).is_err());
        assert!(ThresholdSet::new([0.0, 0.05, 0.3], [-0.5, 0.5], [0.5, 8.0, 16.0]).is_err());
        assert!(ThresholdSet::new([0.01, 0.05, 0.3], [-2.0, -1.0], [0.5, 8.0, 16.0]).is_ok());
        assert!(ThresholdSet::default().with_channel(Channel::Accel, &[1.0]).is_err());
    }

    #[test]
    fn thresholds_config_round_trip() {
        let t = ThresholdSet::new([0.031, 0.1234567, 0.3], [-0.75, 0.5], [0.4, 7.9, 15.25]).unwrap();
        let text = t.to_config_string();
        assert!(text.contains("omega.str = 0.031\n"));
        let back = ThresholdSet::from_config_str(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_config_string(), text);
        assert!(ThresholdSet::from_config_str(&format!("{text}v.fast = 3\n")).is_err());
        assert!(ThresholdSet::from_config_str("omega.str = 0.1\n").is_err());
    }
}
