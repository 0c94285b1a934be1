//! Trajectory-to-action labeling for vehicle trajectories.
//!
//! The crate turns per-frame kinematics (yaw rate, acceleration, speed) into
//! hierarchical behavior labels through a four-stage rule pipeline, learns
//! the eight separation thresholds from data, and searches labeled corpora
//! for similar or unique behaviors.

pub mod actions;
pub mod config;
pub mod optimizer;
pub mod partition;
pub mod pipeline;
pub mod sdl;
pub mod search;
pub mod synth;
pub mod trajectory;

pub use actions::{Direction, Intensity, LateralAction, Level, LongitudinalAction, SpeedChange, SpeedProfile, StreamLabel};
pub use partition::{classify, mu_part, objective, Channel, ChannelObjective, KinematicDistributions, Partition, ThresholdSet};
pub use trajectory::{Corpus, Trajectory, VehicleState};
