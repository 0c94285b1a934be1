//! Label vocabulary for the four hierarchy levels.
//!
//! Lateral and longitudinal actions are structured values rather than flat
//! enums so that projecting to a coarser level is a matter of dropping
//! refinements. The textual names (`AggressiveRightTurn`, `MaintainSlowSpeed`,
//! ...) are the canonical wire form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hierarchy level, ordered from coarsest to finest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Trace,
    Trend,
    Maneuver,
    Action,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Trace, Level::Trend, Level::Maneuver, Level::Action];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Trace => "trace",
            Level::Trend => "trend",
            Level::Maneuver => "maneuver",
            Level::Action => "action",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "trace" => Ok(Level::Trace),
            "trend" => Ok(Level::Trend),
            "maneuver" => Ok(Level::Maneuver),
            "action" => Ok(Level::Action),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn opposite(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "Left",
            Direction::Right => "Right",
        }
    }
}

/// Turn intensity from |yaw rate|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Intensity {
    Gradual,
    Medium,
    Aggressive,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Gradual, Intensity::Medium, Intensity::Aggressive];

    fn as_str(self) -> &'static str {
        match self {
            Intensity::Gradual => "Gradual",
            Intensity::Medium => "Medium",
            Intensity::Aggressive => "Aggressive",
        }
    }
}

/// Speed band from velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpeedProfile {
    Slow,
    Medium,
    Fast,
}

impl SpeedProfile {
    pub const ALL: [SpeedProfile; 3] = [SpeedProfile::Slow, SpeedProfile::Medium, SpeedProfile::Fast];

    fn as_str(self) -> &'static str {
        match self {
            SpeedProfile::Slow => "Slow",
            SpeedProfile::Medium => "Medium",
            SpeedProfile::Fast => "Fast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LateralAction {
    Straight,
    Turn(Direction, Option<Intensity>),
    Merge(Direction, Option<Intensity>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpeedChange {
    Accelerate,
    Maintain,
    Decelerate,
}

impl SpeedChange {
    fn as_str(self) -> &'static str {
        match self {
            SpeedChange::Accelerate => "Accelerate",
            SpeedChange::Maintain => "Maintain",
            SpeedChange::Decelerate => "Decelerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LongitudinalAction {
    Stopped,
    Moving(SpeedChange, Option<SpeedProfile>),
}

impl LongitudinalAction {
    pub const ACCELERATE: LongitudinalAction = LongitudinalAction::Moving(SpeedChange::Accelerate, None);
    pub const MAINTAIN: LongitudinalAction = LongitudinalAction::Moving(SpeedChange::Maintain, None);
    pub const DECELERATE: LongitudinalAction = LongitudinalAction::Moving(SpeedChange::Decelerate, None);
}

/// Common behavior of the two label streams.
pub trait StreamLabel: Copy + Eq + Ord + std::hash::Hash + fmt::Debug + fmt::Display + FromStr<Err = UnknownLabel> {
    /// True when the label belongs to the legal set of `level`.
    fn is_legal(&self, level: Level) -> bool;

    /// Ancestor of this label at `level`. Only meaningful when `level` is not
    /// finer than the label's own level.
    fn project(&self, level: Level) -> Self;

    /// Every legal label of `level`.
    fn legal_set(level: Level) -> Vec<Self>;
}

impl StreamLabel for LateralAction {
    fn is_legal(&self, level: Level) -> bool {
        match *self {
            LateralAction::Straight => true,
            LateralAction::Turn(_, None) => level < Level::Action,
            LateralAction::Turn(_, Some(_)) => level == Level::Action,
            LateralAction::Merge(_, None) => level == Level::Maneuver,
            LateralAction::Merge(_, Some(_)) => level == Level::Action,
        }
    }

    fn project(&self, level: Level) -> Self {
        match *self {
            LateralAction::Straight => LateralAction::Straight,
            LateralAction::Turn(d, i) => {
                if level == Level::Action {
                    LateralAction::Turn(d, i)
                } else {
                    LateralAction::Turn(d, None)
                }
            }
            LateralAction::Merge(d, i) => match level {
                Level::Action => LateralAction::Merge(d, i),
                Level::Maneuver => LateralAction::Merge(d, None),
                // a merge starts with a turn toward its own direction
                Level::Trend | Level::Trace => LateralAction::Turn(d, None),
            },
        }
    }

    fn legal_set(level: Level) -> Vec<Self> {
        let mut out = vec![LateralAction::Straight];
        for d in [Direction::Left, Direction::Right] {
            match level {
                Level::Trace | Level::Trend => out.push(LateralAction::Turn(d, None)),
                Level::Maneuver => {
                    out.push(LateralAction::Turn(d, None));
                    out.push(LateralAction::Merge(d, None));
                }
                Level::Action => {
                    for i in Intensity::ALL {
                        out.push(LateralAction::Turn(d, Some(i)));
                        out.push(LateralAction::Merge(d, Some(i)));
                    }
                }
            }
        }
        out
    }
}

impl StreamLabel for LongitudinalAction {
    fn is_legal(&self, level: Level) -> bool {
        match *self {
            LongitudinalAction::Stopped => level >= Level::Trend,
            LongitudinalAction::Moving(_, None) => level < Level::Action,
            LongitudinalAction::Moving(_, Some(_)) => level == Level::Action,
        }
    }

    fn project(&self, level: Level) -> Self {
        match *self {
            LongitudinalAction::Stopped if level == Level::Trace => LongitudinalAction::MAINTAIN,
            LongitudinalAction::Stopped => LongitudinalAction::Stopped,
            LongitudinalAction::Moving(c, p) => {
                if level == Level::Action {
                    LongitudinalAction::Moving(c, p)
                } else {
                    LongitudinalAction::Moving(c, None)
                }
            }
        }
    }

    fn legal_set(level: Level) -> Vec<Self> {
        let changes = [SpeedChange::Accelerate, SpeedChange::Maintain, SpeedChange::Decelerate];
        let mut out = Vec::new();
        if level >= Level::Trend {
            out.push(LongitudinalAction::Stopped);
        }
        for c in changes {
            if level == Level::Action {
                for p in SpeedProfile::ALL {
                    out.push(LongitudinalAction::Moving(c, Some(p)));
                }
            } else {
                out.push(LongitudinalAction::Moving(c, None));
            }
        }
        out
    }
}

impl fmt::Display for LateralAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LateralAction::Straight => f.write_str("Straight"),
            LateralAction::Turn(d, i) => {
                if let Some(i) = i {
                    f.write_str(i.as_str())?;
                }
                write!(f, "{}Turn", d.as_str())
            }
            LateralAction::Merge(d, i) => {
                if let Some(i) = i {
                    f.write_str(i.as_str())?;
                }
                write!(f, "{}Merge", d.as_str())
            }
        }
    }
}

impl fmt::Display for LongitudinalAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LongitudinalAction::Stopped => f.write_str("Stopped"),
            LongitudinalAction::Moving(SpeedChange::Maintain, None) => f.write_str("MaintainSpeed"),
            LongitudinalAction::Moving(c, None) => f.write_str(c.as_str()),
            LongitudinalAction::Moving(c, Some(p)) => write!(f, "{}{}Speed", c.as_str(), p.as_str()),
        }
    }
}

fn strip_intensity(s: &str) -> (Option<Intensity>, &str) {
    for i in Intensity::ALL {
        if let Some(rest) = s.strip_prefix(i.as_str()) {
            return (Some(i), rest);
        }
    }
    (None, s)
}

impl FromStr for LateralAction {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "Straight" {
            return Ok(LateralAction::Straight);
        }
        let (intensity, rest) = strip_intensity(s);
        let parsed = match rest {
            "LeftTurn" => LateralAction::Turn(Direction::Left, intensity),
            "RightTurn" => LateralAction::Turn(Direction::Right, intensity),
            "LeftMerge" => LateralAction::Merge(Direction::Left, intensity),
            "RightMerge" => LateralAction::Merge(Direction::Right, intensity),
            _ => return Err(UnknownLabel(s.to_string())),
        };
        Ok(parsed)
    }
}

impl FromStr for LongitudinalAction {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Stopped" => return Ok(LongitudinalAction::Stopped),
            "MaintainSpeed" => return Ok(LongitudinalAction::MAINTAIN),
            "Accelerate" => return Ok(LongitudinalAction::ACCELERATE),
            "Decelerate" => return Ok(LongitudinalAction::DECELERATE),
            _ => {}
        }
        let body = s.strip_suffix("Speed").ok_or_else(|| UnknownLabel(s.to_string()))?;
        for c in [SpeedChange::Accelerate, SpeedChange::Maintain, SpeedChange::Decelerate] {
            if let Some(profile) = body.strip_prefix(c.as_str()) {
                for p in SpeedProfile::ALL {
                    if profile == p.as_str() {
                        return Ok(LongitudinalAction::Moving(c, Some(p)));
                    }
                }
            }
        }
        Err(UnknownLabel(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_for_every_legal_label() {
        for level in Level::ALL {
            for l in LateralAction::legal_set(level) {
                assert_eq!(l.to_string().parse::<LateralAction>().unwrap(), l);
                assert!(l.is_legal(level));
            }
            for l in LongitudinalAction::legal_set(level) {
                assert_eq!(l.to_string().parse::<LongitudinalAction>().unwrap(), l);
                assert!(l.is_legal(level));
            }
        }
    }

    #[test]
    fn legal_set_sizes() {
        let lat: Vec<usize> = Level::ALL.iter().map(|&l| LateralAction::legal_set(l).len()).collect();
        let long: Vec<usize> = Level::ALL.iter().map(|&l| LongitudinalAction::legal_set(l).len()).collect();
        assert_eq!(lat, vec![3, 3, 5, 13]);
        assert_eq!(long, vec![3, 4, 4, 10]);
    }

    #[test]
    fn canonical_names() {
        let aggressive_right = LateralAction::Turn(Direction::Right, Some(Intensity::Aggressive));
        assert_eq!(aggressive_right.to_string(), "AggressiveRightTurn");
        let maintain_slow = LongitudinalAction::Moving(SpeedChange::Maintain, Some(SpeedProfile::Slow));
        assert_eq!(maintain_slow.to_string(), "MaintainSlowSpeed");
        assert_eq!(LongitudinalAction::MAINTAIN.to_string(), "MaintainSpeed");
        assert!("SidewaysTurn".parse::<LateralAction>().is_err());
        assert!("AccelerateWarpSpeed".parse::<LongitudinalAction>().is_err());
    }

    #[test]
    fn projection_follows_hierarchy() {
        let aggressive_right = LateralAction::Turn(Direction::Right, Some(Intensity::Aggressive));
        assert_eq!(aggressive_right.project(Level::Maneuver), LateralAction::Turn(Direction::Right, None));
        assert_eq!(aggressive_right.project(Level::Trend), LateralAction::Turn(Direction::Right, None));
        assert_eq!(LongitudinalAction::Stopped.project(Level::Trace), LongitudinalAction::MAINTAIN);
        assert_eq!(LongitudinalAction::Stopped.project(Level::Trend), LongitudinalAction::Stopped);
        let merge = LateralAction::Merge(Direction::Left, Some(Intensity::Medium));
        assert_eq!(merge.project(Level::Maneuver), LateralAction::Merge(Direction::Left, None));
        assert_eq!(merge.project(Level::Trace), LateralAction::Turn(Direction::Left, None));
    }

    #[test]
    fn projection_lands_in_legal_set() {
        for from in Level::ALL {
            for to in Level::ALL.iter().copied().filter(|&t| t <= from) {
                for l in LateralAction::legal_set(from) {
                    assert!(l.project(to).is_legal(to), "{l} -> {to}");
                }
                for l in LongitudinalAction::legal_set(from) {
                    assert!(l.project(to).is_legal(to), "{l} -> {to}");
                }
            }
        }
    }
}
