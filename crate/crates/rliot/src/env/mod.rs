//! Goal definitions and the condensed environment the agent actually sees.
//!
//! A goal names which device attributes matter, the device state an episode
//! starts from, the reward schedule, and optionally an event order the user
//! wants. Everything else — the abstract state space, terminal conditions,
//! rewards — is derived from the goal file by [`machine::GoalMachine`], so new
//! goals are data, not code.

pub mod machine;
pub mod session;

pub use machine::{AbstractState, EpisodeHistory, GoalMachine, StepClass, Terminal, TerminalKind};
pub use session::{DeviceSession, EnvSession, ResetStrategy, SessionError, StepOutcome};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bulb::BulbState;

/// Non-power device attributes a goal can track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attr {
    Color,
    Brightness,
    Name,
}

impl Attr {
    /// Short token used in state labels.
    pub fn token(self) -> &'static str {
        match self {
            Attr::Color => "color",
            Attr::Brightness => "bright",
            Attr::Name => "name",
        }
    }
}

/// Entry in a goal's `tracked_attributes` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackedField {
    Power,
    Color,
    Brightness,
    Name,
}

impl TrackedField {
    fn as_attr(self) -> Option<Attr> {
        match self {
            TrackedField::Power => None,
            TrackedField::Color => Some(Attr::Color),
            TrackedField::Brightness => Some(Attr::Brightness),
            TrackedField::Name => Some(Attr::Name),
        }
    }
}

/// A first-change event. Each can fire at most once per episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OrderEvent {
    PowerOn,
    PowerOff,
    Changed(Attr),
}

impl std::fmt::Display for OrderEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderEvent::PowerOn => write!(f, "power_on"),
            OrderEvent::PowerOff => write!(f, "power_off"),
            OrderEvent::Changed(Attr::Color) => write!(f, "color"),
            OrderEvent::Changed(Attr::Brightness) => write!(f, "brightness"),
            OrderEvent::Changed(Attr::Name) => write!(f, "name"),
        }
    }
}

impl std::str::FromStr for OrderEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "power_on" => OrderEvent::PowerOn,
            "power_off" => OrderEvent::PowerOff,
            "color" => OrderEvent::Changed(Attr::Color),
            "brightness" => OrderEvent::Changed(Attr::Brightness),
            "name" => OrderEvent::Changed(Attr::Name),
            other => return Err(format!("unknown event {other:?}")),
        })
    }
}

impl Serialize for OrderEvent {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for OrderEvent {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Reward schedule. The step penalty applies to every action; the error
/// penalty replaces it for actions the device rejected; terminal bonuses are
/// added on top of the final step's penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardScheme {
    pub success: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unordered_success: Option<i64>,
    pub step: i64,
    pub error: i64,
    pub fail: i64,
}

/// A complete goal file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoalSpec {
    #[serde(default)]
    pub name: String,
    pub tracked_attributes: Vec<TrackedField>,
    pub initial: BulbState,
    pub rewards: RewardScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_order: Option<Vec<OrderEvent>>,
    pub t_max: u32,
}

#[derive(Debug, Error)]
pub enum GoalError {
    #[error("unreadable goal: {0}")]
    Io(#[from] std::io::Error),
    #[error("unparseable goal: {0}")]
    Parse(String),
    #[error("invalid goal: {0}")]
    Invalid(String),
}

impl GoalSpec {
    pub fn from_json(text: &str) -> Result<Self, GoalError> {
        let goal: GoalSpec =
            serde_json::from_str(text).map_err(|e| GoalError::Parse(e.to_string()))?;
        goal.validate()?;
        Ok(goal)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GoalError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// "Change the color and the brightness, in any order, while the bulb
    /// stays on."
    pub fn builtin_goal1() -> Self {
        Self::from_json(include_str!("../../data/goal1.json")).expect("bundled goal must validate")
    }

    /// "Switch on, rename, change brightness, switch off — in that order,
    /// leaving the color alone."
    pub fn builtin_goal2() -> Self {
        Self::from_json(include_str!("../../data/goal2.json")).expect("bundled goal must validate")
    }

    /// Tracked non-power attributes, in the goal file's order. This order is
    /// also the display order of state labels.
    pub fn attrs(&self) -> Vec<Attr> {
        self.tracked_attributes
            .iter()
            .filter_map(|f| f.as_attr())
            .collect()
    }

    pub fn tracks_power(&self) -> bool {
        self.tracked_attributes
            .iter()
            .any(|f| matches!(f, TrackedField::Power))
    }

    pub fn validate(&self) -> Result<(), GoalError> {
        let fail = |why: String| Err(GoalError::Invalid(why));
        self.initial
            .validate()
            .map_err(|e| GoalError::Invalid(e.to_string()))?;
        if self.tracked_attributes.is_empty() {
            return fail("no tracked attributes".into());
        }
        for (i, a) in self.tracked_attributes.iter().enumerate() {
            if self.tracked_attributes[..i].contains(a) {
                return fail(format!("duplicate tracked attribute {a:?}"));
            }
        }
        if self.t_max == 0 {
            return fail("t_max must be at least 1".into());
        }
        if self.required_order.is_none() && self.attrs().is_empty() {
            return fail("goal defines nothing to accomplish".into());
        }
        let r = &self.rewards;
        if r.success <= 0 {
            return fail("success reward must be positive".into());
        }
        if r.step >= 0 {
            return fail("step penalty must be negative".into());
        }
        if r.error > r.step {
            return fail("error penalty must be at most the step penalty".into());
        }
        if r.fail > 0 {
            return fail("fail reward must not be positive".into());
        }
        if let Some(u) = r.unordered_success {
            if u <= 0 || u > r.success {
                return fail("unordered success reward must be in (0, success]".into());
            }
        }
        if let Some(order) = &self.required_order {
            if order.is_empty() {
                return fail("required_order must not be empty when present".into());
            }
            let attrs = self.attrs();
            for (i, ev) in order.iter().enumerate() {
                if order[..i].contains(ev) {
                    return fail(format!("duplicate event {ev} in required_order"));
                }
                match ev {
                    OrderEvent::PowerOn | OrderEvent::PowerOff => {
                        if !self.tracks_power() {
                            return fail(format!("{ev} requires tracking power"));
                        }
                    }
                    OrderEvent::Changed(a) => {
                        if !attrs.contains(a) {
                            return fail(format!("{ev} refers to an untracked attribute"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
