//! Tabular value learning: Q-tables, ε-greedy selection, and the update
//! rules for one-step Q-learning, SARSA, and their eligibility-trace
//! variants.
//!
//! Tables are dense row-major `f64` grids over (state label, action label).
//! Everything here is deterministic given the RNG: selection draws exactly
//! one coin and one index per call, so two algorithms that make the same
//! sequence of selection calls stay on identical random streams — which is
//! what lets the trace variants collapse onto their one-step counterparts
//! at λ = 0, bit for bit.

mod episode;

pub use episode::{replay, run_episode, run_greedy_episode, EpisodeLog, Transition};

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("table i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed table: {0}")]
    Parse(String),
}

/// Learning constants. `lambda` only matters to the trace algorithms;
/// `epsilon_decay` is a per-episode multiplier applied by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_decay: Option<f64>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            epsilon: 0.2,
            alpha: 0.1,
            gamma: 0.55,
            lambda: 0.0,
            epsilon_decay: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QLearning,
    Sarsa,
    QLambda,
    SarsaLambda,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::QLearning,
        Algorithm::Sarsa,
        Algorithm::QLambda,
        Algorithm::SarsaLambda,
    ];

    pub fn uses_traces(self) -> bool {
        matches!(self, Algorithm::QLambda | Algorithm::SarsaLambda)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::QLearning => "q_learning",
            Algorithm::Sarsa => "sarsa",
            Algorithm::QLambda => "q_lambda",
            Algorithm::SarsaLambda => "sarsa_lambda",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "q_learning" => Ok(Algorithm::QLearning),
            "sarsa" => Ok(Algorithm::Sarsa),
            "q_lambda" => Ok(Algorithm::QLambda),
            "sarsa_lambda" => Ok(Algorithm::SarsaLambda),
            other => Err(format!(
                "unknown algorithm {other:?} (expected q_learning, sarsa, q_lambda or sarsa_lambda)"
            )),
        }
    }
}

/// Action-value table, zero-initialised, keyed by state label.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: Vec<String>,
    actions: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(states: Vec<String>, actions: Vec<String>) -> Self {
        assert!(!states.is_empty() && !actions.is_empty());
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let values = vec![0.0; states.len() * actions.len()];
        QTable {
            states,
            actions,
            index,
            values,
        }
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }

    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions.len() + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        let n = self.actions.len();
        self.values[s * n + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let n = self.actions.len();
        &self.values[s * n..(s + 1) * n]
    }

    pub fn max_q(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of every action tied for the row maximum.
    pub fn greedy_set(&self, s: usize) -> Vec<usize> {
        let best = self.max_q(s);
        self.row(s)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == best)
            .map(|(i, _)| i)
            .collect()
    }

    /// Render as CSV: header `state,<action>,...`, one row per state,
    /// values in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state");
        for a in &self.actions {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(s);
            for v in self.row(i) {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, AgentError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| AgentError::Parse("empty table".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("state") {
            return Err(AgentError::Parse("header must start with `state`".into()));
        }
        let actions: Vec<String> = cols.map(str::to_string).collect();
        if actions.is_empty() {
            return Err(AgentError::Parse("no action columns".into()));
        }
        let mut states = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let state = fields
                .next()
                .ok_or_else(|| AgentError::Parse("blank row".into()))?;
            states.push(state.to_string());
            let mut row = 0usize;
            for field in fields {
                let v: f64 = field
                    .parse()
                    .map_err(|_| AgentError::Parse(format!("bad value {field:?} in row {state:?}")))?;
                values.push(v);
                row += 1;
            }
            if row != actions.len() {
                return Err(AgentError::Parse(format!(
                    "row {state:?} has {row} values, expected {}",
                    actions.len()
                )));
            }
        }
        if states.is_empty() {
            return Err(AgentError::Parse("no state rows".into()));
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(QTable {
            states,
            actions,
            index,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Bitwise equality of the value grid, dimensions included.
    pub fn same_values(&self, other: &QTable) -> bool {
        self.states == other.states
            && self.actions == other.actions
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Eligibility traces, same shape as the Q-table they accompany.
#[derive(Debug, Clone)]
pub struct TraceTable {
    n_actions: usize,
    values: Vec<f64>,
}

impl TraceTable {
    pub fn like(q: &QTable) -> Self {
        TraceTable {
            n_actions: q.actions.len(),
            values: vec![0.0; q.values.len()],
        }
    }

    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn bump(&mut self, s: usize, a: usize) {
        self.values[s * self.n_actions + a] += 1.0;
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn clear(&mut self) {
        self.values.fill(0.0);
    }
}

/// ε-greedy draw. Always consumes one coin and one index from the RNG.
/// Returns the action index and whether it belongs to the greedy set —
/// an exploratory draw that happens to land on a maximiser counts greedy.
pub fn select_action(q: &QTable, s: usize, epsilon: f64, rng: &mut impl Rng) -> (usize, bool) {
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        let a = rng.gen_range(0..q.actions.len());
        let greedy = q.value(s, a) == q.max_q(s);
        (a, greedy)
    } else {
        let set = q.greedy_set(s);
        let a = set[rng.gen_range(0..set.len())];
        (a, true)
    }
}

/// One-step off-policy update: bootstrap from the best next action.
/// `s_next` is `None` when the step ended the episode for real (success or
/// failure); a truncated episode still bootstraps from where it stopped.
pub fn q_learning_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: Option<usize>,
    hp: &HyperParams,
) {
    let bootstrap = s_next.map_or(0.0, |sn| q.max_q(sn));
    let delta = r + hp.gamma * bootstrap - q.value(s, a);
    let updated = q.value(s, a) + hp.alpha * delta;
    q.set(s, a, updated);
}

/// One-step on-policy update: bootstrap from the action actually chosen next.
pub fn sarsa_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    next: Option<(usize, usize)>,
    hp: &HyperParams,
) {
    let bootstrap = next.map_or(0.0, |(sn, an)| q.value(sn, an));
    let delta = r + hp.gamma * bootstrap - q.value(s, a);
    let updated = q.value(s, a) + hp.alpha * delta;
    q.set(s, a, updated);
}

fn sweep(q: &mut QTable, e: &TraceTable, alpha: f64, delta: f64) {
    debug_assert_eq!(q.values.len(), e.values.len());
    for (qv, ev) in q.values.iter_mut().zip(&e.values) {
        if *ev != 0.0 {
            *qv += alpha * delta * ev;
        }
    }
}

/// Watkins-style Q(λ) update: off-policy error, accumulating traces, and a
/// sweep over every traced pair. Trace decay is **not** part of this call —
/// it depends on whether the *next* chosen action is greedy, which the
/// caller only knows after selecting it; apply [`watkins_trace_decay`] then.
pub fn watkins_q_lambda_update(
    q: &mut QTable,
    e: &mut TraceTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: Option<usize>,
    hp: &HyperParams,
) {
    let bootstrap = s_next.map_or(0.0, |sn| q.max_q(sn));
    let delta = r + hp.gamma * bootstrap - q.value(s, a);
    e.bump(s, a);
    sweep(q, e, hp.alpha, delta);
}

/// Decay after a Watkins sweep: traces survive (scaled by γλ) only while the
/// policy keeps choosing greedily; an exploratory choice cuts them dead.
pub fn watkins_trace_decay(e: &mut TraceTable, next_greedy: bool, hp: &HyperParams) {
    if next_greedy {
        e.scale(hp.gamma * hp.lambda);
    } else {
        e.clear();
    }
}

/// SARSA(λ) update: on-policy error, accumulating traces, sweep, and an
/// unconditional γλ decay — on-policy traces never reset mid-episode.
pub fn sarsa_lambda_update(
    q: &mut QTable,
    e: &mut TraceTable,
    s: usize,
    a: usize,
    r: f64,
    next: Option<(usize, usize)>,
    hp: &HyperParams,
) {
    let bootstrap = next.map_or(0.0, |(sn, an)| q.value(sn, an));
    let delta = r + hp.gamma * bootstrap - q.value(s, a);
    e.bump(s, a);
    sweep(q, e, hp.alpha, delta);
    e.scale(hp.gamma * hp.lambda);
}
