//! The condensed state machine the agent learns over.
//!
//! Full device state is too big to tabulate (16M colors alone), so the agent
//! sees an abstraction: power, the set of tracked attributes that currently
//! differ from the episode's initial state, and whether the goal's required
//! event order is still intact. First-change events latch once per episode;
//! the changed-set itself stays live, so reverting an attribute shrinks it
//! again.
//!
//! [`GoalMachine`] derives everything from a [`GoalSpec`]: observation of real
//! device states, terminal classification, rewards, the enumerated state
//! space, and a symbolic step used by the planning oracle. Enumeration,
//! observation and the oracle all funnel through the same latch/classify code
//! so there is exactly one definition of success.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bulb::{BulbState, Power};

use super::{Attr, GoalError, GoalSpec, OrderEvent};

/// Terminal classification of an abstract state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    None,
    Success { ordered: bool },
    Fail,
}

/// What the run loop sees after a step, with the time budget folded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    None,
    Success,
    Fail,
    Timeout,
}

impl TerminalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalKind::None => "none",
            TerminalKind::Success => "success",
            TerminalKind::Fail => "fail",
            TerminalKind::Timeout => "timeout",
        }
    }
}

/// The agent-visible state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractState {
    pub power: Power,
    /// Tracked attributes currently differing from the episode's initial
    /// device state.
    pub changed: BTreeSet<Attr>,
    pub order_ok: bool,
    pub terminal: Terminal,
}

/// Per-episode latch state: which first-change events have fired, and whether
/// they fired as a prefix of the goal's required order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EpisodeHistory {
    pub fired: BTreeSet<OrderEvent>,
    pub order_ok: bool,
}

impl EpisodeHistory {
    pub fn new() -> Self {
        EpisodeHistory {
            fired: BTreeSet::new(),
            order_ok: true,
        }
    }
}

impl Default for EpisodeHistory {
    fn default() -> Self {
        Self::new()
    }
}

/// How one step is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepClass {
    Normal,
    CommandError,
    Fail,
    Success { ordered: bool },
}

/// Abstract state plus latch history, for symbolic exploration (state
/// enumeration and the planning oracle).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolicState {
    pub power: Power,
    pub dirty: BTreeSet<Attr>,
    pub history: EpisodeHistory,
}

/// One symbolic device effect: an optional power target and an optional
/// attribute move (`true` = away from its initial value, `false` = back to
/// it). Either part that is already satisfied is a no-op.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SymbolicMove {
    pub power: Option<Power>,
    pub attr: Option<(Attr, bool)>,
}

/// Everything derivable from a goal: observation, classification, rewards,
/// the state space.
#[derive(Debug, Clone)]
pub struct GoalMachine {
    goal: GoalSpec,
    attrs: Vec<Attr>,
    required: Vec<OrderEvent>,
    final_power: Power,
}

impl GoalMachine {
    pub fn new(goal: &GoalSpec) -> Result<Self, GoalError> {
        goal.validate()?;
        let attrs = goal.attrs();
        // With no explicit order, the goal is simply "change every tracked
        // attribute"; with one, the listed events are the whole job and the
        // unlisted attributes must end up untouched.
        let required: Vec<OrderEvent> = match &goal.required_order {
            Some(order) => order.clone(),
            None => attrs.iter().map(|a| OrderEvent::Changed(*a)).collect(),
        };
        let final_power = required
            .iter()
            .rev()
            .find_map(|ev| match ev {
                OrderEvent::PowerOn => Some(Power::On),
                OrderEvent::PowerOff => Some(Power::Off),
                OrderEvent::Changed(_) => None,
            })
            .unwrap_or(goal.initial.power);
        Ok(GoalMachine {
            goal: goal.clone(),
            attrs,
            required,
            final_power,
        })
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    /// Events that must all fire for success.
    pub fn required_events(&self) -> &[OrderEvent] {
        &self.required
    }

    /// Power state the device must be in at the moment of success.
    pub fn final_power(&self) -> Power {
        self.final_power
    }

    pub fn initial_abstract(&self) -> AbstractState {
        let history = EpisodeHistory::new();
        let dirty = BTreeSet::new();
        let terminal = self.classify_config(self.goal.initial.power, &dirty, &history, false);
        AbstractState {
            power: self.goal.initial.power,
            changed: dirty,
            order_ok: true,
            terminal,
        }
    }

    /// Condense one observed device transition. `episode_initial` is the
    /// device state the episode started from; `history` carries the episode's
    /// latches and is updated in place.
    pub fn observe(
        &self,
        episode_initial: &BulbState,
        before: &BulbState,
        after: &BulbState,
        history: &mut EpisodeHistory,
    ) -> AbstractState {
        let mut events = Vec::with_capacity(1 + self.attrs.len());
        if before.power != after.power {
            events.push(if after.power == Power::On {
                OrderEvent::PowerOn
            } else {
                OrderEvent::PowerOff
            });
        }
        for attr in &self.attrs {
            if !attr_eq(before, after, *attr) {
                events.push(OrderEvent::Changed(*attr));
            }
        }
        self.ingest(history, &events);
        let changed: BTreeSet<Attr> = self
            .attrs
            .iter()
            .copied()
            .filter(|a| !attr_eq(episode_initial, after, *a))
            .collect();
        let switched_off = before.power == Power::On && after.power == Power::Off;
        let terminal = self.classify_config(after.power, &changed, history, switched_off);
        AbstractState {
            power: after.power,
            changed,
            order_ok: history.order_ok,
            terminal,
        }
    }

    /// Latch new events, in the given order, breaking `order_ok` on the first
    /// event that is not the next element of the required sequence.
    fn ingest(&self, history: &mut EpisodeHistory, events: &[OrderEvent]) {
        for ev in events {
            if history.fired.contains(ev) {
                continue;
            }
            if self.goal.required_order.is_some() && history.order_ok {
                let pos = history.fired.len();
                if self.required.get(pos) != Some(ev) {
                    history.order_ok = false;
                }
            }
            history.fired.insert(*ev);
        }
    }

    /// The one definition of success and failure.
    ///
    /// Success: every required event has fired, the power is in its goal-final
    /// position, every attribute the goal wants changed currently differs from
    /// its initial value, and every other tracked attribute has been left (or
    /// put back) at its initial value.
    ///
    /// Failure: for a goal that must end powered on, switching the bulb off
    /// kills the attempt — a dead bulb takes no further commands. For a goal
    /// that itself ends in the off state, an early off-switch merely breaks
    /// the required order and the episode continues (the bulb can be turned
    /// back on); but reaching the off state with a must-stay-constant
    /// attribute changed fails outright, complete or not — the attempt ended
    /// with the device visibly wrong.
    fn classify_config(
        &self,
        power: Power,
        dirty: &BTreeSet<Attr>,
        history: &EpisodeHistory,
        switched_off: bool,
    ) -> Terminal {
        let all_fired = self.required.iter().all(|e| history.fired.contains(e));
        let power_ok = power == self.final_power;
        let to_change: Vec<Attr> = self
            .required
            .iter()
            .filter_map(|e| match e {
                OrderEvent::Changed(a) => Some(*a),
                _ => None,
            })
            .collect();
        let change_ok = to_change.iter().all(|a| dirty.contains(a));
        let constant_ok = self
            .attrs
            .iter()
            .all(|a| to_change.contains(a) || !dirty.contains(a));
        if all_fired && power_ok && change_ok && constant_ok {
            Terminal::Success {
                ordered: history.order_ok,
            }
        } else if switched_off && self.final_power == Power::On {
            Terminal::Fail
        } else if switched_off && !constant_ok {
            Terminal::Fail
        } else {
            Terminal::None
        }
    }

    /// Score a step that ended in `next`.
    pub fn classify(&self, next: &AbstractState, command_failed: bool) -> StepClass {
        match next.terminal {
            Terminal::Success { ordered } => StepClass::Success { ordered },
            Terminal::Fail => StepClass::Fail,
            Terminal::None => {
                if command_failed {
                    StepClass::CommandError
                } else {
                    StepClass::Normal
                }
            }
        }
    }

    pub fn reward(&self, class: StepClass) -> i64 {
        let r = &self.goal.rewards;
        match class {
            StepClass::Normal => r.step,
            StepClass::CommandError => r.error,
            StepClass::Fail => r.step + r.fail,
            StepClass::Success { ordered: true } => r.step + r.success,
            StepClass::Success { ordered: false } => {
                debug_assert!(
                    r.unordered_success.is_some(),
                    "unordered success in a goal without an unordered reward"
                );
                r.step + r.unordered_success.unwrap_or(r.fail)
            }
        }
    }

    /// Fold the time budget in: a live state at `t >= t_max` is a timeout.
    pub fn is_terminal(&self, state: &AbstractState, t: u32) -> TerminalKind {
        match state.terminal {
            Terminal::Success { .. } => TerminalKind::Success,
            Terminal::Fail => TerminalKind::Fail,
            Terminal::None => {
                if t >= self.goal.t_max {
                    TerminalKind::Timeout
                } else {
                    TerminalKind::None
                }
            }
        }
    }

    /// Human- and CSV-friendly state name. Live states read as a diff against
    /// the episode start (`start`, `+on+name`, `+color*`); the trailing `*`
    /// marks a broken required order. Terminal states get bang-labels.
    pub fn label(&self, state: &AbstractState) -> String {
        match state.terminal {
            Terminal::Success { .. } => "!success".to_string(),
            Terminal::Fail => "!fail".to_string(),
            Terminal::None => {
                let mut out = String::new();
                if state.power != self.goal.initial.power {
                    out.push_str(match state.power {
                        Power::On => "+on",
                        Power::Off => "+off",
                    });
                }
                for attr in &self.attrs {
                    if state.changed.contains(attr) {
                        out.push('+');
                        out.push_str(attr.token());
                    }
                }
                if out.is_empty() {
                    out.push_str("start");
                }
                if !state.order_ok {
                    out.push('*');
                }
                out
            }
        }
    }

    pub fn symbolic_initial(&self) -> SymbolicState {
        SymbolicState {
            power: self.goal.initial.power,
            dirty: BTreeSet::new(),
            history: EpisodeHistory::new(),
        }
    }

    /// Apply one symbolic effect. Power is applied before the attribute move,
    /// mirroring how simultaneous real changes are ordered in [`Self::observe`].
    pub fn symbolic_step(&self, state: &SymbolicState, mv: SymbolicMove) -> (SymbolicState, Terminal) {
        let mut next = state.clone();
        let mut events = Vec::with_capacity(2);
        let mut switched_off = false;
        if let Some(target) = mv.power {
            if target != next.power {
                switched_off = target == Power::Off;
                next.power = target;
                events.push(match target {
                    Power::On => OrderEvent::PowerOn,
                    Power::Off => OrderEvent::PowerOff,
                });
            }
        }
        if let Some((attr, to_dirty)) = mv.attr {
            let is_dirty = next.dirty.contains(&attr);
            if to_dirty != is_dirty {
                if to_dirty {
                    next.dirty.insert(attr);
                } else {
                    next.dirty.remove(&attr);
                }
                events.push(OrderEvent::Changed(attr));
            }
            // dirty -> dirty is a real value change but no abstract movement,
            // and its latch necessarily fired when the attribute first left
            // its initial value; clean -> clean is no change at all.
        }
        self.ingest(&mut next.history, &events);
        let terminal = self.classify_config(next.power, &next.dirty, &next.history, switched_off);
        (next, terminal)
    }

    pub fn abstract_of(&self, state: &SymbolicState, terminal: Terminal) -> AbstractState {
        AbstractState {
            power: state.power,
            changed: state.dirty.clone(),
            order_ok: state.history.order_ok,
            terminal,
        }
    }

    /// The generic move set for state-space exploration: flip the power, or
    /// move one tracked attribute toward/away from its initial value.
    pub fn generic_moves(&self, state: &SymbolicState) -> Vec<SymbolicMove> {
        let mut moves = Vec::with_capacity(1 + self.attrs.len());
        moves.push(SymbolicMove {
            power: Some(state.power.flipped()),
            attr: None,
        });
        for attr in &self.attrs {
            moves.push(SymbolicMove {
                power: None,
                attr: Some((*attr, !state.dirty.contains(attr))),
            });
        }
        moves
    }

    /// Every reachable live (non-terminal) state label, in deterministic BFS
    /// order starting from `start`. This is the Q-table's row set: fixed
    /// before learning starts, identical across runs.
    pub fn enumerate_states(&self) -> Vec<String> {
        let start = self.symbolic_initial();
        let mut labels = Vec::new();
        let mut seen_labels = BTreeSet::new();
        let mut visited = BTreeSet::new();
        let mut queue = std::collections::VecDeque::new();
        let start_terminal = self.classify_config(start.power, &start.dirty, &start.history, false);
        if start_terminal != Terminal::None {
            return labels;
        }
        let label = self.label(&self.abstract_of(&start, start_terminal));
        seen_labels.insert(label.clone());
        labels.push(label);
        visited.insert(start.clone());
        queue.push_back(start);
        while let Some(state) = queue.pop_front() {
            for mv in self.generic_moves(&state) {
                let (next, terminal) = self.symbolic_step(&state, mv);
                if terminal != Terminal::None {
                    continue;
                }
                if visited.insert(next.clone()) {
                    let label = self.label(&self.abstract_of(&next, terminal));
                    if seen_labels.insert(label.clone()) {
                        labels.push(label);
                    }
                    queue.push_back(next);
                }
            }
        }
        labels
    }
}

fn attr_eq(a: &BulbState, b: &BulbState, attr: Attr) -> bool {
    match attr {
        Attr::Color => a.rgb == b.rgb,
        Attr::Brightness => a.bright == b.bright,
        Attr::Name => a.name == b.name,
    }
}
