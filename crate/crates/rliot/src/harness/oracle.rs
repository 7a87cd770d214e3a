//! Exhaustive optimal-path search over the goal abstraction.
//!
//! Independent of any learned table: enumerates what the *device* can do —
//! which abstract effects its supported methods can produce with suitable
//! parameters — and breadth-first-searches the goal machine for the
//! shortest command sequences that reach success. The result is the yard
//! stick training runs are measured against.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::bulb::{DeviceProfile, Power};
use crate::env::machine::{SymbolicMove, SymbolicState};
use crate::env::{Attr, GoalMachine, GoalSpec, Terminal};
use crate::protocol::MessageDictionary;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Whether success is reachable at all with the supported methods.
    pub reachable: bool,
    /// Length of the shortest successful sequence.
    pub length: u32,
    /// Episode reward of the best shortest sequence: one step cost per
    /// command plus the terminal bonus its ordering earns.
    pub best_reward: i64,
    /// Every shortest effect sequence achieving `best_reward`, sorted.
    /// Steps are named by what they do to the abstract state, e.g.
    /// `change_color` or `power_on+change_color` for a compound effect.
    pub sequences: Vec<Vec<String>>,
    /// Live-state labels along the first best sequence, starting label
    /// first — the states an optimal agent passes through.
    pub path_states: Vec<String>,
}

/// What a method can do to the abstract state, before resolving against a
/// concrete situation. `flip` covers toggles, whose direction depends on
/// where the power currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PowerEffect {
    Keep,
    Set(Power),
    Flip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Effect {
    power: PowerEffect,
    attr: Option<(Attr, bool)>,
}

impl Effect {
    fn power(p: PowerEffect) -> Self {
        Effect { power: p, attr: None }
    }

    fn attr(attr: Attr, dirty: bool) -> Self {
        Effect {
            power: PowerEffect::Keep,
            attr: Some((attr, dirty)),
        }
    }

    fn resolve(&self, state: &SymbolicState) -> SymbolicMove {
        let power = match self.power {
            PowerEffect::Keep => None,
            PowerEffect::Set(p) => Some(p),
            PowerEffect::Flip => Some(state.power.flipped()),
        };
        SymbolicMove {
            power,
            attr: self.attr,
        }
    }
}

/// The abstract effects one method can produce, restricted to attributes
/// the goal tracks. "Can produce" means there exist parameters doing it in
/// one command: setters can both dirty an attribute and put it back,
/// relative adjusters can only dirty colour (one hue step never returns),
/// and the off-by-zero conventions of `set_rgb` and `adjust_bright` make
/// them power switches too.
fn method_effects(method: &str, tracked: &BTreeSet<Attr>) -> Vec<Effect> {
    use PowerEffect::{Flip, Set};
    let color = tracked.contains(&Attr::Color);
    let bright = tracked.contains(&Attr::Brightness);
    let name = tracked.contains(&Attr::Name);
    let mut out = Vec::new();
    match method {
        "set_power" => {
            out.push(Effect::power(Set(Power::On)));
            out.push(Effect::power(Set(Power::Off)));
        }
        "toggle" | "dev_toggle" => out.push(Effect::power(Flip)),
        "set_rgb" => {
            if color {
                out.push(Effect::attr(Attr::Color, true));
                out.push(Effect::attr(Attr::Color, false));
            }
            // Value 0 switches the bulb off and leaves the colour alone.
            out.push(Effect::power(Set(Power::Off)));
        }
        "set_hsv" => {
            if color {
                out.push(Effect::attr(Attr::Color, true));
                out.push(Effect::attr(Attr::Color, false));
            }
        }
        "set_bright" => {
            if bright {
                out.push(Effect::attr(Attr::Brightness, true));
                out.push(Effect::attr(Attr::Brightness, false));
            }
        }
        "set_scene" => {
            // Always powers on and sets a colour in the same command.
            if color {
                out.push(Effect {
                    power: Set(Power::On),
                    attr: Some((Attr::Color, true)),
                });
                out.push(Effect {
                    power: Set(Power::On),
                    attr: Some((Attr::Color, false)),
                });
            } else {
                out.push(Effect::power(Set(Power::On)));
            }
        }
        "set_name" => {
            if name {
                out.push(Effect::attr(Attr::Name, true));
                out.push(Effect::attr(Attr::Name, false));
            }
        }
        "adjust_bright" => {
            if bright {
                out.push(Effect::attr(Attr::Brightness, true));
                out.push(Effect::attr(Attr::Brightness, false));
            }
            // Adjusting to zero or below switches off, brightness kept.
            out.push(Effect::power(Set(Power::Off)));
        }
        "set_adjust" => {
            if bright {
                out.push(Effect::attr(Attr::Brightness, true));
            }
            if color {
                out.push(Effect::attr(Attr::Color, true));
            }
        }
        "adjust_color" => {
            if color {
                out.push(Effect::attr(Attr::Color, true));
            }
        }
        // Everything else only touches untracked registers (colour
        // temperature, defaults, flows, cron) or reads state.
        _ => {}
    }
    out
}

fn transition_label(machine: &GoalMachine, before: &SymbolicState, next: &SymbolicState) -> String {
    let mut parts: Vec<String> = Vec::new();
    if before.power != next.power {
        parts.push(
            match next.power {
                Power::On => "power_on",
                Power::Off => "power_off",
            }
            .to_string(),
        );
    }
    for attr in machine.goal().attrs() {
        let was = before.dirty.contains(&attr);
        let is = next.dirty.contains(&attr);
        if was != is {
            let verb = if is { "change" } else { "revert" };
            parts.push(format!("{verb}_{}", attr.token()));
        }
    }
    parts.join("+")
}

struct Paths {
    labels: Vec<Vec<String>>,
    states: Vec<Vec<SymbolicState>>,
}

/// All shortest label paths from the start to `state`, with the live
/// states they pass through (start included, `state` included).
fn shortest_paths(
    state: &SymbolicState,
    start: &SymbolicState,
    parents: &BTreeMap<SymbolicState, BTreeSet<(SymbolicState, String)>>,
) -> Paths {
    if state == start {
        return Paths {
            labels: vec![Vec::new()],
            states: vec![vec![start.clone()]],
        };
    }
    let mut labels = Vec::new();
    let mut states = Vec::new();
    for (pred, label) in parents.get(state).into_iter().flatten() {
        let sub = shortest_paths(pred, start, parents);
        for (mut l, mut s) in sub.labels.into_iter().zip(sub.states) {
            l.push(label.clone());
            s.push(state.clone());
            labels.push(l);
            states.push(s);
        }
    }
    Paths { labels, states }
}

/// Search the goal machine for the best shortest path to success, given
/// what this device and dictionary can actually do.
pub fn oracle_optimal_path(
    goal: &GoalSpec,
    dict: &MessageDictionary,
    profile: &DeviceProfile,
) -> Result<OracleResult, HarnessError> {
    let machine = GoalMachine::new(goal)?;
    let tracked: BTreeSet<Attr> = goal.attrs().into_iter().collect();
    let mut effects: BTreeSet<Effect> = BTreeSet::new();
    for method in dict.methods() {
        if profile.supported.contains(&method.name) {
            effects.extend(method_effects(&method.name, &tracked));
        }
    }

    let start = machine.symbolic_initial();
    let mut dist: BTreeMap<SymbolicState, u32> = BTreeMap::new();
    let mut parents: BTreeMap<SymbolicState, BTreeSet<(SymbolicState, String)>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    dist.insert(start.clone(), 0);
    queue.push_back(start.clone());
    // (predecessor, final step label, ordered) for every success found at
    // the shortest depth.
    let mut hits: Vec<(SymbolicState, String, bool)> = Vec::new();
    let mut hit_depth: Option<u32> = None;

    while let Some(state) = queue.pop_front() {
        let d = dist[&state];
        if hit_depth.is_some_and(|hd| d + 1 > hd) {
            break;
        }
        for effect in &effects {
            let mv = effect.resolve(&state);
            let (next, terminal) = machine.symbolic_step(&state, mv);
            if next == state {
                continue;
            }
            let label = transition_label(&machine, &state, &next);
            match terminal {
                Terminal::Success { ordered } => {
                    hit_depth.get_or_insert(d + 1);
                    hits.push((state.clone(), label, ordered));
                }
                Terminal::Fail => {}
                Terminal::None => {
                    let seen = dist.contains_key(&next);
                    if !seen {
                        dist.insert(next.clone(), d + 1);
                        queue.push_back(next.clone());
                    }
                    if dist[&next] == d + 1 {
                        parents
                            .entry(next)
                            .or_default()
                            .insert((state.clone(), label));
                    }
                }
            }
        }
    }

    let Some(length) = hit_depth else {
        return Ok(OracleResult {
            reachable: false,
            length: 0,
            best_reward: 0,
            sequences: Vec::new(),
            path_states: Vec::new(),
        });
    };

    let r = &goal.rewards;
    let bonus = |ordered: bool| {
        if ordered {
            r.success
        } else {
            r.unordered_success.unwrap_or(r.fail)
        }
    };
    let best_reward = hits
        .iter()
        .map(|(_, _, ordered)| length as i64 * r.step + bonus(*ordered))
        .max()
        .expect("at least one hit at the shortest depth");

    let mut sequences: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut path_states: Vec<String> = Vec::new();
    for (pred, label, ordered) in &hits {
        if length as i64 * r.step + bonus(*ordered) != best_reward {
            continue;
        }
        let paths = shortest_paths(pred, &start, &parents);
        for (mut labels, states) in paths.labels.into_iter().zip(paths.states) {
            labels.push(label.clone());
            let fresh = sequences.insert(labels);
            if fresh && path_states.is_empty() {
                path_states = states
                    .iter()
                    .map(|s| machine.label(&machine.abstract_of(s, Terminal::None)))
                    .collect();
            }
        }
    }

    Ok(OracleResult {
        reachable: true,
        length,
        best_reward,
        sequences: sequences.into_iter().collect(),
        path_states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtin() -> (MessageDictionary, DeviceProfile) {
        (MessageDictionary::builtin_yeelight(), DeviceProfile::builtin())
    }

    #[test]
    fn first_goal_takes_two_commands_either_way() {
        let (dict, profile) = builtin();
        let goal = GoalSpec::builtin_goal1();
        let res = oracle_optimal_path(&goal, &dict, &profile).unwrap();
        assert!(res.reachable);
        assert_eq!(res.length, 2);
        assert_eq!(res.best_reward, 203);
        assert_eq!(
            res.sequences,
            vec![
                vec!["change_bright".to_string(), "change_color".to_string()],
                vec!["change_color".to_string(), "change_bright".to_string()],
            ]
        );
        assert_eq!(res.path_states.len(), 2);
        assert_eq!(res.path_states[0], "start");
    }

    #[test]
    fn second_goal_has_one_four_command_solution() {
        let (dict, profile) = builtin();
        let goal = GoalSpec::builtin_goal2();
        let res = oracle_optimal_path(&goal, &dict, &profile).unwrap();
        assert!(res.reachable);
        assert_eq!(res.length, 4);
        assert_eq!(res.best_reward, 218);
        assert_eq!(
            res.sequences,
            vec![vec![
                "power_on".to_string(),
                "change_name".to_string(),
                "change_bright".to_string(),
                "power_off".to_string(),
            ]]
        );
        assert_eq!(res.path_states.len(), 4);
        assert_eq!(res.path_states[0], "start");
        assert_eq!(res.path_states[3], "+on+name+bright");
    }

    #[test]
    fn stripped_device_can_make_goals_unreachable() {
        let (dict, mut profile) = builtin();
        let goal = GoalSpec::builtin_goal1();
        // Without any way to touch brightness the goal is out of reach.
        for m in ["set_bright", "adjust_bright", "set_adjust"] {
            profile.supported.remove(m);
        }
        let res = oracle_optimal_path(&goal, &dict, &profile).unwrap();
        assert!(!res.reachable);
        assert!(res.sequences.is_empty());
    }

    #[test]
    fn scene_shortcut_wins_when_power_and_color_combine() {
        // A goal that needs power on + colour changed, starting from off:
        // set_scene does both at once, so one command suffices.
        let (dict, profile) = builtin();
        let mut goal = GoalSpec::builtin_goal1();
        goal.initial.power = Power::Off;
        goal.tracked_attributes
            .retain(|t| *t != crate::env::TrackedField::Brightness);
        goal.required_order = Some(vec![
            crate::env::OrderEvent::PowerOn,
            crate::env::OrderEvent::Changed(Attr::Color),
        ]);
        let res = oracle_optimal_path(&goal, &dict, &profile).unwrap();
        assert!(res.reachable);
        assert_eq!(res.length, 1);
        assert_eq!(res.sequences, vec![vec!["power_on+change_color".to_string()]]);
    }
}
