//! Episode execution and exact replay.
//!
//! [`run_episode`] drives one training episode against a live environment
//! and records every transition; [`replay`] rebuilds the Q-table those logs
//! came from, bit for bit, with no device in sight. The symmetry is the
//! point: a training run's artifacts fully determine its table, so a log
//! file is as good as the run itself.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvSession, SessionError, TerminalKind};

use super::{
    q_learning_update, sarsa_lambda_update, sarsa_update, select_action, watkins_q_lambda_update,
    watkins_trace_decay, Algorithm, HyperParams, QTable, TraceTable,
};

/// One environment step as it entered the learning update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: u32,
    pub state: String,
    pub action: String,
    pub reward: i64,
    pub next_state: String,
    /// Whether the action belonged to the greedy set when it was chosen.
    pub greedy: bool,
    /// Whether the device rejected the command.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u32,
    pub terminal: TerminalKind,
    pub steps: u32,
    pub reward: i64,
    pub transitions: Vec<Transition>,
    /// On-policy algorithms choose one action beyond a truncated episode to
    /// bootstrap from; it is never executed, but replay needs it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_action: Option<String>,
}

fn state_of(q: &QTable, label: &str) -> usize {
    q.state_index(label)
        .unwrap_or_else(|| panic!("state {label:?} is outside the table"))
}

fn action_of(q: &QTable, label: &str) -> usize {
    q.action_index(label)
        .unwrap_or_else(|| panic!("action {label:?} is outside the table"))
}

/// Run one ε-greedy training episode, updating `q` (and `traces`, for the
/// trace algorithms) in place.
///
/// All four algorithms make identical RNG calls in identical order — one
/// selection per executed step (plus the on-policy family's one extra
/// selection when an episode is cut off mid-flight), with parameter
/// sampling in between. Only the arithmetic differs, so λ = 0 reproduces
/// the matching one-step algorithm exactly, random stream included.
pub fn run_episode(
    env: &mut EnvSession,
    q: &mut QTable,
    traces: &mut TraceTable,
    hp: &HyperParams,
    algo: Algorithm,
    episode: u32,
    rng: &mut impl Rng,
) -> Result<EpisodeLog, SessionError> {
    env.reset()?;
    traces.clear();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut total = 0i64;
    let mut pending: Option<(usize, bool)> = None;
    let mut pending_action: Option<String> = None;
    let kind = loop {
        let s_label = env.label();
        let s = state_of(q, &s_label);
        let (a, greedy) = match pending.take() {
            Some(choice) => choice,
            None => select_action(q, s, hp.epsilon, rng),
        };
        let t = env.t();
        let outcome = env.step(a, rng)?;
        total += outcome.reward;
        let kind = env.terminal_kind();
        let next_label = env.label();
        transitions.push(Transition {
            t,
            state: s_label,
            action: env.dict().actions()[a].label.clone(),
            reward: outcome.reward,
            next_state: next_label.clone(),
            greedy,
            failed: outcome.command_failed,
        });
        let r = outcome.reward as f64;
        let live = kind == TerminalKind::None;
        // Success and failure end the trajectory for real: nothing to
        // bootstrap from. A truncation doesn't — the state is still live.
        let bootstrap = match kind {
            TerminalKind::Success | TerminalKind::Fail => None,
            TerminalKind::None | TerminalKind::Timeout => Some(state_of(q, &next_label)),
        };
        match algo {
            Algorithm::QLearning => {
                q_learning_update(q, s, a, r, bootstrap, hp);
            }
            Algorithm::QLambda => {
                watkins_q_lambda_update(q, traces, s, a, r, bootstrap, hp);
                if live {
                    let sn = bootstrap.expect("live step always has a next state");
                    let (an, gn) = select_action(q, sn, hp.epsilon, rng);
                    watkins_trace_decay(traces, gn, hp);
                    pending = Some((an, gn));
                }
            }
            Algorithm::Sarsa | Algorithm::SarsaLambda => {
                let next = bootstrap.map(|sn| {
                    let (an, gn) = select_action(q, sn, hp.epsilon, rng);
                    if live {
                        pending = Some((an, gn));
                    } else {
                        pending_action = Some(env.dict().actions()[an].label.clone());
                    }
                    (sn, an)
                });
                if algo == Algorithm::Sarsa {
                    sarsa_update(q, s, a, r, next, hp);
                } else {
                    sarsa_lambda_update(q, traces, s, a, r, next, hp);
                }
            }
        }
        if !live {
            break kind;
        }
    };
    Ok(EpisodeLog {
        episode,
        terminal: kind,
        steps: transitions.len() as u32,
        reward: total,
        transitions,
        pending_action,
    })
}

/// Run one evaluation episode: greedy policy, no learning.
pub fn run_greedy_episode(
    env: &mut EnvSession,
    q: &QTable,
    episode: u32,
    rng: &mut impl Rng,
) -> Result<EpisodeLog, SessionError> {
    env.reset()?;
    let mut transitions: Vec<Transition> = Vec::new();
    let mut total = 0i64;
    let kind = loop {
        let s_label = env.label();
        let s = state_of(q, &s_label);
        let (a, greedy) = select_action(q, s, 0.0, rng);
        let t = env.t();
        let outcome = env.step(a, rng)?;
        total += outcome.reward;
        let kind = env.terminal_kind();
        transitions.push(Transition {
            t,
            state: s_label,
            action: env.dict().actions()[a].label.clone(),
            reward: outcome.reward,
            next_state: env.label(),
            greedy,
            failed: outcome.command_failed,
        });
        if kind != TerminalKind::None {
            break kind;
        }
    };
    Ok(EpisodeLog {
        episode,
        terminal: kind,
        steps: transitions.len() as u32,
        reward: total,
        transitions,
        pending_action: None,
    })
}

/// Rebuild the Q-table a sequence of training episodes produced. Applies
/// the same updates in the same order from the recorded transitions; the
/// result is bitwise identical to the live table.
pub fn replay(
    logs: &[EpisodeLog],
    states: &[String],
    actions: &[String],
    hp: &HyperParams,
    algo: Algorithm,
) -> QTable {
    let mut q = QTable::new(states.to_vec(), actions.to_vec());
    let mut traces = TraceTable::like(&q);
    for log in logs {
        traces.clear();
        let n = log.transitions.len();
        for (k, tr) in log.transitions.iter().enumerate() {
            let s = state_of(&q, &tr.state);
            let a = action_of(&q, &tr.action);
            let r = tr.reward as f64;
            let last = k + 1 == n;
            let bootstrap = if tr.next_state.starts_with('!') {
                None
            } else {
                Some(state_of(&q, &tr.next_state))
            };
            match algo {
                Algorithm::QLearning => {
                    q_learning_update(&mut q, s, a, r, bootstrap, hp);
                }
                Algorithm::QLambda => {
                    watkins_q_lambda_update(&mut q, &mut traces, s, a, r, bootstrap, hp);
                    if !last {
                        watkins_trace_decay(&mut traces, log.transitions[k + 1].greedy, hp);
                    }
                }
                Algorithm::Sarsa | Algorithm::SarsaLambda => {
                    let next = bootstrap.map(|sn| {
                        let an_label = if last {
                            log.pending_action
                                .as_deref()
                                .expect("truncated episode without a recorded follow-up action")
                        } else {
                            log.transitions[k + 1].action.as_str()
                        };
                        (sn, action_of(&q, an_label))
                    });
                    if algo == Algorithm::Sarsa {
                        sarsa_update(&mut q, s, a, r, next, hp);
                    } else {
                        sarsa_lambda_update(&mut q, &mut traces, s, a, r, next, hp);
                    }
                }
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn tr(t: u32, s: &str, a: &str, r: i64, next: &str, greedy: bool) -> Transition {
        Transition {
            t,
            state: s.to_string(),
            action: a.to_string(),
            reward: r,
            next_state: next.to_string(),
            greedy,
            failed: false,
        }
    }

    fn log_of(terminal: TerminalKind, transitions: Vec<Transition>) -> EpisodeLog {
        let reward = transitions.iter().map(|t| t.reward).sum();
        EpisodeLog {
            episode: 0,
            terminal,
            steps: transitions.len() as u32,
            reward,
            transitions,
            pending_action: None,
        }
    }

    #[test]
    fn replay_applies_q_learning_in_order() {
        let states = labels(&["s0", "s1"]);
        let actions = labels(&["x", "y"]);
        let hp = HyperParams::default();
        let log = log_of(
            TerminalKind::Success,
            vec![
                tr(0, "s0", "x", -1, "s1", true),
                tr(1, "s1", "y", 204, "!success", false),
            ],
        );
        let replayed = replay(&[log], &states, &actions, &hp, Algorithm::QLearning);

        let mut manual = QTable::new(states, actions);
        q_learning_update(&mut manual, 0, 0, -1.0, Some(1), &hp);
        q_learning_update(&mut manual, 1, 1, 204.0, None, &hp);
        assert!(replayed.same_values(&manual));
        assert!((replayed.value(1, 1) - 20.4).abs() < 1e-12);
    }

    #[test]
    fn replay_sarsa_reads_the_follow_up_from_the_log() {
        let states = labels(&["s0", "s1"]);
        let actions = labels(&["x", "y"]);
        let hp = HyperParams::default();
        let mut log = log_of(
            TerminalKind::Timeout,
            vec![
                tr(0, "s0", "x", -1, "s1", true),
                tr(1, "s1", "x", -1, "s0", true),
            ],
        );
        log.pending_action = Some("y".to_string());
        let replayed = replay(&[log], &states, &actions, &hp, Algorithm::Sarsa);

        let mut manual = QTable::new(states, actions);
        // Step 0 bootstraps from the action the log says came next (x);
        // the truncated final step bootstraps from the pending action (y).
        sarsa_update(&mut manual, 0, 0, -1.0, Some((1, 0)), &hp);
        sarsa_update(&mut manual, 1, 0, -1.0, Some((0, 1)), &hp);
        assert!(replayed.same_values(&manual));
    }

    #[test]
    fn replay_watkins_decays_by_recorded_greediness() {
        let states = labels(&["s0", "s1", "s2"]);
        let actions = labels(&["x"]);
        let hp = HyperParams {
            alpha: 0.5,
            gamma: 0.5,
            lambda: 0.5,
            ..HyperParams::default()
        };
        // Greedy follow-up after step 0 keeps the trace; the exploratory
        // one after step 1 kills it before step 2's sweep.
        let log = log_of(
            TerminalKind::Fail,
            vec![
                tr(0, "s0", "x", -1, "s1", true),
                tr(1, "s1", "x", -1, "s2", true),
                tr(2, "s2", "x", -1, "!fail", false),
            ],
        );
        let replayed = replay(&[log], &states, &actions, &hp, Algorithm::QLambda);

        let mut manual = QTable::new(states.clone(), actions.clone());
        let mut e = TraceTable::like(&manual);
        watkins_q_lambda_update(&mut manual, &mut e, 0, 0, -1.0, Some(1), &hp);
        watkins_trace_decay(&mut e, true, &hp);
        watkins_q_lambda_update(&mut manual, &mut e, 1, 0, -1.0, Some(2), &hp);
        watkins_trace_decay(&mut e, false, &hp);
        watkins_q_lambda_update(&mut manual, &mut e, 2, 0, -1.0, None, &hp);
        assert!(replayed.same_values(&manual));
        // The cleared trace means step 2 left s0 alone.
        assert_eq!(replayed.value(0, 0), manual.value(0, 0));
        assert_eq!(replayed.value(0, 0), -0.625);
    }

    #[test]
    fn replay_resets_traces_between_episodes() {
        let states = labels(&["s0", "s1"]);
        let actions = labels(&["x"]);
        let hp = HyperParams {
            alpha: 0.5,
            gamma: 0.5,
            lambda: 0.9,
            ..HyperParams::default()
        };
        let ep = |r| {
            log_of(
                TerminalKind::Fail,
                vec![
                    tr(0, "s0", "x", r, "s1", true),
                    tr(1, "s1", "x", r, "!fail", true),
                ],
            )
        };
        let replayed = replay(
            &[ep(-1), ep(-1)],
            &states,
            &actions,
            &hp,
            Algorithm::SarsaLambda,
        );
        let mut manual = QTable::new(states, actions);
        let mut e = TraceTable::like(&manual);
        for _ in 0..2 {
            e.clear();
            sarsa_lambda_update(&mut manual, &mut e, 0, 0, -1.0, Some((1, 0)), &hp);
            sarsa_lambda_update(&mut manual, &mut e, 1, 0, -1.0, None, &hp);
        }
        assert!(replayed.same_values(&manual));
    }

    #[test]
    fn episode_log_round_trips_through_json() {
        let mut log = log_of(
            TerminalKind::Timeout,
            vec![tr(0, "start", "toggle", -1, "+color", false)],
        );
        log.pending_action = Some("set_rgb".to_string());
        let text = serde_json::to_string(&log).unwrap();
        let back: EpisodeLog = serde_json::from_str(&text).unwrap();
        assert_eq!(back, log);
        // Terminal kinds serialise as snake_case strings.
        assert!(text.contains("\"timeout\""));
    }
}
