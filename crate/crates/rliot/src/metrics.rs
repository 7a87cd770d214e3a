//! Training-run bookkeeping: per-episode reward and length series,
//! cumulative reward per action taken, moving averages, and the CSV
//! renderings the experiment runner writes to disk.
//!
//! Aggregation is ragged-tolerant throughout: an aborted run contributes to
//! every index it reached and simply drops out of the mean beyond that.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::EpisodeLog;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("inconsistent episode log: {0}")]
    Inconsistent(String),
}

/// The numeric skeleton of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub run: u32,
    /// Total reward per episode, in episode order.
    pub episode_rewards: Vec<i64>,
    /// Steps per episode, in episode order.
    pub episode_steps: Vec<u32>,
    /// Every step reward of the run, flattened across episodes in execution
    /// order — the x-axis for cost-of-training curves is actions, not
    /// episodes.
    pub action_rewards: Vec<i64>,
}

impl RunSeries {
    /// Distill logs into series, cross-checking each log's totals against
    /// its own transitions.
    pub fn from_logs(run: u32, logs: &[EpisodeLog]) -> Result<Self, MetricsError> {
        let mut episode_rewards = Vec::with_capacity(logs.len());
        let mut episode_steps = Vec::with_capacity(logs.len());
        let mut action_rewards = Vec::new();
        for (i, log) in logs.iter().enumerate() {
            if log.episode as usize != i {
                return Err(MetricsError::Inconsistent(format!(
                    "episode {} found at position {i}",
                    log.episode
                )));
            }
            let reward: i64 = log.transitions.iter().map(|t| t.reward).sum();
            if reward != log.reward {
                return Err(MetricsError::Inconsistent(format!(
                    "episode {i} claims reward {} but its transitions sum to {reward}",
                    log.reward
                )));
            }
            if log.steps as usize != log.transitions.len() {
                return Err(MetricsError::Inconsistent(format!(
                    "episode {i} claims {} steps but records {}",
                    log.steps,
                    log.transitions.len()
                )));
            }
            episode_rewards.push(reward);
            episode_steps.push(log.steps);
            action_rewards.extend(log.transitions.iter().map(|t| t.reward));
        }
        Ok(RunSeries {
            run,
            episode_rewards,
            episode_steps,
            action_rewards,
        })
    }

    /// Cumulative reward after each action, C(n) = Σ r_1..r_n.
    pub fn cumulative(&self) -> Vec<i64> {
        let mut total = 0i64;
        self.action_rewards
            .iter()
            .map(|r| {
                total += r;
                total
            })
            .collect()
    }

    /// Mean reward over the last `window` episodes (fewer if the run is
    /// shorter); the tuning objective.
    pub fn final_window_mean(&self, window: usize) -> f64 {
        let n = self.episode_rewards.len();
        if n == 0 {
            return f64::NEG_INFINITY;
        }
        let tail = &self.episode_rewards[n.saturating_sub(window.max(1))..];
        tail.iter().sum::<i64>() as f64 / tail.len() as f64
    }
}

/// 1-based index of the first action after which cumulative reward is
/// positive, if it ever is.
pub fn crossover(cumulative: &[i64]) -> Option<usize> {
    cumulative.iter().position(|c| *c > 0).map(|i| i + 1)
}

/// Trailing moving average: element i averages the last `min(window, i+1)`
/// values, so the series starts meaningfully instead of with a hole.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let from = (i + 1).saturating_sub(window);
            let slice = &values[from..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Positionwise mean of ragged series: index i averages over every series
/// long enough to have an i-th element.
pub fn aggregate(series: &[Vec<i64>]) -> Vec<f64> {
    let longest = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let present: Vec<i64> = series
                .iter()
                .filter_map(|s| s.get(i).copied())
                .collect();
            present.iter().sum::<i64>() as f64 / present.len() as f64
        })
        .collect()
}

/// Shared table shape: one index column, one column per run (blank once a
/// run ends), then a positionwise mean, optionally a moving average of it.
fn ragged_csv(
    index_name: &str,
    index_base: usize,
    runs: &[u32],
    columns: &[Vec<i64>],
    movavg_window: Option<usize>,
) -> String {
    let mean = aggregate(columns);
    let movavg = movavg_window.map(|w| moving_average(&mean, w));
    let mut out = String::from(index_name);
    for run in runs {
        out.push_str(&format!(",run_{run}"));
    }
    out.push_str(",mean");
    if movavg.is_some() {
        out.push_str(",movavg");
    }
    out.push('\n');
    for i in 0..mean.len() {
        out.push_str(&format!("{}", i + index_base));
        for c in columns {
            match c.get(i) {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        out.push_str(&format!(",{}", mean[i]));
        if let Some(ma) = &movavg {
            out.push_str(&format!(",{}", ma[i]));
        }
        out.push('\n');
    }
    out
}

fn run_ids(runs: &[RunSeries]) -> Vec<u32> {
    runs.iter().map(|r| r.run).collect()
}

/// `episode,run_*,mean,movavg` — reward per episode across runs.
pub fn reward_per_episode_csv(runs: &[RunSeries], movavg_window: usize) -> String {
    let columns: Vec<Vec<i64>> = runs.iter().map(|r| r.episode_rewards.clone()).collect();
    ragged_csv("episode", 0, &run_ids(runs), &columns, Some(movavg_window))
}

/// `episode,run_*,mean` — steps per episode across runs.
pub fn steps_per_episode_csv(runs: &[RunSeries]) -> String {
    let columns: Vec<Vec<i64>> = runs
        .iter()
        .map(|r| r.episode_steps.iter().map(|s| *s as i64).collect())
        .collect();
    ragged_csv("episode", 0, &run_ids(runs), &columns, None)
}

/// `n_a,run_*,mean` — cumulative reward against actions taken (1-based),
/// the curve whose zero crossing marks where training has paid for itself.
pub fn cumulative_vs_actions_csv(runs: &[RunSeries]) -> String {
    let columns: Vec<Vec<i64>> = runs.iter().map(RunSeries::cumulative).collect();
    ragged_csv("n_a", 1, &run_ids(runs), &columns, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Transition;
    use crate::env::TerminalKind;
    use proptest::prelude::*;

    fn log(episode: u32, rewards: &[i64]) -> EpisodeLog {
        let transitions = rewards
            .iter()
            .enumerate()
            .map(|(t, r)| Transition {
                t: t as u32,
                state: "s".into(),
                action: "a".into(),
                reward: *r,
                next_state: "s".into(),
                greedy: true,
                failed: false,
            })
            .collect::<Vec<_>>();
        EpisodeLog {
            episode,
            terminal: TerminalKind::Success,
            steps: transitions.len() as u32,
            reward: rewards.iter().sum(),
            transitions,
            pending_action: None,
        }
    }

    #[test]
    fn series_distills_and_validates_logs() {
        let logs = vec![log(0, &[-1, -1, 204]), log(1, &[203])];
        let s = RunSeries::from_logs(0, &logs).unwrap();
        assert_eq!(s.episode_rewards, vec![202, 203]);
        assert_eq!(s.episode_steps, vec![3, 1]);
        assert_eq!(s.action_rewards, vec![-1, -1, 204, 203]);

        let mut bad = vec![log(0, &[-1])];
        bad[0].reward = 99;
        assert!(RunSeries::from_logs(0, &bad).is_err());

        let mut bad = vec![log(0, &[-1])];
        bad[0].steps = 5;
        assert!(RunSeries::from_logs(0, &bad).is_err());

        let bad = vec![log(1, &[-1])];
        assert!(RunSeries::from_logs(0, &bad).is_err());
    }

    #[test]
    fn cumulative_is_a_prefix_sum() {
        let s = RunSeries {
            run: 0,
            episode_rewards: vec![],
            episode_steps: vec![],
            action_rewards: vec![-1, -10, 204, -1],
        };
        assert_eq!(s.cumulative(), vec![-1, -11, 193, 192]);
    }

    #[test]
    fn crossover_finds_the_first_profitable_action() {
        assert_eq!(crossover(&[-1, -2, -3]), None);
        assert_eq!(crossover(&[-5, 1, -2]), Some(2));
        assert_eq!(crossover(&[3]), Some(1));
        assert_eq!(crossover(&[]), None);
        // Zero is not yet profitable.
        assert_eq!(crossover(&[0, 0, 1]), Some(3));
    }

    #[test]
    fn moving_average_warms_up_then_slides() {
        let got = moving_average(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(got, vec![1.0, 1.5, 2.5, 3.5]);
        let got = moving_average(&[2.0, 4.0], 10);
        assert_eq!(got, vec![2.0, 3.0]);
    }

    #[test]
    fn aggregate_means_over_whatever_is_present() {
        let got = aggregate(&[vec![1, 2, 3], vec![3]]);
        assert_eq!(got, vec![2.0, 2.0, 3.0]);
        assert_eq!(aggregate(&[]), Vec::<f64>::new());
    }

    #[test]
    fn final_window_mean_takes_the_tail() {
        let s = RunSeries {
            run: 0,
            episode_rewards: vec![0, 0, 10, 20],
            episode_steps: vec![],
            action_rewards: vec![],
        };
        assert_eq!(s.final_window_mean(2), 15.0);
        assert_eq!(s.final_window_mean(10), 7.5);
    }

    #[test]
    fn csv_layouts_are_stable() {
        let runs = vec![
            RunSeries {
                run: 0,
                episode_rewards: vec![10, -1],
                episode_steps: vec![2, 3],
                action_rewards: vec![5, 5, -1],
            },
            RunSeries {
                run: 1,
                episode_rewards: vec![20],
                episode_steps: vec![1],
                action_rewards: vec![20],
            },
        ];
        assert_eq!(
            reward_per_episode_csv(&runs, 2),
            "episode,run_0,run_1,mean,movavg\n0,10,20,15,15\n1,-1,,-1,7\n"
        );
        assert_eq!(
            steps_per_episode_csv(&runs),
            "episode,run_0,run_1,mean\n0,2,1,1.5\n1,3,,3\n"
        );
        assert_eq!(
            cumulative_vs_actions_csv(&runs),
            "n_a,run_0,run_1,mean\n1,5,20,12.5\n2,10,,10\n3,9,,9\n"
        );
    }

    /// Independent formulation: windowed mean via prefix sums.
    fn movavg_by_prefix(values: &[f64], window: usize) -> Vec<f64> {
        let window = window.max(1);
        let mut prefix = vec![0.0];
        for v in values {
            prefix.push(prefix.last().unwrap() + v);
        }
        (0..values.len())
            .map(|i| {
                let from = (i + 1).saturating_sub(window);
                (prefix[i + 1] - prefix[from]) / (i + 1 - from) as f64
            })
            .collect()
    }

    proptest! {
        #[test]
        fn moving_average_agrees_with_prefix_sums(
            values in prop::collection::vec(-1000i64..1000, 0..200),
            window in 1usize..30,
        ) {
            let values: Vec<f64> = values.into_iter().map(|v| v as f64).collect();
            let a = moving_average(&values, window);
            let b = movavg_by_prefix(&values, window);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn crossover_is_consistent_with_the_series(
            rewards in prop::collection::vec(-20i64..25, 0..100),
        ) {
            let s = RunSeries { run: 0, episode_rewards: vec![], episode_steps: vec![], action_rewards: rewards };
            let cum = s.cumulative();
            match crossover(&cum) {
                Some(n) => {
                    prop_assert!(cum[n - 1] > 0);
                    prop_assert!(cum[..n - 1].iter().all(|c| *c <= 0));
                }
                None => prop_assert!(cum.iter().all(|c| *c <= 0)),
            }
        }
    }
}
