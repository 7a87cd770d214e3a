//! Hyperparameter sweeps: greedy coordinate descent over one grid per
//! parameter, scoring each candidate by late-training reward.
//!
//! One parameter is swept at a time — ε, then α, then γ, then λ for the
//! trace algorithms — holding the others at their current best. Candidates
//! are evaluated on fresh seeded runs, so the whole sweep is reproducible
//! from the base config's seed.

use serde::{Deserialize, Serialize};

use crate::agent::HyperParams;

use super::{derive_seed, run_experiment, ExperimentConfig, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepPlan {
    pub epsilon: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub runs_per_candidate: u32,
    pub episodes: u32,
    /// The objective averages episode reward over this many final episodes.
    pub objective_window: usize,
}

impl Default for SweepPlan {
    fn default() -> Self {
        SweepPlan {
            epsilon: vec![0.1, 0.2, 0.4, 0.6, 0.8],
            alpha: vec![0.01, 0.05, 0.1, 0.3],
            gamma: vec![0.35, 0.55, 0.75, 0.95],
            lambda: vec![0.1, 0.5, 0.9],
            runs_per_candidate: 5,
            episodes: 60,
            objective_window: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub value: f64,
    /// Mean over runs of the final-window mean episode reward.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStep {
    pub parameter: String,
    pub candidates: Vec<CandidateScore>,
    pub chosen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub initial: HyperParams,
    pub tuned: HyperParams,
    pub steps: Vec<SweepStep>,
}

fn field_of<'a>(hp: &'a mut HyperParams, parameter: &str) -> &'a mut f64 {
    match parameter {
        "epsilon" => &mut hp.epsilon,
        "alpha" => &mut hp.alpha,
        "gamma" => &mut hp.gamma,
        "lambda" => &mut hp.lambda,
        other => unreachable!("not a tunable parameter: {other}"),
    }
}

/// Sweep the base config's hyperparameters in place. The device settings,
/// goal, and algorithm come from `base`; run counts and episode budget from
/// the plan.
pub fn tune(base: &ExperimentConfig, plan: &SweepPlan) -> Result<TuneReport, HarnessError> {
    let mut current = base.hyperparams;
    let mut steps = Vec::new();
    let stages: [(&str, &[f64]); 4] = [
        ("epsilon", &plan.epsilon),
        ("alpha", &plan.alpha),
        ("gamma", &plan.gamma),
        ("lambda", &plan.lambda),
    ];
    for (stage, (parameter, grid)) in stages.into_iter().enumerate() {
        if grid.is_empty() {
            continue;
        }
        if parameter == "lambda" && !base.algorithm.uses_traces() {
            continue;
        }
        let mut candidates = Vec::with_capacity(grid.len());
        let mut best: Option<CandidateScore> = None;
        for (i, value) in grid.iter().enumerate() {
            let mut hp = current;
            *field_of(&mut hp, parameter) = *value;
            let cfg = ExperimentConfig {
                hyperparams: hp,
                runs: plan.runs_per_candidate,
                episodes: plan.episodes,
                seed: derive_seed(base.seed, ((stage as u64) << 32) | i as u64),
                eval_after: Vec::new(),
                ..base.clone()
            };
            let report = run_experiment(&cfg, None)?;
            let series = report.series()?;
            let objective = series
                .iter()
                .map(|s| s.final_window_mean(plan.objective_window))
                .sum::<f64>()
                / series.len() as f64;
            let score = CandidateScore {
                value: *value,
                objective,
            };
            candidates.push(score);
            // Strictly-greater keeps the earliest (lowest) value on ties.
            if best.is_none_or(|b| score.objective > b.objective) {
                best = Some(score);
            }
        }
        let chosen = best.expect("non-empty grid").value;
        *field_of(&mut current, parameter) = chosen;
        steps.push(SweepStep {
            parameter: parameter.to_string(),
            candidates,
            chosen,
        });
    }
    Ok(TuneReport {
        initial: base.hyperparams,
        tuned: current,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_match_the_documented_sweep() {
        let plan = SweepPlan::default();
        assert_eq!(plan.epsilon, vec![0.1, 0.2, 0.4, 0.6, 0.8]);
        assert_eq!(plan.alpha, vec![0.01, 0.05, 0.1, 0.3]);
        assert_eq!(plan.gamma, vec![0.35, 0.55, 0.75, 0.95]);
        assert_eq!(plan.lambda, vec![0.1, 0.5, 0.9]);
        assert_eq!(plan.runs_per_candidate, 5);
        assert_eq!(plan.objective_window, 10);
    }

    #[test]
    fn plan_deserializes_sparsely() {
        let plan: SweepPlan = serde_json::from_str(r#"{"alpha": [0.2], "episodes": 5}"#).unwrap();
        assert_eq!(plan.alpha, vec![0.2]);
        assert_eq!(plan.episodes, 5);
        assert_eq!(plan.epsilon.len(), 5);
    }
}
