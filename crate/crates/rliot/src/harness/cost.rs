//! Training-cost accounting over an experiment's artifact directory.
//!
//! Reads the manifest and episode logs back from disk — deliberately not
//! the in-memory report, so the numbers always describe what was actually
//! written — and summarises what the training spent and when it paid off.

use std::path::Path;

use serde::Serialize;

use crate::metrics::{crossover, RunSeries};

use super::{read_episode_logs, read_manifest, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunCost {
    pub run: u32,
    pub episodes: u32,
    /// Training actions taken (environment steps; state queries excluded).
    pub training_actions: u64,
    /// Everything the connection carried, feedback and resets included.
    pub wire_commands: u64,
    /// 1-based action count after which cumulative reward turned positive.
    pub crossover: Option<usize>,
    pub final_cumulative: i64,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub runs: Vec<RunCost>,
    pub runs_crossed: usize,
    /// Mean crossover point over the runs that crossed.
    pub mean_crossover: Option<f64>,
    pub total_training_actions: u64,
    pub total_wire_commands: u64,
    /// Wall time the wire traffic would need against a device limited to
    /// one command per second.
    pub projected_minutes_at_1hz: f64,
}

pub fn cost_report(dir: &Path) -> Result<CostReport, HarnessError> {
    let manifest = read_manifest(dir)?;
    let mut runs = Vec::with_capacity(manifest.runs.len());
    for mr in &manifest.runs {
        let logs = read_episode_logs(&dir.join(format!("run_{:02}", mr.run)).join("episodes.jsonl"))?;
        let series = RunSeries::from_logs(mr.run, &logs)?;
        let cum = series.cumulative();
        runs.push(RunCost {
            run: mr.run,
            episodes: logs.len() as u32,
            training_actions: series.action_rewards.len() as u64,
            wire_commands: mr.wire_commands,
            crossover: crossover(&cum),
            final_cumulative: cum.last().copied().unwrap_or(0),
            aborted: mr.abort.is_some(),
        });
    }
    let crossed: Vec<usize> = runs.iter().filter_map(|r| r.crossover).collect();
    let mean_crossover = if crossed.is_empty() {
        None
    } else {
        Some(crossed.iter().sum::<usize>() as f64 / crossed.len() as f64)
    };
    let total_training_actions = runs.iter().map(|r| r.training_actions).sum();
    let total_wire_commands: u64 = runs.iter().map(|r| r.wire_commands).sum();
    Ok(CostReport {
        runs,
        runs_crossed: crossed.len(),
        mean_crossover,
        total_training_actions,
        total_wire_commands,
        projected_minutes_at_1hz: total_wire_commands as f64 / 60.0,
    })
}

impl CostReport {
    /// Plain-text table for the command line.
    pub fn render(&self) -> String {
        let mut out = String::from("run  episodes  actions  wire_cmds  crossover  final_C\n");
        for r in &self.runs {
            let crossover = r
                .crossover
                .map_or("-".to_string(), |c| c.to_string());
            out.push_str(&format!(
                "{:>3}  {:>8}  {:>7}  {:>9}  {:>9}  {:>7}{}\n",
                r.run,
                r.episodes,
                r.training_actions,
                r.wire_commands,
                crossover,
                r.final_cumulative,
                if r.aborted { "  (aborted)" } else { "" },
            ));
        }
        out.push_str(&format!(
            "\ncrossed into profit: {}/{} runs{}\n",
            self.runs_crossed,
            self.runs.len(),
            self.mean_crossover
                .map_or(String::new(), |m| format!(" (mean crossover {m:.1} actions)")),
        ));
        out.push_str(&format!(
            "total: {} training actions, {} wire commands \
             ({:.1} min at 1 command/s)\n",
            self.total_training_actions, self.total_wire_commands, self.projected_minutes_at_1hz,
        ));
        out
    }
}
