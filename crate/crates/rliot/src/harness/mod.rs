//! Experiment orchestration: seeded multi-run training against spawned
//! simulators (or a real device), artifact writing, hyperparameter sweeps,
//! optimal-path search, and training-cost accounting.
//!
//! Everything a run produces is a pure function of its configuration and
//! seed: artifacts written twice from the same config are byte-identical,
//! which is why no timestamps or wall-clock readings appear in them.

mod cost;
mod heatmap;
mod oracle;
mod tune;

pub use cost::{cost_report, CostReport, RunCost};
pub use heatmap::heatmap_csv;
pub use oracle::{oracle_optimal_path, OracleResult};
pub use tune::{tune, CandidateScore, SweepPlan, SweepStep, TuneReport};

use std::collections::BTreeSet;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    run_episode, run_greedy_episode, Algorithm, EpisodeLog, HyperParams, QTable, TraceTable,
};
use crate::bulb::server::{serve, BulbServer};
use crate::bulb::{DeviceError, DeviceProfile};
use crate::env::{
    DeviceSession, EnvSession, GoalError, GoalMachine, GoalSpec, ResetStrategy, SessionError,
    TerminalKind,
};
use crate::metrics::{
    cumulative_vs_actions_csv, reward_per_episode_csv, steps_per_episode_csv, MetricsError,
    RunSeries,
};
use crate::protocol::{DictionaryError, MessageDictionary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Goal(#[from] GoalError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("bad configuration: {0}")]
    Config(String),
}

/// A complete experiment description. Serializable so a config file (and
/// the manifest embedded in every artifact directory) can reproduce a run
/// exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    /// `goal1`, `goal2`, or a path to a goal file.
    pub goal: String,
    /// `builtin` or a path to a method dictionary.
    pub dictionary: String,
    pub algorithm: Algorithm,
    pub hyperparams: HyperParams,
    pub episodes: u32,
    pub runs: u32,
    pub seed: u64,
    /// Extra greedy-evaluation checkpoints (episode counts); a final
    /// evaluation always happens.
    pub eval_after: Vec<u32>,
    pub movavg_window: usize,
    /// Address of an external device. `None` spawns one simulator per run.
    pub device: Option<String>,
    /// Spawn the simulator with its rate limiter armed.
    pub rate_limited_sim: bool,
    /// Delay between wire commands, in ms. Defaults to 0 against an
    /// unthrottled spawned simulator and 1000 otherwise.
    pub pacing_ms: Option<u64>,
    /// Reset between episodes with ordinary commands instead of the
    /// simulator's side channel (forced on for external devices).
    pub reset_via_commands: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            goal: "goal1".into(),
            dictionary: "builtin".into(),
            algorithm: Algorithm::QLearning,
            hyperparams: HyperParams::default(),
            episodes: 50,
            runs: 10,
            seed: 1,
            eval_after: Vec::new(),
            movavg_window: 10,
            device: None,
            rate_limited_sim: false,
            pacing_ms: None,
            reset_via_commands: false,
        }
    }
}

/// Mix a stream index into a base seed (splitmix64 finalizer). Gives every
/// run, and every evaluation within a run, its own well-separated RNG
/// stream from one user-facing seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EVAL_STREAM_TAG: u64 = 1 << 32;

/// Resolve a goal argument to the spec plus its raw JSON (for embedding in
/// the manifest).
pub fn load_goal(spec: &str) -> Result<(GoalSpec, String), HarnessError> {
    match spec {
        "goal1" => Ok((
            GoalSpec::builtin_goal1(),
            include_str!("../../data/goal1.json").to_string(),
        )),
        "goal2" => Ok((
            GoalSpec::builtin_goal2(),
            include_str!("../../data/goal2.json").to_string(),
        )),
        path => {
            let text = std::fs::read_to_string(path)?;
            Ok((GoalSpec::from_json(&text)?, text))
        }
    }
}

/// Resolve a dictionary argument to the dictionary plus its raw JSON.
pub fn load_dictionary(spec: &str) -> Result<(MessageDictionary, String), HarnessError> {
    match spec {
        "builtin" => Ok((
            MessageDictionary::builtin_yeelight(),
            include_str!("../../data/yeelight.dict").to_string(),
        )),
        path => {
            let text = std::fs::read_to_string(path)?;
            Ok((MessageDictionary::from_json(&text)?, text))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub after_episodes: u32,
    pub reward: i64,
    pub steps: u32,
    pub terminal: TerminalKind,
}

/// One finished (or aborted) training run, in memory.
#[derive(Debug)]
pub struct RunOutcome {
    pub run: u32,
    pub seed: u64,
    pub logs: Vec<EpisodeLog>,
    pub qtable: QTable,
    pub evals: Vec<EvalPoint>,
    pub wire_commands: u64,
    pub abort: Option<String>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub goal: GoalSpec,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub runs: Vec<RunOutcome>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentReport {
    pub fn series(&self) -> Result<Vec<RunSeries>, MetricsError> {
        self.runs
            .iter()
            .map(|r| RunSeries::from_logs(r.run, &r.logs))
            .collect()
    }
}

/// The reproducibility record written alongside every experiment's
/// artifacts: config, the exact goal and dictionary texts it resolved to,
/// the table axes, and each run's seed and fate.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub goal_source: String,
    pub dictionary_source: String,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestRun {
    pub run: u32,
    pub seed: u64,
    pub episodes_completed: u32,
    /// Total wire commands the run's connection carried: training actions,
    /// state queries, resets and evaluations together.
    pub wire_commands: u64,
    pub abort: Option<String>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, HarnessError> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Read one run's `episodes.jsonl` back into logs.
pub fn read_episode_logs(path: &Path) -> Result<Vec<EpisodeLog>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Run every configured training run (in parallel, one simulator each) and
/// write the artifact tree under `out_dir` if given.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport, HarnessError> {
    let (goal, goal_source) = load_goal(&cfg.goal)?;
    let (dict, dictionary_source) = load_dictionary(&cfg.dictionary)?;
    let machine = GoalMachine::new(&goal)?;
    let states = machine.enumerate_states();
    let actions: Vec<String> = dict
        .actions()
        .iter()
        .map(|a| a.label.clone())
        .collect();
    if cfg.runs == 0 || cfg.episodes == 0 {
        return Err(HarnessError::Config(
            "runs and episodes must both be positive".into(),
        ));
    }
    if cfg.device.is_some() && cfg.runs > 1 {
        return Err(HarnessError::Config(
            "an external device can only serve one run at a time".into(),
        ));
    }

    let mut runs: Vec<RunOutcome> = Vec::with_capacity(cfg.runs as usize);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.runs)
            .map(|run| {
                let seed = derive_seed(cfg.seed, run as u64);
                let goal = &goal;
                let dict = &dict;
                let states = &states;
                let actions = &actions;
                scope.spawn(move || execute_run(cfg, goal, dict, states, actions, run, seed))
            })
            .collect();
        for handle in handles {
            runs.push(handle.join().expect("run thread panicked"));
        }
    });

    let report = ExperimentReport {
        config: cfg.clone(),
        goal,
        states,
        actions,
        runs,
        out_dir: out_dir.map(Path::to_path_buf),
    };
    if let Some(dir) = out_dir {
        write_artifacts(&report, &goal_source, &dictionary_source, dir)?;
    }
    Ok(report)
}

fn execute_run(
    cfg: &ExperimentConfig,
    goal: &GoalSpec,
    dict: &MessageDictionary,
    states: &[String],
    actions: &[String],
    run: u32,
    seed: u64,
) -> RunOutcome {
    let mut q = QTable::new(states.to_vec(), actions.to_vec());
    let mut traces = TraceTable::like(&q);
    let mut logs = Vec::with_capacity(cfg.episodes as usize);
    let mut evals = Vec::new();
    let mut abort = None;
    let mut wire_commands = 0;

    let mut checkpoints: BTreeSet<u32> = cfg.eval_after.iter().copied().collect();
    checkpoints.insert(cfg.episodes);

    match build_env(cfg, goal, dict) {
        Ok((mut env, _server)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for episode in 0..cfg.episodes {
                let mut hp = cfg.hyperparams;
                if let Some(decay) = hp.epsilon_decay {
                    hp.epsilon *= decay.powi(episode as i32);
                }
                match run_episode(&mut env, &mut q, &mut traces, &hp, cfg.algorithm, episode, &mut rng)
                {
                    Ok(log) => logs.push(log),
                    Err(e) => {
                        abort = Some(e.to_string());
                        break;
                    }
                }
                let done = episode + 1;
                if checkpoints.contains(&done) {
                    match evaluate(&mut env, &q, done, seed) {
                        Ok(point) => evals.push(point),
                        Err(e) => {
                            abort = Some(e.to_string());
                            break;
                        }
                    }
                }
            }
            wire_commands = env.wire_commands();
        }
        Err(e) => abort = Some(e.to_string()),
    }
    RunOutcome {
        run,
        seed,
        logs,
        qtable: q,
        evals,
        wire_commands,
        abort,
    }
}

/// One greedy episode on a forked RNG stream; training's stream is not
/// disturbed, so runs with and without checkpoints learn identically.
fn evaluate(
    env: &mut EnvSession,
    q: &QTable,
    after_episodes: u32,
    run_seed: u64,
) -> Result<EvalPoint, SessionError> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(run_seed, EVAL_STREAM_TAG | after_episodes as u64));
    let log = run_greedy_episode(env, q, after_episodes, &mut rng)?;
    Ok(EvalPoint {
        after_episodes,
        reward: log.reward,
        steps: log.steps,
        terminal: log.terminal,
    })
}

fn build_env(
    cfg: &ExperimentConfig,
    goal: &GoalSpec,
    dict: &MessageDictionary,
) -> Result<(EnvSession, Option<BulbServer>), HarnessError> {
    let (addr, server) = match &cfg.device {
        Some(spec) => (resolve_addr(spec)?, None),
        None => {
            let mut profile = DeviceProfile::builtin().with_initial(goal.initial.clone());
            if !cfg.rate_limited_sim {
                profile = profile.without_rate_limit();
            }
            let server = serve("127.0.0.1:0", profile)?;
            (server.addr(), Some(server))
        }
    };
    let throttle_free = server.is_some() && !cfg.rate_limited_sim;
    let pacing_ms = cfg
        .pacing_ms
        .unwrap_or(if throttle_free { 0 } else { 1000 });
    let device = DeviceSession::connect(addr, Duration::from_millis(pacing_ms))?;
    let reset = match (&server, cfg.reset_via_commands) {
        (Some(s), false) => ResetStrategy::Handle(s.handle()),
        _ => ResetStrategy::Commands,
    };
    let env = EnvSession::new(device, dict.clone(), goal, reset)?;
    Ok((env, server))
}

fn resolve_addr(spec: &str) -> Result<SocketAddr, HarnessError> {
    spec.to_socket_addrs()
        .map_err(HarnessError::Io)?
        .next()
        .ok_or_else(|| HarnessError::Config(format!("{spec:?} resolves to no address")))
}

fn write_artifacts(
    report: &ExperimentReport,
    goal_source: &str,
    dictionary_source: &str,
    dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    for outcome in &report.runs {
        let run_dir = dir.join(format!("run_{:02}", outcome.run));
        std::fs::create_dir_all(&run_dir)?;
        let mut jsonl = String::new();
        for log in &outcome.logs {
            jsonl.push_str(&serde_json::to_string(log)?);
            jsonl.push('\n');
        }
        std::fs::write(run_dir.join("episodes.jsonl"), jsonl)?;
        outcome
            .qtable
            .save(&run_dir.join("qtable.csv"))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut evals = String::from("after_episodes,reward,steps,terminal\n");
        for e in &outcome.evals {
            evals.push_str(&format!(
                "{},{},{},{}\n",
                e.after_episodes,
                e.reward,
                e.steps,
                e.terminal.as_str()
            ));
        }
        std::fs::write(run_dir.join("evals.csv"), evals)?;
    }
    let series = report.series()?;
    std::fs::write(
        dir.join("reward_per_episode.csv"),
        reward_per_episode_csv(&series, report.config.movavg_window),
    )?;
    std::fs::write(
        dir.join("steps_per_episode.csv"),
        steps_per_episode_csv(&series),
    )?;
    std::fs::write(
        dir.join("cumulative_vs_actions.csv"),
        cumulative_vs_actions_csv(&series),
    )?;
    let manifest = Manifest {
        config: report.config.clone(),
        goal_source: goal_source.to_string(),
        dictionary_source: dictionary_source.to_string(),
        states: report.states.clone(),
        actions: report.actions.clone(),
        runs: report
            .runs
            .iter()
            .map(|r| ManifestRun {
                run: r.run,
                seed: r.seed,
                episodes_completed: r.logs.len() as u32,
                wire_commands: r.wire_commands,
                abort: r.abort.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}
