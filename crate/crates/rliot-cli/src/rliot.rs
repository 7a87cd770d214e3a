//! Experiment front end: train agents against simulated or real bulbs,
//! sweep hyperparameters, inspect optimal paths and Q-tables, discover
//! devices, and audit what a training run cost.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rliot::agent::QTable;
use rliot::bulb::advertise::{DEFAULT_GROUP, DEFAULT_PORT};
use rliot::bulb::DeviceProfile;
use rliot::discover;
use rliot::harness::{
    cost_report, heatmap_csv, load_dictionary, load_goal, oracle_optimal_path, run_experiment,
    tune, ExperimentConfig, SweepPlan,
};

#[derive(Parser)]
#[command(name = "rliot", version, about = "Reinforcement learning for smart bulb control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents and write run artifacts.
    Run(RunArgs),
    /// Sweep hyperparameters by coordinate descent.
    Tune(TuneArgs),
    /// Show the shortest successful command sequences for a goal.
    Oracle(OracleArgs),
    /// Rearrange a saved Q-table for inspection.
    Heatmap(HeatmapArgs),
    /// Find devices: listen for announcements or probe a subnet.
    Discover(DiscoverArgs),
    /// Summarise the training cost recorded in an artifact directory.
    Cost(CostArgs),
}

/// Experiment settings; every flag overrides the config file's value.
#[derive(Args)]
struct ConfigFlags {
    /// Experiment config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// `goal1`, `goal2`, or a goal file path.
    #[arg(long)]
    goal: Option<String>,
    /// `builtin` or a dictionary file path.
    #[arg(long)]
    dictionary: Option<String>,
    /// q_learning, sarsa, q_lambda, or sarsa_lambda.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    episodes: Option<u32>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-episode multiplier on epsilon.
    #[arg(long)]
    epsilon_decay: Option<f64>,
    /// Comma-separated episode counts to evaluate after.
    #[arg(long, value_delimiter = ',')]
    eval_after: Option<Vec<u32>>,
    /// Train against this device address instead of a spawned simulator.
    #[arg(long)]
    device: Option<String>,
    /// Arm the spawned simulator's rate limiter.
    #[arg(long)]
    rate_limited_sim: bool,
    /// Milliseconds between wire commands.
    #[arg(long)]
    pacing_ms: Option<u64>,
    /// Reset between episodes with ordinary commands.
    #[arg(long)]
    reset_via_commands: bool,
}

impl ConfigFlags {
    fn build(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.name {
            cfg.name = v.clone();
        }
        if let Some(v) = &self.goal {
            cfg.goal = v.clone();
        }
        if let Some(v) = &self.dictionary {
            cfg.dictionary = v.clone();
        }
        if let Some(v) = &self.algorithm {
            cfg.algorithm = v.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epsilon {
            cfg.hyperparams.epsilon = v;
        }
        if let Some(v) = self.alpha {
            cfg.hyperparams.alpha = v;
        }
        if let Some(v) = self.gamma {
            cfg.hyperparams.gamma = v;
        }
        if let Some(v) = self.lambda {
            cfg.hyperparams.lambda = v;
        }
        if let Some(v) = self.epsilon_decay {
            cfg.hyperparams.epsilon_decay = Some(v);
        }
        if let Some(v) = &self.eval_after {
            cfg.eval_after = v.clone();
        }
        if let Some(v) = &self.device {
            cfg.device = Some(v.clone());
        }
        if self.rate_limited_sim {
            cfg.rate_limited_sim = true;
        }
        if let Some(v) = self.pacing_ms {
            cfg.pacing_ms = Some(v);
        }
        if self.reset_via_commands {
            cfg.reset_via_commands = true;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Artifact directory (default `out/<name>-<unix seconds>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Sweep plan file (JSON); the default grids if omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value = "goal1")]
    goal: String,
    #[arg(long, default_value = "builtin")]
    dictionary: String,
    /// Device profile file; the built-in bulb if omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Saved Q-table (qtable.csv from a run directory).
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value = "goal1")]
    goal: String,
    #[arg(long, default_value = "builtin")]
    dictionary: String,
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Probe this IPv4 CIDR over TCP instead of listening for
    /// announcements.
    #[arg(long)]
    probe: Option<String>,
    /// Ports to probe.
    #[arg(long, value_delimiter = ',', default_value = "55443")]
    ports: Vec<u16>,
    /// Per-connection probe timeout in milliseconds.
    #[arg(long, default_value_t = 200)]
    timeout_ms: u64,
    /// Announcement group or address to listen on.
    #[arg(long)]
    listen: Option<IpAddr>,
    /// Announcement port.
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    /// How long to listen.
    #[arg(long, default_value_t = 5)]
    seconds: u64,
}

#[derive(Args)]
struct CostArgs {
    /// Artifact directory of a finished `rliot run`.
    dir: PathBuf,
    #[arg(long)]
    json: bool,
}

fn load_profile(path: &Option<PathBuf>) -> anyhow::Result<DeviceProfile> {
    Ok(match path {
        Some(p) => {
            DeviceProfile::load(p).with_context(|| format!("loading profile {}", p.display()))?
        }
        None => DeviceProfile::builtin(),
    })
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = args.flags.build()?;
    // Only the directory name carries the clock; everything written inside
    // is a pure function of config and seed.
    let out = args.out.clone().unwrap_or_else(|| {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Path::new("out").join(format!("{}-{stamp}", cfg.name))
    });
    let report = run_experiment(&cfg, Some(&out))?;
    println!(
        "{}: {} on {} ({} runs x {} episodes, seed {})",
        cfg.name, cfg.algorithm, cfg.goal, cfg.runs, cfg.episodes, cfg.seed
    );
    for run in &report.runs {
        let fate = match (&run.abort, run.evals.last()) {
            (Some(reason), _) => format!("aborted after {} episodes: {reason}", run.logs.len()),
            (None, Some(eval)) => format!(
                "final eval: reward {}, {} steps, {}",
                eval.reward,
                eval.steps,
                eval.terminal.as_str()
            ),
            (None, None) => "no evaluation".to_string(),
        };
        println!("  run {:02}  {fate}", run.run);
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn cmd_tune(args: &TuneArgs) -> anyhow::Result<()> {
    let base = args.flags.build()?;
    let mut plan = match &args.plan {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading plan {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))?
        }
        None => SweepPlan::default(),
    };
    // --episodes sizes the per-candidate training runs, same as for `run`.
    if let Some(v) = args.flags.episodes {
        plan.episodes = v;
    }
    let report = tune(&base, &plan)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    for step in &report.steps {
        let scores: Vec<String> = step
            .candidates
            .iter()
            .map(|c| {
                let mark = if c.value == step.chosen { "*" } else { "" };
                format!("{}{} -> {:.2}", c.value, mark, c.objective)
            })
            .collect();
        println!("{}: {}", step.parameter, scores.join("  "));
    }
    let hp = &report.tuned;
    println!(
        "tuned: epsilon {}, alpha {}, gamma {}, lambda {}",
        hp.epsilon, hp.alpha, hp.gamma, hp.lambda
    );
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> anyhow::Result<()> {
    let (goal, _) = load_goal(&args.goal)?;
    let (dict, _) = load_dictionary(&args.dictionary)?;
    let profile = load_profile(&args.profile)?;
    let result = oracle_optimal_path(&goal, &dict, &profile)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result)?);
        return Ok(());
    }
    if !result.reachable {
        println!(
            "{}: no successful sequence exists with this device's methods",
            goal.name
        );
        return Ok(());
    }
    println!(
        "{}: success in {} commands, best episode reward {}",
        goal.name, result.length, result.best_reward
    );
    println!("optimal sequences:");
    for seq in &result.sequences {
        println!("  {}", seq.join(" -> "));
    }
    println!("states along the way: {}", result.path_states.join(", "));
    Ok(())
}

fn cmd_heatmap(args: &HeatmapArgs) -> anyhow::Result<()> {
    let q = QTable::load(&args.table)
        .with_context(|| format!("loading table {}", args.table.display()))?;
    let (goal, _) = load_goal(&args.goal)?;
    let (dict, _) = load_dictionary(&args.dictionary)?;
    let profile = load_profile(&args.profile)?;
    let oracle = oracle_optimal_path(&goal, &dict, &profile)?;
    let csv = heatmap_csv(&q, &oracle.path_states);
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_discover(args: &DiscoverArgs) -> anyhow::Result<()> {
    let records = match &args.probe {
        Some(cidr) => {
            if args.ports.is_empty() {
                bail!("--ports must name at least one port");
            }
            discover::probe(cidr, &args.ports, Duration::from_millis(args.timeout_ms))?
        }
        None => {
            let ip = args.listen.unwrap_or(IpAddr::V4(DEFAULT_GROUP));
            let addr = SocketAddr::new(ip, args.port);
            eprintln!("listening on {addr} for {}s...", args.seconds);
            discover::listen(addr, Duration::from_secs(args.seconds))?
        }
    };
    if records.is_empty() {
        println!("no devices found");
        return Ok(());
    }
    for r in &records {
        let model = r.headers.get("model").map(String::as_str).unwrap_or("?");
        let power = r.headers.get("power").map(String::as_str).unwrap_or("?");
        println!(
            "{}  {}  model {}  power {}  seen {}x",
            r.id, r.address, model, power, r.sightings
        );
    }
    Ok(())
}

fn cmd_cost(args: &CostArgs) -> anyhow::Result<()> {
    let report = cost_report(&args.dir)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::Discover(args) => cmd_discover(args),
        Command::Cost(args) => cmd_cost(args),
    }
}
