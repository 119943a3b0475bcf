use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gaptae::envs::{bandit_as_mdp, hard_instance_with, random_gridworld, HardInstanceParams, Layout, TreeRouting};
use gaptae::harness::{self, ExperimentConfig, Method, RESULTS_FILE};
use gaptae::io::{self as store, Environment};
use gaptae::plan::{evaluate, geometric_checkpoints};
use gaptae::{explore, BonusMode, ExplorationConfig, PlanMode};

/// Gap-dependent task-agnostic exploration on tabular MDPs.
#[derive(Parser)]
#[command(name = "gaptae", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment and write it as JSON.
    GenEnv(GenEnvArgs),
    /// Run reward-free exploration and write the history.
    Explore(ExploreArgs),
    /// Plan on a history for a reward and score the plan on the environment.
    Plan(PlanArgs),
    /// Run an experiment from a TOML config or a previous manifest.
    Bench(BenchArgs),
    /// Fit the log-log slope of an error curve.
    Slope(SlopeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Hard,
    Gridworld,
    Bandit,
}

#[derive(clap::Args)]
struct GenEnvArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of states (hard: number of green leaves).
    #[arg(long, default_value_t = 10)]
    states: usize,
    #[arg(long, default_value_t = 10)]
    actions: usize,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    #[arg(long, default_value_t = 0.4)]
    rho: f64,
    /// Accuracy of the hard instance.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Tree routing of the hard instance.
    #[arg(long, value_enum, default_value = "uniform")]
    routing: RoutingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bandit arm means, comma separated.
    #[arg(long, value_delimiter = ',')]
    means: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoutingArg {
    Uniform,
    ActionIndexed,
}

#[derive(clap::Args)]
struct ExploreArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    rho: f64,
    /// Number of episodes K.
    #[arg(long)]
    episodes: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable the clip on the leading bonus term.
    #[arg(long)]
    unclipped: bool,
    /// Receives history.csv and exploration_values.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Simplified,
}

#[derive(clap::Args)]
struct PlanArgs {
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    env: PathBuf,
    /// Reward name in the environment file; the first reward if omitted.
    #[arg(long)]
    reward: Option<String>,
    /// Checkpoint episodes, comma separated; geometric with base 2 if omitted.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value = "exact")]
    plan_mode: PlanModeArg,
    /// Results CSV path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanModeArg {
    Exact,
    Checkpoints,
}

#[derive(clap::Args)]
#[group(required = true, multiple = false, id = "source")]
struct BenchSource {
    /// TOML experiment config.
    #[arg(long, group = "source")]
    config: Option<PathBuf>,
    /// Manifest of an earlier run to reproduce.
    #[arg(long, group = "source")]
    manifest: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[command(flatten)]
    source: BenchSource,
    /// Override the config's methods, comma separated (gap, unclipped, simulator, mab).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SlopeArgs {
    #[arg(long)]
    results: PathBuf,
    /// Inclusive k-window as lo,hi.
    #[arg(long, value_parser = parse_window)]
    window: (usize, usize),
    /// Method to fit; every method in the file if omitted.
    #[arg(long)]
    method: Option<String>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenEnv(args) => gen_env(args),
        Command::Explore(args) => run_explore(args),
        Command::Plan(args) => run_plan(args),
        Command::Bench(args) => bench(args),
        Command::Slope(args) => slope(args),
    }
}

fn gen_env(args: GenEnvArgs) -> Result<()> {
    let env = match args.kind {
        Kind::Hard => {
            let params = HardInstanceParams {
                routing: match args.routing {
                    RoutingArg::Uniform => TreeRouting::Uniform,
                    RoutingArg::ActionIndexed => TreeRouting::ActionIndexed,
                },
                ..HardInstanceParams::new(args.states, args.actions, args.horizon, args.rho, args.epsilon)
            };
            let inst = hard_instance_with(&params)?;
            Environment::new(inst.mdp, inst.reward).with_layout(inst.layout)
        }
        Kind::Gridworld => {
            let world = random_gridworld(args.horizon, args.states, args.actions, args.rho, args.seed)?;
            eprintln!("gap_min = {}, rejected draws = {}", world.gap_min, world.rejections);
            Environment::new(world.mdp, world.reward).with_layout(world.layout)
        }
        Kind::Bandit => {
            if args.means.is_empty() {
                bail!("--means is required for a bandit");
            }
            let (mdp, reward) = bandit_as_mdp(&args.means)?;
            let mut layout = Layout::new();
            layout.insert("arms".into(), (0..args.means.len()).collect());
            Environment::new(mdp, reward).with_layout(layout)
        }
    };
    env.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn run_explore(args: ExploreArgs) -> Result<()> {
    let env = load_env(&args.env)?;
    let mode = match args.mode {
        ModeArg::Full => BonusMode::Full,
        ModeArg::Simplified => BonusMode::Simplified,
    };
    let cfg = ExplorationConfig {
        clipped: !args.unclipped,
        ..ExplorationConfig::new(args.rho, args.episodes, args.delta, mode, args.seed)
    };
    let (history, log) = explore(&env.mdp, &cfg)?;
    std::fs::create_dir_all(&args.out_dir)?;
    store::save_history(&history, &args.out_dir.join("history.csv"))?;
    let mut values = BufWriter::new(File::create(args.out_dir.join("exploration_values.csv"))?);
    writeln!(values, "episode,exploration_value")?;
    for (k, v) in log.exploration_values.iter().enumerate() {
        writeln!(values, "{},{v}", k + 1)?;
    }
    values.flush()?;
    eprintln!("iota = {}, episodes = {}", log.iota, history.episodes());
    Ok(())
}

fn run_plan(args: PlanArgs) -> Result<()> {
    let env = load_env(&args.env)?;
    let history = store::load_history(&args.history).with_context(|| format!("reading {}", args.history.display()))?;
    let reward = env.reward(args.reward.as_deref())?;
    let checkpoints = if args.checkpoints.is_empty() {
        geometric_checkpoints(history.episodes(), 2)
    } else {
        args.checkpoints
    };
    let mode = match args.plan_mode {
        PlanModeArg::Exact => PlanMode::Exact,
        PlanModeArg::Checkpoints => PlanMode::Checkpoints,
    };
    let planned = gaptae::plan(&history, reward, args.delta, &checkpoints, mode)?;
    let rows = evaluate(&planned, &env.mdp, reward)?;
    match args.out {
        Some(path) => store::write_results(&rows, File::create(&path)?)?,
        None => store::write_results(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut config = match (&args.source.config, &args.source.manifest) {
        (Some(path), _) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        (_, Some(path)) => {
            harness::Manifest::load(path)
                .with_context(|| format!("reading {}", path.display()))?
                .config
        }
        _ => unreachable!("clap enforces one source"),
    };
    if !args.methods.is_empty() {
        config.run.methods = args
            .methods
            .iter()
            .map(|m| parse_method(m))
            .collect::<Result<_>>()?;
    }
    let out = harness::run_experiment(&config, &args.out)?;
    print_summary(std::io::stdout().lock(), &out)?;
    Ok(())
}

fn print_summary(mut w: impl Write, out: &harness::RunOutput) -> Result<()> {
    let m = &out.manifest;
    writeln!(w, "results: {}", out.dir.join(RESULTS_FILE).display())?;
    writeln!(
        w,
        "rho = {}, iota = {:.4}, gap_min = {}, V* = {}",
        m.rho,
        m.iota,
        m.gap_min.map_or("none".to_string(), |g| g.to_string()),
        m.optimal_value
    )?;
    for method in &m.config.run.methods {
        let curve = harness::curve_of(&out.results, method.name());
        if let Some(&(k, e)) = curve.last() {
            writeln!(w, "{:>10}: error at k = {k} is {e:.6}", method.name())?;
        }
    }
    Ok(())
}

fn slope(args: SlopeArgs) -> Result<()> {
    let rows = store::read_method_results(File::open(&args.results)?)
        .with_context(|| format!("reading {}", args.results.display()))?;
    let window = args.window;
    let mut methods: Vec<&str> = match &args.method {
        Some(m) => vec![m.as_str()],
        None => rows.iter().map(|r| r.method.as_str()).collect(),
    };
    methods.dedup();
    for method in methods {
        let curve = harness::curve_of(&rows, method);
        if curve.is_empty() {
            bail!("no rows for method {method:?}");
        }
        println!("{method}: {:.6}", harness::fit_slope(&curve, window)?);
    }
    Ok(())
}

fn parse_window(text: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = text.split_once(',').ok_or("expected lo,hi")?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| e.to_string());
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if lo > hi {
        return Err(format!("empty window {lo},{hi}"));
    }
    Ok((lo, hi))
}

fn parse_method(name: &str) -> Result<Method> {
    Ok(match name.trim() {
        "gap" => Method::Gap,
        "unclipped" => Method::Unclipped,
        "simulator" => Method::Simulator,
        "mab" => Method::Mab,
        other => bail!("unknown method {other:?}"),
    })
}

fn load_env(path: &Path) -> Result<Environment> {
    Environment::load(path).with_context(|| format!("reading {}", path.display()))
}
