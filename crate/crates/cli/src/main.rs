use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use panelforge::brexit;
use panelforge::cmdp::solve_known_p;
use panelforge::experiment::{run_sweep, ExperimentConfig, Instance, OutputFormat};
use panelforge::policies::{write_trace_csv, StrategySpec};
use panelforge::simulator::{
    rows_to_json, run_horizon, run_until_k, thread_pool_from_env, write_checkpoints_csv, write_regret_csv, write_sweep_csv,
    write_trials_csv, TrialOptions, TrialStatus,
};

/// Exit code for a trial that hit `--t-max` before filling the committee.
const EXIT_TIMED_OUT: u8 = 2;

#[derive(Parser)]
#[command(name = "panelforge", version, about = "Simulate online selection of representative committees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial until K candidates are accepted.
    Run(RunArgs),
    /// Run every strategy at every K over several seeds and aggregate.
    Sweep(SweepArgs),
    /// Run fixed-horizon trials and report regret.
    Regret(RegretArgs),
    /// Solve the known-distribution program and print the optimal policy.
    Solve(SolveArgs),
    /// Print the embedded Brexit assembly targets and volunteer marginals.
    BrexitDataset,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyKind {
    Greedy,
    Cmdp,
    Rlcmdp,
    #[value(name = "rlcmdp-b")]
    RlcmdpB,
}

impl StrategyKind {
    fn name(self) -> &'static str {
        match self {
            StrategyKind::Greedy => "greedy",
            StrategyKind::Cmdp => "cmdp",
            StrategyKind::Rlcmdp => "rlcmdp",
            StrategyKind::RlcmdpB => "rlcmdp-b",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults to the embedded Brexit instance.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyKind>,
    /// Greedy quota slack.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Confidence level of the learners.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the main output here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Committee size; only the first value is used.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Give up after this many candidates.
    #[arg(long)]
    t_max: Option<u64>,
    /// Write the per-step decision log (CSV) here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    t_max: Option<u64>,
    /// Write one row per trial here.
    #[arg(long)]
    trials_out: Option<PathBuf>,
}

#[derive(Args)]
struct RegretArgs {
    #[command(flatten)]
    common: Common,
    /// Steps per run.
    #[arg(long)]
    horizon: u64,
    #[arg(long)]
    trials: Option<usize>,
    /// Write the power-of-two checkpoints of every run here (CSV).
    #[arg(long)]
    checkpoints_out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Committee sizes to report the expected screening effort for.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Write the policy JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(config: Option<&Path>) -> Result<(ExperimentConfig, Instance)> {
    let (cfg, base) = match config {
        None => (ExperimentConfig::brexit_default(), PathBuf::from(".")),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ExperimentConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
    };
    let instance = cfg.instance(&base).context("building the instance")?;
    Ok((cfg, instance))
}

/// The strategy named by `--strategy` (or the config's first one), with
/// parameters taken from the flags first and the config second.
fn pick_strategy(cfg: &ExperimentConfig, common: &Common) -> Result<StrategySpec> {
    let from_config = match common.strategy {
        None => cfg.strategies.first().cloned(),
        Some(kind) => cfg.strategies.iter().find(|s| s.name() == kind.name()).cloned(),
    };
    let kind = common.strategy.map(StrategyKind::name).or(from_config.as_ref().map(StrategySpec::name));
    let config_epsilon = match from_config {
        Some(StrategySpec::Greedy { epsilon }) => Some(epsilon),
        _ => None,
    };
    let (config_delta, constants) = match from_config {
        Some(StrategySpec::RlCmdp { delta }) => (Some(delta), None),
        Some(StrategySpec::RlCmdpBernstein { delta, constants }) => (Some(delta), constants),
        _ => (None, None),
    };
    Ok(match kind {
        Some("greedy") => StrategySpec::Greedy {
            epsilon: common.epsilon.or(config_epsilon).context("`--epsilon` is required for greedy")?,
        },
        Some("cmdp") => StrategySpec::Cmdp {},
        Some("rlcmdp") => StrategySpec::RlCmdp {
            delta: common.delta.or(config_delta).context("`--delta` is required for rlcmdp")?,
        },
        Some("rlcmdp-b") => StrategySpec::RlCmdpBernstein {
            delta: common.delta.or(config_delta).context("`--delta` is required for rlcmdp-b")?,
            constants,
        },
        _ => bail!("no strategy given"),
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    print!("{text}");
    std::io::stdout().flush()?;
    if let Some(path) = out {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> panelforge::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf)?)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let (cfg, instance) = load(args.common.config.as_deref())?;
    let spec = pick_strategy(&cfg, &args.common)?;
    let k = args.k.first().copied().unwrap_or(cfg.k[0]);
    let seed = args.common.seed.unwrap_or(cfg.seed);
    let options = TrialOptions { t_max: args.t_max.unwrap_or(cfg.t_max), record_trace: args.trace.is_some() };
    let strategy = spec.resolve(&instance.p, &instance.target)?;
    let mut record = run_until_k(&strategy, &instance.p, &instance.target, k, seed, &options)?;
    if let (Some(path), Some(rows)) = (&args.trace, record.trace.take()) {
        let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_trace_csv(&rows, file)?;
    }
    let format = args.common.format.unwrap_or(cfg.output.format.into());
    let text = match format {
        Format::Csv => csv_string(|buf| write_trials_csv(std::slice::from_ref(&record), buf))?,
        Format::Json => record.to_json()? + "\n",
    };
    emit(&text, args.common.out.as_deref())?;
    if record.status == TrialStatus::TimedOut {
        eprintln!("timed out after {} candidates with {} of {k} accepted", record.tau, record.accepted);
        return Ok(ExitCode::from(EXIT_TIMED_OUT));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let Some(config_path) = args.common.config.as_deref() else {
        bail!("`--config` is required for sweep");
    };
    let (mut cfg, instance) = load(Some(config_path))?;
    if args.common.strategy.is_some() {
        cfg.strategies = vec![pick_strategy(&cfg, &args.common)?];
    }
    if !args.k.is_empty() {
        cfg.k = args.k;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if let Some(t_max) = args.t_max {
        cfg.t_max = t_max;
    }
    cfg.validate()?;
    info!("sweeping {} strategies x {} sizes x {} trials", cfg.strategies.len(), cfg.k.len(), cfg.trials);
    let result = run_sweep(&cfg, &instance)?;
    let format = args.common.format.unwrap_or(cfg.output.format.into());
    let summary = match format {
        Format::Csv => csv_string(|buf| write_sweep_csv(&result.rows, buf))?,
        Format::Json => rows_to_json(&result.rows)?,
    };
    emit(&summary, args.common.out.as_deref().or(cfg.output.summary.as_deref()))?;
    if let Some(path) = args.trials_out.as_deref().or(cfg.output.trials.as_deref()) {
        let text = match format {
            Format::Csv => csv_string(|buf| write_trials_csv(&result.trials, buf))?,
            Format::Json => rows_to_json(&result.trials)?,
        };
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_regret(args: RegretArgs) -> Result<ExitCode> {
    let (cfg, instance) = load(args.common.config.as_deref())?;
    let spec = pick_strategy(&cfg, &args.common)?;
    let g_star = solve_known_p(&instance.p, &instance.target)
        .context("the optimal gain needs a strictly positive distribution")?
        .policy
        .gain(&instance.p)
        .clamp(0.0, 1.0);
    let strategy = spec.resolve(&instance.p, &instance.target)?;
    let seed = args.common.seed.unwrap_or(cfg.seed);
    let trials = args.trials.unwrap_or(cfg.trials);
    let records = (0..trials as u64)
        .map(|n| run_horizon(&strategy, &instance.p, &instance.target, args.horizon, g_star, seed.wrapping_add(n)))
        .collect::<panelforge::Result<Vec<_>>>()?;
    let text = match args.common.format.unwrap_or(cfg.output.format.into()) {
        Format::Csv => csv_string(|buf| write_regret_csv(&records, buf))?,
        Format::Json => rows_to_json(&records)?,
    };
    emit(&text, args.common.out.as_deref())?;
    if let Some(path) = &args.checkpoints_out {
        let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_checkpoints_csv(&records, file)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let (cfg, instance) = load(args.config.as_deref())?;
    let solution = solve_known_p(&instance.p, &instance.target)?;
    let gain = solution.policy.gain(&instance.p);
    println!("optimal gain g* = {gain:.6}");
    let ks = if args.k.is_empty() { cfg.k } else { args.k };
    for k in ks {
        println!("K = {k}: expected candidates screened K/g* = {:.1}", k as f64 / gain);
    }
    let json = solution.policy.to_json();
    match &args.out {
        Some(path) => fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_brexit_dataset() -> Result<ExitCode> {
    print!("{}", brexit::table());
    // building the instance logs the renormalization warnings
    brexit::instance()?;
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Regret(args) => cmd_regret(args),
        Command::Solve(args) => cmd_solve(args),
        Command::BrexitDataset => cmd_brexit_dataset(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match thread_pool_from_env() {
        Ok(Some(pool)) => pool.install(|| dispatch(cli)),
        Ok(None) => dispatch(cli),
        Err(e) => Err(e.into()),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
