use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shaped_transfer::agents::{Algorithm, Checkpoint, Hyperparameters};
use shaped_transfer::baselines::MethodTag;
use shaped_transfer::envs::EnvId;
use shaped_transfer::harness::output::{self, Alignment};
use shaped_transfer::harness::{
    collect_from_checkpoint, default_budget, plot_series, run_experiment, summarize, train_source,
    ExperimentConfig, DEFAULT_SOURCE_EPISODES,
};
use shaped_transfer::shaping::ShapingTiming;
use shaped_transfer::Error;

#[derive(Parser)]
#[command(name = "shaped-transfer", version, about = "Transfer across restricted action spaces with similarity-based reward shaping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent on an unrestricted environment and save a checkpoint.
    TrainSource(TrainSourceArgs),
    /// Roll out a checkpoint greedily and save the (embedding, value) source set.
    Collect(CollectArgs),
    /// Run every seed of one experiment cell and write records plus a CSV.
    Run(RunArgs),
    /// Draw learning curves from one or more CSV files.
    Plot(PlotArgs),
    /// Print per-method summary numbers for one or more CSV files.
    Report(ReportArgs),
}

#[derive(Args)]
struct TrainSourceArgs {
    /// Environment; a restricted id trains on its unrestricted source.
    #[arg(long)]
    env: EnvId,
    #[arg(long)]
    algo: Algorithm,
    /// Step budget [default: 50000 for pendulum, 100000 for acrobot]
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hyperparameter override as KEY=VALUE (repeatable).
    #[arg(long = "hp", value_name = "KEY=VALUE")]
    hp: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CollectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SOURCE_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags given alongside override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvId>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    method: Option<MethodTag>,
    #[arg(long)]
    timesteps: Option<usize>,
    /// Number of seeds, run as 0..N.
    #[arg(long, conflicts_with = "seed_list")]
    seeds: Option<u64>,
    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    #[arg(long)]
    source_checkpoint: Option<PathBuf>,
    #[arg(long)]
    source_set: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_enum)]
    shaping_at: Option<Timing>,
    #[arg(long = "hp", value_name = "KEY=VALUE")]
    hp: Vec<String>,
    /// Directory for per-seed run records.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// CSV path [default: <out-dir>/<env>-<algo>-<method>.csv]
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Timing {
    Collection,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum Align {
    Episode,
    EnvSteps,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, required = true, num_args = 1..)]
    csv: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "episode")]
    align: Align,
    #[arg(long, default_value = "")]
    title: String,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, required = true, num_args = 1..)]
    csv: Vec<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainSource(a) => train_source_cmd(a),
        Command::Collect(a) => collect_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Plot(a) => plot_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidRestriction(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn parse_overrides(pairs: &[String]) -> Result<serde_json::Map<String, serde_json::Value>, Error> {
    let mut map = serde_json::Map::new();
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--hp expects KEY=VALUE, got {pair:?}")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
        map.insert(k.trim().to_string(), value);
    }
    Ok(map)
}

fn train_source_cmd(a: TrainSourceArgs) -> Result<(), Error> {
    if a.algo.is_discrete() != a.env.is_discrete() {
        return Err(Error::Config(format!("{} cannot train on {}", a.algo, a.env)));
    }
    let hp = Hyperparameters::with_overrides(&parse_overrides(&a.hp)?)?;
    let budget = a.timesteps.unwrap_or_else(|| default_budget(a.env));
    let (ckpt, outcome) = train_source(a.env, a.algo, &hp, budget, a.seed)?;
    ckpt.save(&a.out)?;
    let tail: Vec<f64> = outcome.episodes.iter().rev().take(100).map(|e| e.reward).collect();
    let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    eprintln!(
        "trained {} on {} for {} steps ({} episodes); mean reward over last {} episodes: {mean:.2}",
        a.algo,
        a.env.source(),
        outcome.total_steps,
        outcome.episodes.len(),
        tail.len()
    );
    println!("{}", a.out.display());
    Ok(())
}

fn collect_cmd(a: CollectArgs) -> Result<(), Error> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let set = collect_from_checkpoint(&ckpt, a.episodes, a.seed)?;
    set.save(&a.out)?;
    eprintln!("collected {} pairs of dimension {}", set.len(), set.embedding_dim());
    println!("{}", a.out.display());
    Ok(())
}

fn run_cmd(a: RunArgs) -> Result<(), Error> {
    if a.config.is_none() && a.method == Some(MethodTag::Shaped) && a.source_set.is_none() {
        return Err(shaped_needs_set());
    }
    let mut config = match &a.config {
        Some(path) => Some(ExperimentConfig::load(path)?),
        None => None,
    };
    let missing = |flag: &str| Error::Config(format!("{flag} is required when no --config is given"));
    let mut c = match config.take() {
        Some(c) => c,
        None => ExperimentConfig::new(
            a.env.ok_or_else(|| missing("--env"))?,
            a.algo.ok_or_else(|| missing("--algo"))?,
            a.method.ok_or_else(|| missing("--method"))?,
        ),
    };
    if let Some(v) = a.env {
        c.env = v;
    }
    if let Some(v) = a.algo {
        c.algorithm = v;
    }
    if let Some(v) = a.method {
        c.method = v;
    }
    if let Some(v) = a.timesteps {
        c.total_timesteps = Some(v);
    }
    if let Some(n) = a.seeds {
        c.seeds = (0..n).collect();
    }
    if let Some(v) = a.seed_list {
        c.seeds = v;
    }
    if a.source_checkpoint.is_some() {
        c.source_checkpoint = a.source_checkpoint;
    }
    if a.source_set.is_some() {
        c.source_set = a.source_set;
    }
    if let Some(w) = a.window {
        c.smoothing_window = w;
    }
    if let Some(t) = a.shaping_at {
        c.shaping_at = match t {
            Timing::Collection => ShapingTiming::Collection,
            Timing::Replay => ShapingTiming::Replay,
        };
    }
    c.hyperparameters.extend(parse_overrides(&a.hp)?);

    if c.method.uses_source_model() && c.source_checkpoint.is_none() {
        return Err(Error::Config(format!(
            "--method {} needs the source model: pass --source-checkpoint <PATH>",
            c.method
        )));
    }
    if c.method == MethodTag::Shaped && c.source_set.is_none() {
        return Err(shaped_needs_set());
    }
    for p in [&c.source_checkpoint, &c.source_set].into_iter().flatten() {
        if !p.exists() {
            return Err(Error::Config(format!("source artifact {} does not exist", p.display())));
        }
    }

    let records = run_experiment(&c, Some(&a.out_dir))?;
    let csv = a
        .csv
        .unwrap_or_else(|| a.out_dir.join(format!("{}-{}-{}.csv", c.env, c.algorithm, c.method)));
    output::emit_csv(&records, c.smoothing_window, &csv)?;
    for r in &records {
        if let Some(msg) = &r.failed {
            eprintln!("seed {} failed: {msg}", r.seed);
        }
    }
    println!("{}", csv.display());
    Ok(())
}

fn shaped_needs_set() -> Error {
    Error::Config("--method shaped needs the source set: pass --source-set <PATH> (create one with `collect`)".into())
}

fn load_rows(paths: &[PathBuf]) -> Result<Vec<output::CsvRow>, Error> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(output::read_csv(p)?);
    }
    Ok(rows)
}

fn plot_cmd(a: PlotArgs) -> Result<(), Error> {
    let rows = load_rows(&a.csv)?;
    let alignment = match a.align {
        Align::Episode => Alignment::Episode,
        Align::EnvSteps => Alignment::EnvSteps,
    };
    let series = plot_series(&rows, alignment)?;
    let title = if a.title.is_empty() { default_title(&a.csv[0]) } else { a.title };
    output::emit_plot(&series, &title, alignment, &a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

fn default_title(csv: &Path) -> String {
    std::fs::read_to_string(output::meta_path(csv))
        .ok()
        .and_then(|t| serde_json::from_str::<output::CsvMeta>(&t).ok())
        .and_then(|m| m.runs.first().map(|r| format!("{} / {}", r.env, r.algorithm)))
        .unwrap_or_else(|| "learning curves".into())
}

fn report_cmd(a: ReportArgs) -> Result<(), Error> {
    let rows = load_rows(&a.csv)?;
    let summary = summarize(&rows)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    println!(
        "{:<8} {:>5} {:>9} {:>14} {:>10} {:>14}",
        "method", "seeds", "episodes", "final-50 mean", "std", "ep 100-250"
    );
    for s in summary {
        let episodes = if s.episodes_min == s.episodes_max {
            s.episodes_min.to_string()
        } else {
            format!("{}-{}", s.episodes_min, s.episodes_max)
        };
        println!(
            "{:<8} {:>5} {:>9} {:>14.2} {:>10.2} {:>14}",
            s.method.as_str(),
            s.seeds,
            episodes,
            s.final50_mean,
            s.final50_std,
            s.mid_mean.map_or("-".into(), |m| format!("{m:.2}"))
        );
    }
    Ok(())
}
