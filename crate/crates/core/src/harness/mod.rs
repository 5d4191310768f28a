//! Seeded experiment runs and everything downstream of them.
//!
//! A run is one (environment, algorithm, method, seed) cell trained for a
//! step budget. [`run_experiment`] executes every seed of a config in
//! isolation, optionally in parallel, and writes each [`RunRecord`] as soon
//! as it finishes. The [`output`] module turns records into CSV files and
//! SVG learning curves.

pub mod output;
pub mod stats;
pub mod train;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Algorithm, Checkpoint, Hyperparameters};
use crate::baselines::{scratch_policy, MethodTag};
use crate::envs::{Env, EnvId, Restriction};
use crate::error::{Error, Result};
use crate::shaping::{collect_source_set, ShapingContext, ShapingTiming, SourceSet};

use output::{Alignment, CsvRow, PlotSeries};
use stats::{aggregate_seeds, window_mean};
pub use train::{evaluate_direct, train, EpisodeRecord, TrainOutcome, TrainSpec};

/// Environment variable capping how many seeds run at once.
pub const THREADS_ENV: &str = "SHAPED_TRANSFER_THREADS";

pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_SOURCE_EPISODES: usize = 10;

/// Default step budget: 50k for Pendulum, 100k for Acrobot.
pub fn default_budget(env: EnvId) -> usize {
    if env.is_discrete() {
        100_000
    } else {
        50_000
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

/// One experiment cell, as read from JSON or assembled by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub algorithm: Algorithm,
    pub method: MethodTag,
    #[serde(default)]
    pub total_timesteps: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub source_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub source_set: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    #[serde(default)]
    pub shaping_at: ShapingTiming,
    /// Replaces the environment's default restriction.
    #[serde(default)]
    pub restriction: Option<Restriction>,
    #[serde(default)]
    pub hyperparameters: serde_json::Map<String, serde_json::Value>,
}

impl ExperimentConfig {
    pub fn new(env: EnvId, algorithm: Algorithm, method: MethodTag) -> Self {
        Self {
            env,
            algorithm,
            method,
            total_timesteps: None,
            seeds: default_seeds(),
            source_checkpoint: None,
            source_set: None,
            smoothing_window: DEFAULT_WINDOW,
            shaping_at: ShapingTiming::default(),
            restriction: None,
            hyperparameters: Default::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad experiment config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn budget_steps(&self) -> usize {
        self.total_timesteps.unwrap_or_else(|| default_budget(self.env))
    }

    pub fn resolved_hyperparameters(&self) -> Result<Hyperparameters> {
        Hyperparameters::with_overrides(&self.hyperparameters)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithm.is_discrete() != self.env.is_discrete() {
            return Err(Error::Config(format!(
                "{} needs a {} environment but {} is {}",
                self.algorithm,
                if self.algorithm.is_discrete() { "discrete" } else { "box" },
                self.env,
                if self.env.is_discrete() { "discrete" } else { "box" },
            )));
        }
        if self.budget_steps() == 0 {
            return Err(Error::Config("total_timesteps must be positive".into()));
        }
        if self.smoothing_window == 0 {
            return Err(Error::Config("smoothing_window must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.method.uses_source_model() && self.source_checkpoint.is_none() {
            return Err(Error::Config(format!("method {} requires a source checkpoint", self.method)));
        }
        if self.method == MethodTag::Shaped && self.source_set.is_none() {
            return Err(Error::Config("method shaped requires a source set".into()));
        }
        self.resolved_hyperparameters()?;
        Ok(())
    }

    /// The config with every default written out.
    pub fn snapshot(&self) -> Self {
        let mut c = self.clone();
        c.total_timesteps = Some(self.budget_steps());
        if c.restriction.is_none() {
            c.restriction = self.env.default_restriction();
        }
        if let Ok(hp) = self.resolved_hyperparameters() {
            if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(hp) {
                c.hyperparameters = map;
            }
        }
        c
    }
}

/// The outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: MethodTag,
    pub seed: u64,
    /// Fully resolved config.
    pub config: ExperimentConfig,
    pub source_checkpoint_id: Option<String>,
    pub episodes: Vec<EpisodeRecord>,
    pub wall_clock_secs: f64,
    /// Divergence message when training stopped early.
    pub failed: Option<String>,
}

impl RunRecord {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.reward).collect()
    }

    pub fn total_steps(&self) -> usize {
        self.episodes.last().map_or(0, |e| e.env_steps)
    }

    pub fn file_name(&self) -> String {
        format!(
            "{}-{}-{}-seed{}.json",
            self.config.env, self.config.algorithm, self.method, self.seed
        )
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Source knowledge shared read-only by every seed.
enum Source {
    None,
    Direct(Box<crate::agents::Agent>),
    Shaped(ShapingContext),
}

/// Runs every seed of `config`. Records are written into `out_dir` (when
/// given) as each seed finishes. A diverged seed is recorded as failed and
/// the others carry on.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let hp = config.resolved_hyperparameters()?;
    let snapshot = config.snapshot();
    // fail fast on a bad restriction
    let target_space = Env::make(config.env, config.restriction.as_ref())?.action_space().clone();

    let (source, source_id) = if config.method.uses_source_model() {
        let path = config.source_checkpoint.as_ref().expect("validated");
        let ckpt = Checkpoint::load(path)?;
        if ckpt.action_space.is_discrete() != target_space.is_discrete() {
            return Err(Error::Config(format!(
                "checkpoint {} acts in a different kind of action space than {}",
                path.display(),
                config.env
            )));
        }
        let id = ckpt.id();
        let source = match config.method {
            MethodTag::DirectTransfer => Source::Direct(Box::new(ckpt.to_agent()?)),
            MethodTag::Shaped => {
                let set = SourceSet::load(config.source_set.as_ref().expect("validated"))?;
                Source::Shaped(ShapingContext::from_checkpoint(&ckpt, set, hp.gamma)?)
            }
            MethodTag::Scratch => unreachable!(),
        };
        (source, Some(id))
    } else {
        (Source::None, None)
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let run_one = |seed: u64| -> Result<RunRecord> {
        let start = Instant::now();
        let mut env = Env::make(config.env, config.restriction.as_ref())?;
        let budget = config.budget_steps();
        let (episodes, failed) = match &source {
            Source::None => {
                let out = scratch_policy(&mut env, config.algorithm, &hp, budget, seed)?;
                (out.episodes, out.failure)
            }
            Source::Direct(agent) => (evaluate_direct(&mut env, agent, budget, seed)?, None),
            Source::Shaped(ctx) => {
                let out = train(
                    &mut env,
                    &TrainSpec {
                        algorithm: config.algorithm,
                        hyperparameters: &hp,
                        budget_steps: budget,
                        seed,
                        shaping: Some((ctx, config.shaping_at)),
                    },
                )?;
                (out.episodes, out.failure)
            }
        };
        let record = RunRecord {
            method: config.method,
            seed,
            config: snapshot.clone(),
            source_checkpoint_id: source_id.clone(),
            episodes,
            wall_clock_secs: start.elapsed().as_secs_f64(),
            failed,
        };
        if let Some(dir) = out_dir {
            record.save(dir)?;
        }
        Ok(record)
    };

    let threads = thread_cap(config.seeds.len());
    if threads <= 1 {
        return config.seeds.iter().map(|&s| run_one(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| config.seeds.par_iter().map(|&s| run_one(s)).collect())
}

fn thread_cap(n_seeds: usize) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .map_or(n_seeds, |t| t.min(n_seeds))
        .max(1)
}

/// Trains an agent on the unrestricted source environment.
pub fn train_source(
    env: EnvId,
    algorithm: Algorithm,
    hp: &Hyperparameters,
    budget_steps: usize,
    seed: u64,
) -> Result<(Checkpoint, TrainOutcome)> {
    let source_env = env.source();
    let mut e = Env::make(source_env, None)?;
    let outcome = scratch_policy(&mut e, algorithm, hp, budget_steps, seed)?;
    if let Some(msg) = &outcome.failure {
        return Err(Error::Divergence(msg.clone()));
    }
    let ckpt = Checkpoint::from_agent(&outcome.agent, source_env, e.action_space(), hp, seed, outcome.total_steps);
    Ok((ckpt, outcome))
}

/// Harvests a source set from greedy rollouts of a checkpointed agent in its
/// own environment.
pub fn collect_from_checkpoint(ckpt: &Checkpoint, episodes: usize, seed: u64) -> Result<SourceSet> {
    let agent = ckpt.to_agent()?;
    let mut env = Env::make(ckpt.env, None)?;
    collect_source_set(&agent, &mut env, episodes, seed, &ckpt.id())
}

/// Per-method curves of the smoothed reward, aggregated over seeds.
pub fn plot_series(rows: &[CsvRow], alignment: Alignment) -> Result<Vec<PlotSeries>> {
    let groups = output::group_rows(rows);
    let mut out = Vec::new();
    for method in MethodTag::ALL {
        let runs: Vec<&Vec<CsvRow>> = groups.iter().filter(|g| g.0 == method).map(|g| &g.2).collect();
        if runs.is_empty() {
            continue;
        }
        let smoothed: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|x| x.smoothed_reward).collect()).collect();
        let stats = aggregate_seeds(&smoothed)?;
        let x = match alignment {
            Alignment::Episode => (0..stats.len()).map(|i| i as f64).collect(),
            Alignment::EnvSteps => {
                let steps: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|x| x.env_steps as f64).collect()).collect();
                aggregate_seeds(&steps)?.into_iter().map(|s| s.mean).collect()
            }
        };
        out.push(PlotSeries { method, x, stats });
    }
    Ok(out)
}

/// Headline numbers for one method across its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodTag,
    pub seeds: usize,
    pub episodes_min: usize,
    pub episodes_max: usize,
    /// Seed mean of each run's mean smoothed reward over its last 50 episodes.
    pub final50_mean: f64,
    /// Population std, over seeds, of the same per-run quantity.
    pub final50_std: f64,
    /// Seed mean of the mean smoothed reward over episodes 100..250.
    pub mid_mean: Option<f64>,
}

pub fn summarize(rows: &[CsvRow]) -> Result<Vec<MethodSummary>> {
    let groups = output::group_rows(rows);
    let mut out = Vec::new();
    for method in MethodTag::ALL {
        let runs: Vec<Vec<f64>> = groups
            .iter()
            .filter(|g| g.0 == method)
            .map(|g| g.2.iter().map(|r| r.smoothed_reward).collect())
            .collect();
        if runs.is_empty() {
            continue;
        }
        let finals: Vec<f64> = runs
            .iter()
            .filter_map(|r| window_mean(r, r.len().saturating_sub(50), r.len()))
            .collect();
        let (final50_mean, final50_std) = pop_mean_std(&finals);
        let mids: Vec<f64> = runs.iter().filter_map(|r| window_mean(r, 100, 251)).collect();
        out.push(MethodSummary {
            method,
            seeds: runs.len(),
            episodes_min: runs.iter().map(Vec::len).min().unwrap_or(0),
            episodes_max: runs.iter().map(Vec::len).max().unwrap_or(0),
            final50_mean,
            final50_std,
            mid_mean: if mids.is_empty() { None } else { Some(pop_mean_std(&mids).0) },
        });
    }
    Ok(out)
}

fn pop_mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}
