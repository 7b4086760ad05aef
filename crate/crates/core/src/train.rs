//! Policy iteration: search with the current evaluator, harvest, train, validate, repeat.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostWeights;
use crate::data::{harvest, DataError, ReplayBuffer, DEFAULT_PER_TREE, DEFAULT_TAU};
use crate::evaluator::{
    save_checkpoint, CheckpointError, CheckpointMeta, Evaluator, Network, NetworkError, NetworkShape, Trainer,
    UniformEvaluator,
};
use crate::mcts::{run_search, SearchConfig, SearchError};
use crate::rng;
use crate::scenario::Scenario;

const PURPOSE_INIT: u64 = 1;
const PURPOSE_PICK: u64 = 2;
const PURPOSE_SHUFFLE: u64 = 3;

pub const METRICS_FILE: &str = "metrics.csv";
pub const BASELINE_FILE: &str = "baseline.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub scenarios_per_iter: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub per_tree: usize,
    pub momentum: f64,
    pub replay_capacity: usize,
    /// Paths each training search collects before stopping; validation keeps the search setting.
    pub path_target: usize,
    /// Taken from the run-wide seed rather than the training section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 8,
            scenarios_per_iter: 30,
            epochs: 2,
            batch_size: 64,
            learning_rate: 1e-3,
            tau: DEFAULT_TAU,
            per_tree: DEFAULT_PER_TREE,
            momentum: 0.9,
            replay_capacity: crate::data::DEFAULT_CAPACITY,
            path_target: 3,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), String> {
        let counts = [
            self.iterations,
            self.scenarios_per_iter,
            self.epochs,
            self.batch_size,
            self.per_tree,
            self.replay_capacity,
            self.path_target,
        ];
        if counts.contains(&0) {
            return Err("training counts must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err("learning rate and temperature must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err("momentum must lie in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("iteration {0} harvested no samples; check the evaluator and search limits")]
    NoSamples(usize),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("metrics file: {0}")]
    Csv(#[from] csv::Error),
    #[error("output directory: {0}")]
    Io(#[from] std::io::Error),
}

/// Linear-interpolation percentile, `q` in `[0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// One validation or benchmark search.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub scenario: String,
    pub solved: bool,
    pub nodes_to_first_path: Option<usize>,
    pub nodes: usize,
    pub elapsed: Duration,
    /// Total cost of the best path, when one was found.
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub scenarios: usize,
    pub solved: usize,
    pub success_rate: f64,
    /// Nodes-to-first-path with unsolved scenarios counted at the node budget.
    pub median_nodes: f64,
    pub p10_nodes: f64,
    pub p90_nodes: f64,
    /// Plan-time percentiles over solved scenarios; absent when none was solved.
    pub median_ms: Option<f64>,
    pub p10_ms: Option<f64>,
    pub p90_ms: Option<f64>,
}

/// Runs every scenario with a node budget and no wall-time limit.
pub fn evaluate_runs(
    scenarios: &[Scenario],
    evaluator: &dyn Evaluator,
    config: &SearchConfig,
    weights: &CostWeights,
) -> Result<Vec<RunOutcome>, SearchError> {
    let mut cfg = config.clone();
    cfg.time_limit = Duration::MAX;
    scenarios
        .par_iter()
        .map(|s| {
            let r = run_search(s, evaluator, cfg.clone(), *weights)?;
            Ok(RunOutcome {
                scenario: s.id.clone(),
                solved: r.tree.nodes_to_first_path.is_some(),
                nodes_to_first_path: r.tree.nodes_to_first_path,
                nodes: r.nodes_created(),
                elapsed: r.elapsed,
                cost: r.best_path.as_ref().map(|p| p.cost.total),
            })
        })
        .collect()
}

pub fn summarize(runs: &[RunOutcome], node_limit: usize) -> EvalSummary {
    let nodes: Vec<f64> = runs
        .iter()
        .map(|r| r.nodes_to_first_path.unwrap_or(node_limit) as f64)
        .collect();
    let ms: Vec<f64> = runs
        .iter()
        .filter(|r| r.solved)
        .map(|r| r.elapsed.as_secs_f64() * 1e3)
        .collect();
    let solved = ms.len();
    EvalSummary {
        scenarios: runs.len(),
        solved,
        success_rate: if runs.is_empty() {
            0.0
        } else {
            solved as f64 / runs.len() as f64
        },
        median_nodes: percentile(&nodes, 0.5).unwrap_or(f64::NAN),
        p10_nodes: percentile(&nodes, 0.1).unwrap_or(f64::NAN),
        p90_nodes: percentile(&nodes, 0.9).unwrap_or(f64::NAN),
        median_ms: percentile(&ms, 0.5),
        p10_ms: percentile(&ms, 0.1),
        p90_ms: percentile(&ms, 0.9),
    }
}

pub fn evaluate(
    scenarios: &[Scenario],
    evaluator: &dyn Evaluator,
    config: &SearchConfig,
    weights: &CostWeights,
) -> Result<EvalSummary, SearchError> {
    Ok(summarize(
        &evaluate_runs(scenarios, evaluator, config, weights)?,
        config.node_limit,
    ))
}

/// One metrics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iter: usize,
    pub median_nodes: f64,
    pub median_ms: Option<f64>,
    pub p10_ms: Option<f64>,
    pub p90_ms: Option<f64>,
    pub success_rate: f64,
    pub mean_loss: Option<f64>,
    pub checkpoint: String,
}

impl IterationReport {
    pub fn new(
        iter: usize,
        summary: &EvalSummary,
        mean_loss: Option<f64>,
        checkpoint: String,
        wall_clock: bool,
    ) -> Self {
        let clock = |v: Option<f64>| v.filter(|_| wall_clock);
        Self {
            iter,
            median_nodes: summary.median_nodes,
            median_ms: clock(summary.median_ms),
            p10_ms: clock(summary.p10_ms),
            p90_ms: clock(summary.p90_ms),
            success_rate: summary.success_rate,
            mean_loss,
            checkpoint,
        }
    }
}

pub fn write_metrics(path: &Path, rows: &[IterationReport]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "iter",
            "median_nodes",
            "median_ms",
            "p10_ms",
            "p90_ms",
            "success_rate",
            "mean_loss",
            "checkpoint",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<IterationReport>, TrainError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}

pub fn checkpoint_name(iteration: usize) -> String {
    format!("checkpoint-{iteration:03}.pkmc")
}

/// Everything the loop needs besides the data and the schedule.
#[derive(Debug, Clone)]
pub struct PlannerSetup {
    pub search: SearchConfig,
    pub weights: CostWeights,
    pub shape: NetworkShape,
}

/// Where outputs go and whether wall-clock figures are written.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub wall_clock: bool,
}

/// Continue from a saved network after `iteration` completed.
#[derive(Debug, Clone)]
pub struct Resume {
    pub network: Network,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    /// Uniform-evaluator validation, only on a fresh start.
    pub baseline: Option<EvalSummary>,
    pub reports: Vec<IterationReport>,
    pub network: Network,
    /// Samples held in the replay buffer after each iteration.
    pub buffer_sizes: Vec<usize>,
}

/// Outer training loop. Iteration `k` (from 1) searches with the network
/// produced by iteration `k - 1` (the uniform evaluator for `k = 1`), trains,
/// validates the new network and writes checkpoint `k` plus a metrics row.
pub fn run_policy_iteration(
    train: &[Scenario],
    validation: &[Scenario],
    cfg: &TrainConfig,
    setup: &PlannerSetup,
    output: &TrainOutput,
    resume: Option<Resume>,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<TrainingRun, TrainError> {
    cfg.check().map_err(TrainError::Config)?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    fs::create_dir_all(&output.dir)?;
    let metrics_path = output.dir.join(METRICS_FILE);
    let mut search = setup.search.clone();
    search.time_limit = Duration::MAX;
    // Validation only measures the first connection.
    search.path_target = 1;
    let mut self_play = search.clone();
    self_play.path_target = cfg.path_target;
    let uniform = UniformEvaluator {
        actions: search.action_set.len(),
    };

    let (network, first, mut reports, trained) = match resume {
        Some(r) => {
            let kept: Vec<IterationReport> = if metrics_path.exists() {
                read_metrics(&metrics_path)?
                    .into_iter()
                    .filter(|row| row.iter <= r.iteration)
                    .collect()
            } else {
                Vec::new()
            };
            (r.network, r.iteration + 1, kept, true)
        }
        None => {
            let net = Network::init(setup.shape.clone(), &mut rng::stream(cfg.seed, PURPOSE_INIT, 0));
            (net, 1, Vec::new(), false)
        }
    };
    let baseline = if trained {
        None
    } else {
        let summary = evaluate(validation, &uniform, &search, &setup.weights)?;
        progress(&format!(
            "baseline: median nodes {} success {:.2}",
            summary.median_nodes, summary.success_rate
        ));
        let row = IterationReport::new(0, &summary, None, String::new(), output.wall_clock);
        write_metrics(&output.dir.join(BASELINE_FILE), &[row])?;
        Some(summary)
    };
    write_metrics(&metrics_path, &reports)?;

    let mut trainer = Trainer::new(network, cfg.momentum);
    let mut use_network = trained;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut buffer_sizes = Vec::new();
    let meta_base = CheckpointMeta {
        shape: setup.shape.clone(),
        steer_count: search.action_set.steer_count(),
        step: search.action_set.step(),
        max_steer: search.action_set.max_steer(),
        iteration: 0,
    };

    for iteration in first..first + cfg.iterations {
        let picks = rand::seq::index::sample(
            &mut rng::stream(cfg.seed, PURPOSE_PICK, iteration as u64),
            train.len(),
            cfg.scenarios_per_iter.min(train.len()),
        );
        let chosen: Vec<&Scenario> = picks.iter().map(|i| &train[i]).collect();
        let snapshot = trainer.network.clone();
        let evaluator: &dyn Evaluator = if use_network { &snapshot } else { &uniform };
        let harvested: Vec<Vec<_>> = chosen
            .par_iter()
            .map(|s| -> Result<_, TrainError> {
                let r = run_search(s, evaluator, self_play.clone(), setup.weights)?;
                Ok(harvest(&r.tree, s, cfg.per_tree, cfg.tau)?)
            })
            .collect::<Result<_, _>>()?;
        let count: usize = harvested.iter().map(Vec::len).sum();
        if count == 0 {
            return Err(TrainError::NoSamples(iteration));
        }
        buffer.extend(harvested.into_iter().flatten());
        buffer_sizes.push(buffer.len());

        let mut losses = Vec::new();
        for epoch in 0..cfg.epochs {
            let mut shuffle = rng::stream(cfg.seed, PURPOSE_SHUFFLE, (iteration * 1000 + epoch) as u64);
            for batch in buffer.epoch(&mut shuffle, cfg.batch_size) {
                losses.push(trainer.step(&batch, cfg.learning_rate)?);
            }
        }
        let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        use_network = true;

        let summary = evaluate(validation, &trainer.network, &search, &setup.weights)?;
        let name = checkpoint_name(iteration);
        let meta = CheckpointMeta {
            iteration,
            ..meta_base.clone()
        };
        save_checkpoint(&trainer.network, &meta, &output.dir.join(&name))?;
        let row = IterationReport::new(iteration, &summary, Some(mean_loss), name, output.wall_clock);
        progress(&format!(
            "iteration {iteration}: {count} samples, buffer {}, loss {mean_loss:.4}, median nodes {}, success {:.2}",
            buffer.len(),
            summary.median_nodes,
            summary.success_rate
        ));
        reports.push(row);
        write_metrics(&metrics_path, &reports)?;
    }
    Ok(TrainingRun {
        baseline,
        reports,
        network: trainer.network,
        buffer_sizes,
    })
}
