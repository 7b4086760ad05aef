//! Discretization sweep comparing tree search with Hybrid A*.
//!
//! Budgets are enforced in nodes only so that reruns are byte-identical.

use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::astar::{plan, AStarTermination};
use crate::config::RunConfig;
use crate::evaluator::Evaluator;
use crate::mcts::SearchError;
use crate::scenario::Scenario;
use crate::train::{evaluate_runs, percentile};
use crate::vehicle::{make_action_set, ActionSetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Planner {
    Mcts,
    Hastar,
}

impl Planner {
    pub fn name(self) -> &'static str {
        match self {
            Planner::Mcts => "mcts",
            Planner::Hastar => "hastar",
        }
    }
}

/// One planner on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerRun {
    pub scenario: String,
    pub solved: bool,
    pub elapsed: Duration,
    /// Path cost as a nonnegative number (the negated total), when solved.
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub disc: f64,
    pub planner: Planner,
    pub median_ms: Option<f64>,
    pub success_rate: f64,
    pub median_cost: Option<f64>,
}

impl SweepRow {
    pub fn from_runs(disc: f64, planner: Planner, runs: &[PlannerRun], wall_clock: bool) -> Self {
        let ms: Vec<f64> = runs
            .iter()
            .filter(|r| r.solved)
            .map(|r| r.elapsed.as_secs_f64() * 1e3)
            .collect();
        let costs: Vec<f64> = runs.iter().filter_map(|r| r.cost).collect();
        Self {
            disc,
            planner,
            median_ms: percentile(&ms, 0.5).filter(|_| wall_clock),
            success_rate: if runs.is_empty() {
                0.0
            } else {
                ms.len() as f64 / runs.len() as f64
            },
            median_cost: percentile(&costs, 0.5),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Actions(#[from] ActionSetError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("sweep file: {0}")]
    Csv(#[from] csv::Error),
}

/// Both planners' runs at one discretization.
#[derive(Debug, Clone)]
pub struct DiscRuns {
    pub disc: f64,
    pub mcts: Vec<PlannerRun>,
    pub hastar: Vec<PlannerRun>,
}

/// Hybrid A* uses `disc` as its cell size with the heading bin scaled alike;
/// the tree search scales its action step by the same factor.
pub fn run_disc(
    scenarios: &[Scenario],
    evaluator: &dyn Evaluator,
    cfg: &RunConfig,
    disc: f64,
) -> Result<DiscRuns, BenchError> {
    let ratio = disc / cfg.astar.position_cell;
    let mut search = cfg.search_config()?;
    search.action_set = make_action_set(&cfg.vehicle, cfg.actions.steer_count, cfg.actions.step * ratio)?;
    let mcts = evaluate_runs(scenarios, evaluator, &search, &cfg.weights)?
        .into_iter()
        .map(|r| PlannerRun {
            scenario: r.scenario,
            solved: r.solved,
            elapsed: r.elapsed,
            cost: r.cost.map(|c| -c),
        })
        .collect();
    let mut astar = cfg.astar_config()?;
    astar.position_cell = disc;
    astar.heading_bin = cfg.astar.heading_bin * ratio;
    astar.time_limit = Duration::MAX;
    let hastar = scenarios
        .par_iter()
        .map(|s| {
            let r = plan(s, &astar, &cfg.weights);
            PlannerRun {
                scenario: s.id.clone(),
                solved: r.termination == AStarTermination::Found,
                elapsed: r.elapsed,
                cost: r.path.map(|p| -p.cost.total),
            }
        })
        .collect();
    Ok(DiscRuns { disc, mcts, hastar })
}

pub fn sweep(
    scenarios: &[Scenario],
    evaluator: &dyn Evaluator,
    cfg: &RunConfig,
    discretizations: &[f64],
) -> Result<Vec<DiscRuns>, BenchError> {
    discretizations
        .iter()
        .map(|&d| run_disc(scenarios, evaluator, cfg, d))
        .collect()
}

pub fn sweep_rows(runs: &[DiscRuns], wall_clock: bool) -> Vec<SweepRow> {
    runs.iter()
        .flat_map(|d| {
            [
                SweepRow::from_runs(d.disc, Planner::Mcts, &d.mcts, wall_clock),
                SweepRow::from_runs(d.disc, Planner::Hastar, &d.hastar, wall_clock),
            ]
        })
        .collect()
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["disc", "planner", "median_ms", "success_rate", "median_cost"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}

/// Median over scenarios solved by both planners of the MCTS / A* cost ratio.
pub fn median_cost_ratio(mcts: &[PlannerRun], hastar: &[PlannerRun]) -> Option<f64> {
    let ratios: Vec<f64> = mcts
        .iter()
        .filter_map(|m| {
            let h = hastar.iter().find(|h| h.scenario == m.scenario)?;
            let (mc, hc) = (m.cost?, h.cost?);
            (hc > 0.0).then(|| mc / hc)
        })
        .collect();
    percentile(&ratios, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::UniformEvaluator;
    use crate::scenario::{generate, GenSpec, ScenarioKind};

    fn run(id: &str, cost: Option<f64>, ms: u64) -> PlannerRun {
        PlannerRun {
            scenario: id.into(),
            solved: cost.is_some(),
            elapsed: Duration::from_millis(ms),
            cost,
        }
    }

    #[test]
    fn row_statistics() {
        let runs = [run("a", Some(0.2), 10), run("b", None, 99), run("c", Some(0.4), 30)];
        let row = SweepRow::from_runs(0.2, Planner::Hastar, &runs, true);
        assert_eq!(row.median_ms, Some(20.0));
        assert!((row.success_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((row.median_cost.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(SweepRow::from_runs(0.2, Planner::Hastar, &runs, false).median_ms, None);
    }

    #[test]
    fn ratio_uses_jointly_solved() {
        let m = [run("a", Some(0.3), 1), run("b", Some(0.5), 1), run("c", None, 1)];
        let h = [run("a", Some(0.2), 1), run("b", None, 1), run("c", Some(0.1), 1)];
        assert!((median_cost_ratio(&m, &h).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(median_cost_ratio(&m[1..], &h[1..]), None);
    }

    #[test]
    fn sweep_has_two_rows_per_disc_and_round_trips() {
        let scenarios = generate(&GenSpec::new(ScenarioKind::Empty, 3, 5)).unwrap();
        let mut cfg = RunConfig::default();
        cfg.search.node_limit = 2000;
        cfg.astar.node_limit = 2000;
        let eval = UniformEvaluator { actions: 14 };
        let runs = sweep(&scenarios, &eval, &cfg, &[0.1, 0.4]).unwrap();
        let rows = sweep_rows(&runs, false);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].planner, Planner::Mcts);
        assert_eq!(rows[3].disc, 0.4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("disc,planner,median_ms,success_rate,median_cost\n0.1,mcts,,"),
            "{text}"
        );
        assert_eq!(read_sweep(&path).unwrap(), rows);
        let again = sweep_rows(&sweep(&scenarios, &eval, &cfg, &[0.1, 0.4]).unwrap(), false);
        assert_eq!(again, rows);
    }
}
