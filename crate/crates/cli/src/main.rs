//! `parkmcts`: scenario generation, planning, training and benchmarking.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or input error,
//! 3 no path found, 4 unusable model.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use parkmcts::bench::{sweep, sweep_rows, write_sweep};
use parkmcts::config::RunConfig;
use parkmcts::data::split_dataset;
use parkmcts::evaluator::{load_checkpoint_for, Evaluator, Network, UniformEvaluator};
use parkmcts::mcts::{run_search, NodeStatus};
use parkmcts::path::{PathFile, PathStats};
use parkmcts::render::render_svg;
use parkmcts::scenario::{generate, read_scenario, write_scenario, Scenario, ScenarioKind};
use parkmcts::train::{run_policy_iteration, PlannerSetup, Resume, TrainOutput};

#[derive(Debug, Parser)]
#[command(
    name = "parkmcts",
    version,
    about = "Learned-prior tree search for parking maneuvers"
)]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Leave wall-clock figures out of every output and ignore time limits.
    #[arg(long, global = true)]
    no_wall_clock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scenario files.
    Gen {
        #[arg(long, value_parser = parse_kind)]
        kind: ScenarioKind,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a single scenario and write a path file.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = PlannerArg::Mcts)]
        planner: PlannerArg,
        #[arg(long, value_enum, default_value_t = EvaluatorArg::Uniform)]
        evaluator: EvaluatorArg,
        /// Checkpoint for `--evaluator net`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        node_limit: Option<usize>,
        #[arg(long)]
        time_limit_ms: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Split a scenario directory and run policy iteration.
    Train {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sweep discretizations with both planners and write a CSV.
    Bench {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated cell sizes in metres; defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        discretizations: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = SplitArg::Validation)]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerArg {
    Mcts,
    Hastar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvaluatorArg {
    Uniform,
    Net,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    Validation,
    All,
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse()
}

#[derive(Debug)]
enum Failure {
    Runtime(anyhow::Error),
    Usage(String),
    NoPath,
    Model(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = match &f {
                Failure::Runtime(e) => {
                    eprintln!("error: {e:#}");
                    1
                }
                Failure::Usage(m) => {
                    eprintln!("error: {m}");
                    2
                }
                Failure::NoPath => {
                    eprintln!("no path found");
                    3
                }
                Failure::Model(m) => {
                    eprintln!("error: {m}");
                    4
                }
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.no_wall_clock {
        cfg.record_wall_clock = false;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Gen { kind, count, out } => cmd_gen(&cfg, kind, count, &out),
        Command::Plan {
            scenario,
            planner,
            evaluator,
            model,
            node_limit,
            time_limit_ms,
            out,
            svg,
        } => {
            let limits = (node_limit, time_limit_ms);
            cmd_plan(
                &cfg,
                &scenario,
                planner,
                evaluator,
                model.as_deref(),
                limits,
                &out,
                svg.as_deref(),
            )
        }
        Command::Train { scenarios, out, resume } => cmd_train(&cfg, &scenarios, &out, resume.as_deref()),
        Command::Bench {
            scenarios,
            model,
            discretizations,
            split,
            out,
        } => {
            let discs = discretizations.unwrap_or_else(|| cfg.bench.discretizations.clone());
            cmd_bench(&cfg, &scenarios, &model, &discs, split, &out)
        }
    }
}

fn cmd_gen(cfg: &RunConfig, kind: ScenarioKind, count: usize, out: &Path) -> Outcome {
    let scenarios = generate(&cfg.gen_spec(kind, count, cfg.seed)).context("scenario generation failed")?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for s in &scenarios {
        write_scenario(s, &out.join(format!("{}.scn", s.id))).context("cannot write scenario")?;
    }
    eprintln!("wrote {} scenarios to {}", scenarios.len(), out.display());
    Ok(())
}

fn load_model(cfg: &RunConfig, path: &Path) -> Result<Network, Failure> {
    let (net, meta) = load_checkpoint_for(path, &cfg.network_shape())
        .map_err(|e| Failure::Model(format!("{}: {e}", path.display())))?;
    if meta.steer_count != cfg.actions.steer_count {
        return Err(Failure::Model(format!(
            "{} was trained with {} steering angles, config has {}",
            path.display(),
            meta.steer_count,
            cfg.actions.steer_count
        )));
    }
    Ok(net)
}

fn wall_ms(cfg: &RunConfig, elapsed: Duration) -> f64 {
    if cfg.record_wall_clock {
        elapsed.as_secs_f64() * 1e3
    } else {
        0.0
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_plan(
    cfg: &RunConfig,
    scenario_path: &Path,
    planner: PlannerArg,
    evaluator: EvaluatorArg,
    model: Option<&Path>,
    (node_limit, time_limit_ms): (Option<usize>, Option<u64>),
    out: &Path,
    svg: Option<&Path>,
) -> Outcome {
    let scenario = read_scenario(scenario_path).map_err(|e| Failure::Usage(e.to_string()))?;
    let time_limit = match (cfg.record_wall_clock, time_limit_ms) {
        (false, _) => Duration::MAX,
        (true, Some(ms)) => Duration::from_millis(ms),
        (true, None) => Duration::from_millis(match planner {
            PlannerArg::Mcts => cfg.search.time_limit_ms,
            PlannerArg::Hastar => cfg.astar.time_limit_ms,
        }),
    };
    let (file, visited) = match planner {
        PlannerArg::Mcts => {
            let net;
            let eval: &dyn Evaluator = match (evaluator, model) {
                (EvaluatorArg::Net, Some(p)) => {
                    net = load_model(cfg, p)?;
                    &net
                }
                (EvaluatorArg::Net, None) => return Err(Failure::Usage("--evaluator net requires --model".into())),
                (EvaluatorArg::Uniform, _) => &UniformEvaluator {
                    actions: 2 * cfg.actions.steer_count,
                },
            };
            let mut search = cfg.search_config().context("invalid action set")?;
            search.node_limit = node_limit.unwrap_or(search.node_limit);
            search.time_limit = time_limit;
            let r = run_search(&scenario, eval, search, cfg.weights).context("search failed")?;
            let stats = PathStats {
                nodes: r.nodes_created(),
                milliseconds: wall_ms(cfg, r.elapsed),
                termination: r.termination.name().to_string(),
            };
            let visited: Vec<_> = r
                .tree
                .nodes
                .iter()
                .filter(|n| n.status == NodeStatus::Explored)
                .map(|n| n.state.pose)
                .collect();
            (PathFile::new(&scenario, "mcts", r.best_path.as_ref(), stats), visited)
        }
        PlannerArg::Hastar => {
            let mut astar = cfg.astar_config().context("invalid action set")?;
            astar.node_limit = node_limit.unwrap_or(astar.node_limit);
            astar.time_limit = time_limit;
            let r = parkmcts::astar::plan(&scenario, &astar, &cfg.weights);
            let stats = PathStats {
                nodes: r.expanded,
                milliseconds: wall_ms(cfg, r.elapsed),
                termination: r.termination.name().to_string(),
            };
            (PathFile::new(&scenario, "hastar", r.path.as_ref(), stats), r.visited)
        }
    };
    file.write(out).context("cannot write path file")?;
    if let Some(svg_path) = svg {
        fs::write(svg_path, render_svg(&scenario, Some(&file), &visited))
            .with_context(|| format!("cannot write {}", svg_path.display()))?;
    }
    if file.solved {
        Ok(())
    } else {
        Err(Failure::NoPath)
    }
}

/// Every `.scn` file in `dir`, sorted by file name.
fn load_dir(dir: &Path) -> Result<Vec<Scenario>, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Usage(format!(
            "scenario directory {} does not exist",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Usage(format!("no .scn files in {}", dir.display())));
    }
    files
        .iter()
        .map(|p| read_scenario(p).map_err(|e| Failure::Usage(e.to_string())))
        .collect()
}

fn pick(scenarios: &[Scenario], ids: &[String]) -> Vec<Scenario> {
    ids.iter()
        .filter_map(|id| scenarios.iter().find(|s| &s.id == id).cloned())
        .collect()
}

fn cmd_train(cfg: &RunConfig, dir: &Path, out: &Path, resume: Option<&Path>) -> Outcome {
    let scenarios = load_dir(dir)?;
    let ids: Vec<String> = scenarios.iter().map(|s| s.id.clone()).collect();
    let split = split_dataset(&ids, cfg.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let resume = match resume {
        Some(p) => {
            let network = load_model(cfg, p)?;
            let (_, meta) = parkmcts::evaluator::load_checkpoint(p).map_err(|e| Failure::Model(e.to_string()))?;
            Some(Resume {
                network,
                iteration: meta.iteration,
            })
        }
        None => None,
    };
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let split_text = serde_json::to_string_pretty(&split).context("split serializes")?;
    fs::write(out.join("split.json"), split_text + "\n").context("cannot write split.json")?;
    let setup = PlannerSetup {
        search: cfg.search_config().context("invalid action set")?,
        weights: cfg.weights,
        shape: cfg.network_shape(),
    };
    let output = TrainOutput {
        dir: out.to_path_buf(),
        wall_clock: cfg.record_wall_clock,
    };
    let run = run_policy_iteration(
        &pick(&scenarios, &split.train),
        &pick(&scenarios, &split.validation),
        &cfg.train_config(),
        &setup,
        &output,
        resume,
        &|line| eprintln!("{line}"),
    )
    .context("training failed")?;
    eprintln!("wrote {} checkpoints to {}", run.reports.len(), out.display());
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, dir: &Path, model: &Path, discs: &[f64], split: SplitArg, out: &Path) -> Outcome {
    if discs.is_empty() || discs.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Failure::Usage("discretizations must be positive".into()));
    }
    let net = load_model(cfg, model)?;
    let scenarios = load_dir(dir)?;
    let chosen = if split == SplitArg::All {
        scenarios.clone()
    } else {
        let ids: Vec<String> = scenarios.iter().map(|s| s.id.clone()).collect();
        let parts = split_dataset(&ids, cfg.seed).map_err(|e| Failure::Usage(e.to_string()))?;
        let ids = match split {
            SplitArg::Train => parts.train,
            SplitArg::Test => parts.test,
            _ => parts.validation,
        };
        pick(&scenarios, &ids)
    };
    let runs = sweep(&chosen, &net, cfg, discs).context("benchmark failed")?;
    let rows = sweep_rows(&runs, cfg.record_wall_clock);
    write_sweep(out, &rows).context("cannot write sweep")?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}
