//! Run configuration: every tunable in one strict TOML document.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::astar::{AStarConfig, HEADING_BIN, POSITION_CELL};
use crate::cost::CostWeights;
use crate::evaluator::NetworkShape;
use crate::mcts::SearchConfig;
use crate::scenario::{GenSpec, ScenarioKind};
use crate::train::TrainConfig;
use crate::vehicle::{make_action_set, ActionSet, ActionSetError, VehicleParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Actions(#[from] ActionSetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionSettings {
    pub steer_count: usize,
    pub step: f64,
}

impl Default for ActionSettings {
    fn default() -> Self {
        Self {
            steer_count: 7,
            step: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSettings {
    pub c_puct: f64,
    pub node_limit: usize,
    pub time_limit_ms: u64,
    pub path_target: usize,
    pub max_depth: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            c_puct: 1.0,
            node_limit: 20_000,
            time_limit_ms: 60_000,
            path_target: 10,
            max_depth: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AStarSettings {
    pub node_limit: usize,
    pub time_limit_ms: u64,
    pub position_cell: f64,
    pub heading_bin: f64,
}

impl Default for AStarSettings {
    fn default() -> Self {
        Self {
            node_limit: 100_000,
            time_limit_ms: 60_000,
            position_cell: POSITION_CELL,
            heading_bin: HEADING_BIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSettings {
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub head_hidden: usize,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        let s = NetworkShape::standard(1);
        Self {
            conv_channels: s.conv_channels,
            hidden: s.hidden,
            head_hidden: s.head_hidden,
        }
    }
}

/// Overrides for the per-kind generation defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSettings {
    pub slot_size: Option<(f64, f64)>,
    pub clutter: Option<(usize, usize)>,
    pub start_jitter: (f64, f64),
    pub world: (f64, f64),
    pub start_in_slot: bool,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        let base = GenSpec::new(ScenarioKind::Empty, 0, 0);
        Self {
            slot_size: None,
            clutter: None,
            start_jitter: base.start_jitter,
            world: base.world,
            start_in_slot: base.start_in_slot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSettings {
    /// Hybrid A* cell sizes in meters; the tree-search step scales by `disc / 0.1`.
    pub discretizations: Vec<f64>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            discretizations: vec![0.1, 0.2, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// When false, every wall-clock figure is left out of written outputs.
    pub record_wall_clock: bool,
    pub vehicle: VehicleParams,
    pub weights: CostWeights,
    pub actions: ActionSettings,
    pub search: SearchSettings,
    pub astar: AStarSettings,
    pub network: NetworkSettings,
    pub generation: GenerationSettings,
    pub training: TrainConfig,
    pub bench: BenchSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            record_wall_clock: true,
            vehicle: VehicleParams::default(),
            weights: CostWeights::default(),
            actions: ActionSettings::default(),
            search: SearchSettings::default(),
            astar: AStarSettings::default(),
            network: NetworkSettings::default(),
            generation: GenerationSettings::default(),
            training: TrainConfig::default(),
            bench: BenchSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !self.vehicle.is_valid() {
            return bad("vehicle parameters out of range");
        }
        if !self.weights.is_admissible() {
            return bad("cost weights must be nonnegative with alpha0 + alpha1 <= 1");
        }
        self.action_set()?;
        if !self.search_config()?.is_valid() {
            return bad("search limits must be positive");
        }
        let a = &self.astar;
        if a.node_limit == 0
            || a.position_cell.is_nan()
            || a.position_cell <= 0.0
            || a.heading_bin.is_nan()
            || a.heading_bin <= 0.0
        {
            return bad("astar limits and cells must be positive");
        }
        if self.network.conv_channels.is_empty() || self.network.hidden == 0 || self.network.head_hidden == 0 {
            return bad("network layers must be nonempty");
        }
        if let Err(e) = self.training.check() {
            return bad(&e);
        }
        if self.bench.discretizations.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("discretizations must be positive");
        }
        Ok(())
    }

    pub fn action_set(&self) -> Result<ActionSet, ActionSetError> {
        make_action_set(&self.vehicle, self.actions.steer_count, self.actions.step)
    }

    pub fn search_config(&self) -> Result<SearchConfig, ActionSetError> {
        let mut cfg = SearchConfig::new(self.action_set()?);
        cfg.c_puct = self.search.c_puct;
        cfg.node_limit = self.search.node_limit;
        cfg.time_limit = Duration::from_millis(self.search.time_limit_ms);
        cfg.path_target = self.search.path_target;
        cfg.max_depth = self.search.max_depth;
        Ok(cfg)
    }

    pub fn astar_config(&self) -> Result<AStarConfig, ActionSetError> {
        let mut cfg = AStarConfig::new(self.action_set()?);
        cfg.node_limit = self.astar.node_limit;
        cfg.time_limit = Duration::from_millis(self.astar.time_limit_ms);
        cfg.position_cell = self.astar.position_cell;
        cfg.heading_bin = self.astar.heading_bin;
        Ok(cfg)
    }

    pub fn network_shape(&self) -> NetworkShape {
        let mut shape = NetworkShape::standard(2 * self.actions.steer_count);
        shape.conv_channels = self.network.conv_channels.clone();
        shape.hidden = self.network.hidden;
        shape.head_hidden = self.network.head_hidden;
        shape
    }

    pub fn gen_spec(&self, kind: ScenarioKind, count: usize, seed: u64) -> GenSpec {
        let mut spec = GenSpec::new(kind, count, seed);
        let g = &self.generation;
        if let Some(s) = g.slot_size {
            spec.slot_size = s;
        }
        if let Some(c) = g.clutter {
            spec.clutter = c;
        }
        spec.start_jitter = g.start_jitter;
        spec.world = g.world;
        spec.start_in_slot = g.start_in_slot;
        spec.vehicle = self.vehicle;
        spec
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.training.clone()
        }
    }
}
