//! Scenario files: system, grid, predicates, formula and run settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tubetree::formula::{parse, Formula, PredicateDef, PredicateTable, Shape};
use tubetree::grid::Grid;
use tubetree::reach::{NextGridRule, ReachEngine, ReachOptions};
use tubetree::system::{DisturbanceSource, Dynamics, InputSet, SystemModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario {path}: {source}")]
    Toml { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Formula(#[from] tubetree::formula::FormulaError),
    #[error(transparent)]
    System(#[from] tubetree::system::SystemError),
    #[error(transparent)]
    Grid(#[from] tubetree::grid::GridError),
    #[error(transparent)]
    Reach(#[from] tubetree::reach::ReachError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub system: SystemConfig,
    pub grid: GridConfig,
    pub predicates: BTreeMap<String, PredicateConfig>,
    pub formula: String,
    /// Named sub-formulas reported separately by `check`.
    #[serde(default)]
    pub branches: Vec<Branch>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dynamics: DynamicsConfig,
    pub period: f64,
    pub controls: InputSet,
    pub disturbances: InputSet,
    /// Lattice points per control dimension.
    #[serde(default = "default_per_dim")]
    pub control_points: usize,
    /// Extra boundary points for two-dimensional ball sets.
    #[serde(default = "default_ring")]
    pub control_ring: usize,
    #[serde(default = "default_ring_w")]
    pub disturbance_ring: usize,
    /// Make tube membership of a cell hold for every state in it: tubes are
    /// computed with disturbance samples widened by the cell extent, and
    /// predicates keep only cells entirely inside (or outside) the region.
    #[serde(default)]
    pub cell_margin: bool,
}

fn default_per_dim() -> usize {
    9
}

fn default_ring() -> usize {
    0
}

fn default_ring_w() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DynamicsConfig {
    /// `x+ = x + u + w`.
    Integrator { dim: usize },
    /// `x+ = A x + B u + w`.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

/// A predicate region: a fixed shape, or the strip swept by a vehicle moving
/// at constant speed along the first axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredicateConfig {
    Sweep(SweepConfig),
    Shape(Shape),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Position at time zero and constant velocity along axis 0.
    pub p_ini: f64,
    pub velocity: f64,
    /// Time window in seconds; `to = None` means the sweep never ends, so
    /// the region extends to infinity in the direction of travel.
    pub from: f64,
    pub to: Option<f64>,
    /// Bounds on the remaining state axes (use `inf` for none).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SweepConfig {
    pub fn position(&self, t: f64) -> f64 {
        self.p_ini + self.velocity * t
    }

    pub fn shape(&self) -> Shape {
        let start = self.position(self.from);
        let end = match self.to {
            Some(t) => self.position(t),
            None => self.velocity.signum() * f64::INFINITY,
        };
        let mut lower = vec![start.min(end)];
        let mut upper = vec![start.max(end)];
        lower.extend(&self.lower);
        upper.extend(&self.upper);
        Shape::Box { lower, upper }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub name: String,
    pub formula: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceMode {
    Zero,
    #[default]
    Uniform,
    Extreme,
    Replay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    #[serde(default)]
    pub mode: DisturbanceMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// CSV of disturbance vectors, one per row, for `replay`.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_realizations() -> usize {
    1
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        DisturbanceConfig { mode: DisturbanceMode::default(), seed: 0, realizations: 1, file: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Steps allowed beyond the longest path horizon.
    #[serde(default = "default_slack")]
    pub slack: usize,
    #[serde(default)]
    pub cell_center_successors: bool,
}

fn default_slack() -> usize {
    10
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig { slack: default_slack(), cell_center_successors: false }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// Everything a command needs, built from a validated config.
#[derive(Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: SystemModel,
    /// The model tubes are computed with; differs from `model` when cell
    /// margins are enabled.
    pub reach_model: SystemModel,
    pub grid: Arc<Grid>,
    pub table: PredicateTable,
    pub formula: Formula,
    /// Directory the config was loaded from; relative paths resolve here.
    pub base: PathBuf,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.into(), source: Box::new(source) })
    }

    pub fn table(&self) -> Result<PredicateTable, ConfigError> {
        let mut table = PredicateTable::new();
        for (id, p) in &self.predicates {
            let shape = match p {
                PredicateConfig::Shape(s) => s.clone(),
                PredicateConfig::Sweep(s) => s.shape(),
            };
            table.insert(PredicateDef::new(id.clone(), shape)?);
        }
        Ok(table)
    }

    pub fn model(&self) -> Result<SystemModel, ConfigError> {
        let s = &self.system;
        let (dim, dynamics) = match &s.dynamics {
            DynamicsConfig::Integrator { dim } => (*dim, Dynamics::integrator(*dim)),
            DynamicsConfig::Linear { a, b } => (a.len(), Dynamics::Linear { a: a.clone(), b: b.clone() }),
        };
        let controls = s.controls.control_samples(s.control_points, s.control_ring);
        let disturbances = s.disturbances.disturbance_samples(s.disturbance_ring);
        Ok(SystemModel::new(dim, dynamics, controls, disturbances, s.period)?)
    }

    pub fn next_grid_rule(&self) -> NextGridRule {
        if self.synthesis.cell_center_successors {
            NextGridRule::CellCenter
        } else {
            NextGridRule::Exact
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let config = ScenarioConfig::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Scenario::from_config(config, base)
    }

    pub fn from_config(config: ScenarioConfig, base: PathBuf) -> Result<Self, ConfigError> {
        let model = config.model()?;
        let g = &config.grid;
        let grid = Arc::new(Grid::new(g.lower.clone(), g.upper.clone(), g.cells.clone())?);
        let table = config.table()?;
        let formula = parse(&config.formula)?;
        let reach_model = if config.system.cell_margin { model.with_cell_margin(grid.widths())? } else { model.clone() };
        let scenario = Scenario { config, model, reach_model, grid, table, formula, base };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let n = self.model.state_dim;
        if self.grid.dim() != n {
            return Err(ConfigError::Invalid(format!("grid has {} dimensions, the system {n}", self.grid.dim())));
        }
        if self.config.x0.len() != n {
            return Err(ConfigError::Invalid(format!("x0 has {} entries, expected {n}", self.config.x0.len())));
        }
        if self.grid.cell_of(&self.config.x0).is_none() {
            return Err(ConfigError::Invalid(format!("x0 {:?} is outside the grid", self.config.x0)));
        }
        if self.config.system.disturbances.dim() != n {
            return Err(ConfigError::Invalid(format!("disturbances have dimension {}, expected {n}", self.config.system.disturbances.dim())));
        }
        let mut formulas = vec![self.formula.clone()];
        for b in &self.config.branches {
            formulas.push(parse(&b.formula)?);
        }
        for f in &formulas {
            for id in f.predicates() {
                let def = self.table.get(&id).map_err(|_| ConfigError::Invalid(format!("predicate {id} is not defined")))?;
                if def.dim() != n {
                    return Err(ConfigError::Invalid(format!("predicate {id} has dimension {}, expected {n}", def.dim())));
                }
            }
        }
        Ok(())
    }

    pub fn engine(&self, cache: Option<PathBuf>) -> Result<ReachEngine, ConfigError> {
        let options = ReachOptions { cache_dir: cache, inner_predicates: self.config.system.cell_margin, ..ReachOptions::default() };
        Ok(ReachEngine::new(self.reach_model.clone(), self.grid.clone(), options)?)
    }

    pub fn branch_formulas(&self) -> Result<Vec<(String, Formula)>, ConfigError> {
        self.config.branches.iter().map(|b| Ok((b.name.clone(), parse(&b.formula)?))).collect()
    }

    /// Disturbance source for realization `i`.
    pub fn disturbances(&self, seed: u64, i: usize) -> Result<DisturbanceSource, ConfigError> {
        let n = self.model.state_dim;
        Ok(match self.config.disturbance.mode {
            DisturbanceMode::Zero => DisturbanceSource::Zero { dim: n },
            DisturbanceMode::Uniform => {
                DisturbanceSource::uniform(self.config.system.disturbances.clone(), seed.wrapping_add(i as u64))
            }
            DisturbanceMode::Extreme => DisturbanceSource::Extreme { points: self.model.disturbances.clone(), next: i },
            DisturbanceMode::Replay => {
                let file = self.config.disturbance.file.as_ref().ok_or_else(|| ConfigError::Invalid("replay needs disturbance.file".into()))?;
                let path = self.base.join(file);
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                let sequence = parse_rows(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
                if sequence.iter().any(|w| w.len() != n || !self.config.system.disturbances.contains(w)) {
                    return Err(ConfigError::Invalid(format!("{}: every row must be a disturbance in W", path.display())));
                }
                DisturbanceSource::Replay { sequence, next: 0 }
            }
        })
    }

    pub fn is_deterministic(&self) -> bool {
        self.model.disturbances.iter().all(|w| w.iter().all(|&v| v == 0.0))
    }
}

/// Rows of comma-separated numbers; blank lines and lines starting with `#`
/// or a letter (headers) are skipped.
pub fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(rows)
}
