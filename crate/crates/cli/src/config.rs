//! Run configuration: one JSON document per run, with defaults filled in on
//! parse and re-emitted in full by the manifest.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use starkprobe::fisher::LongTimeWindow;
use starkprobe::open_dynamics::DephasingForm;
use starkprobe::scaling::{linear_grid, FieldChoice, TransitionGrid};
use starkprobe::{InitialState, MemoryBudget, ProbeSpec, Sector, StarkProbe};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20_240_611;
const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Evolve,
    QfiSweep,
    Scaling,
    Dephase,
    Estimate,
    BoundCheck,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Evolve => "evolve",
            CommandKind::QfiSweep => "qfi-sweep",
            CommandKind::Scaling => "scaling",
            CommandKind::Dephase => "dephase",
            CommandKind::Estimate => "estimate",
            CommandKind::BoundCheck => "bound-check",
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct RunConfig {
    pub command: CommandKind,
    /// Stem of every file the run writes.
    pub name: String,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub memory_budget_bytes: u64,
    pub params: Params,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: CommandKind,
    name: Option<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    memory_budget_bytes: Option<u64>,
    params: Option<Value>,
}

impl TryFrom<RawConfig> for RunConfig {
    type Error = String;

    fn try_from(raw: RawConfig) -> Result<Self, String> {
        let params = raw.params.unwrap_or_else(|| Value::Object(Map::new()));
        let params = Params::parse(raw.command, params).map_err(|e| format!("params: {e}"))?;
        let threads = match raw.threads {
            Some(0) => return Err("threads: must be at least 1".into()),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let name = raw.name.unwrap_or_else(|| raw.command.name().to_string());
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(format!("name: {name:?} is not a plain file stem"));
        }
        let config = RunConfig {
            command: raw.command,
            name,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            threads,
            out: raw.out.unwrap_or_else(|| PathBuf::from("out")),
            memory_budget_bytes: raw.memory_budget_bytes.unwrap_or(MemoryBudget::default().bytes),
            params,
        };
        config.params.validate().map_err(|e| format!("params.{e}"))?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn budget(&self) -> MemoryBudget {
        MemoryBudget::new(self.memory_budget_bytes)
    }

    /// Parses a config document after applying `overrides` (dotted key, JSON
    /// value) on top of it.
    pub fn resolve(document: Option<Value>, command: CommandKind, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let mut doc = document.unwrap_or_else(|| Value::Object(Map::new()));
        let Value::Object(map) = &mut doc else {
            return Err(CliError::Config("config must be a JSON object".into()));
        };
        match map.get("command") {
            None => {
                map.insert("command".into(), Value::String(command.name().into()));
            }
            Some(Value::String(c)) if c == command.name() => {}
            Some(other) => {
                return Err(CliError::Config(format!(
                    "command: config is for {other}, invoked as {}",
                    command.name()
                )))
            }
        }
        for (key, value) in overrides {
            set_path(&mut doc, key, value.clone())?;
        }
        serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} is malformed")));
    }
    for part in &parts[..parts.len() - 1] {
        let Value::Object(map) = node else {
            return Err(CliError::Config(format!("override {key}: {part} is not inside an object")));
        };
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    let Value::Object(map) = node else {
        return Err(CliError::Config(format!("override {key}: parent is not an object")));
    };
    map.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses `key=value`; the value is read as JSON, falling back to a string.
pub fn parse_override(text: &str) -> Result<(String, Value), String> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| format!("override {text:?} is not key=value"))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.trim().to_string(), value))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Evolve(EvolveParams),
    QfiSweep(QfiSweepParams),
    Scaling(ScalingRecipe),
    Dephase(DephaseParams),
    Estimate(EstimateParams),
    BoundCheck(BoundCheckParams),
}

impl Params {
    fn parse(command: CommandKind, mut value: Value) -> serde_json::Result<Self> {
        if let (CommandKind::Scaling, Value::Object(map)) = (command, &mut value) {
            map.entry("recipe").or_insert_with(|| Value::String("size-scaling".into()));
        }
        Ok(match command {
            CommandKind::Evolve => Params::Evolve(serde_json::from_value(value)?),
            CommandKind::QfiSweep => Params::QfiSweep(serde_json::from_value(value)?),
            CommandKind::Scaling => Params::Scaling(serde_json::from_value(value)?),
            CommandKind::Dephase => Params::Dephase(serde_json::from_value(value)?),
            CommandKind::Estimate => Params::Estimate(serde_json::from_value(value)?),
            CommandKind::BoundCheck => Params::BoundCheck(serde_json::from_value(value)?),
        })
    }

    /// Checks what serde cannot; errors name the offending field.
    fn validate(&self) -> Result<(), String> {
        match self {
            Params::Evolve(p) => {
                p.chain.validate("chain")?;
                finite("field", p.field)?;
                let t = p.times.values().map_err(|e| format!("times: {e}"))?;
                if t.iter().any(|&x| x < 0.0) {
                    return Err("times: must be non-negative".into());
                }
            }
            Params::QfiSweep(p) => {
                non_empty_sizes("sites", &p.sites)?;
                p.chain.validate("chain")?;
                p.fields.values().map_err(|e| format!("fields: {e}"))?;
                p.window.validate().map_err(|e| format!("window: {e}"))?;
            }
            Params::Scaling(r) => r.validate()?,
            Params::Dephase(p) => {
                p.chain.validate("chain")?;
                if p.fields.is_empty() {
                    return Err("fields: grid is empty".into());
                }
                if p.gammas.is_empty() || p.gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
                    return Err("gammas: need at least one finite rate >= 0".into());
                }
                let t = p.times.values().map_err(|e| format!("times: {e}"))?;
                if t.iter().any(|&x| x < 0.0) || t.windows(2).any(|w| w[1] < w[0]) {
                    return Err("times: must be ascending and non-negative".into());
                }
                if !(p.dh > 0.0) {
                    return Err("dh: must be > 0".into());
                }
                if p.max_step.is_some_and(|s| !(s > 0.0)) {
                    return Err("max_step: must be > 0".into());
                }
            }
            Params::Estimate(p) => {
                p.chain.validate("chain")?;
                if p.h_true.is_empty() {
                    return Err("h_true: grid is empty".into());
                }
                if p.repetitions < 2 {
                    return Err(format!("repetitions: at least 2 are required, got {}", p.repetitions));
                }
                if p.samples == 0 {
                    return Err("samples: must be at least 1".into());
                }
                if !(p.time > 0.0) {
                    return Err("time: must be > 0".into());
                }
                if !(p.half_width > 0.0) || !(p.step > 0.0) || p.step > p.half_width {
                    return Err("half_width, step: need 0 < step <= half_width".into());
                }
            }
            Params::BoundCheck(p) => {
                non_empty_sizes("sites", &p.sites)?;
                p.chain.validate("chain")?;
                p.fields.values().map_err(|e| format!("fields: {e}"))?;
                let t = p.times.values().map_err(|e| format!("times: {e}"))?;
                if t.iter().any(|&x| !(x > 0.0)) {
                    return Err("times: must be > 0".into());
                }
            }
        }
        Ok(())
    }
}

fn finite(name: &str, x: f64) -> Result<(), String> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(format!("{name}: must be finite"))
    }
}

fn non_empty_sizes(name: &str, sizes: &[usize]) -> Result<(), String> {
    if sizes.is_empty() {
        Err(format!("{name}: list is empty"))
    } else {
        Ok(())
    }
}

/// A grid of fields or times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Grid {
    /// `points` evenly spaced values from `start` to `stop`.
    Linear { start: f64, stop: f64, points: usize },
    /// `points` logarithmically spaced values; both ends > 0.
    Log { start: f64, stop: f64, points: usize },
    List { values: Vec<f64> },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let v = match *self {
            Grid::Linear { start, stop, points } | Grid::Log { start, stop, points } => {
                if points == 0 {
                    return Err("grid is empty".into());
                }
                if !start.is_finite() || !stop.is_finite() {
                    return Err("ends must be finite".into());
                }
                let log = matches!(self, Grid::Log { .. });
                if log && !(start > 0.0 && stop > 0.0) {
                    return Err("log grid needs positive ends".into());
                }
                let (a, b) = if log { (start.ln(), stop.ln()) } else { (start, stop) };
                (0..points)
                    .map(|k| {
                        let x = if points == 1 {
                            a
                        } else {
                            a + (b - a) * k as f64 / (points - 1) as f64
                        };
                        if log {
                            x.exp()
                        } else {
                            x
                        }
                    })
                    .collect()
            }
            Grid::List { ref values } => {
                if values.is_empty() {
                    return Err("grid is empty".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err("values must be finite".into());
                }
                values.clone()
            }
        };
        Ok(v)
    }
}

/// Everything about a chain except its length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    /// `1` selects the single-particle site basis.
    pub excitations: usize,
    pub anisotropy: f64,
    pub hopping: f64,
    pub initial: InitialState,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            excitations: 1,
            anisotropy: 0.0,
            hopping: 1.0,
            initial: InitialState::CentralSite,
        }
    }
}

impl ChainParams {
    fn validate(&self, at: &str) -> Result<(), String> {
        if self.excitations == 0 {
            return Err(format!("{at}.excitations: must be at least 1"));
        }
        finite(&format!("{at}.anisotropy"), self.anisotropy)?;
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return Err(format!("{at}.hopping: must be > 0"));
        }
        Ok(())
    }

    pub fn spec(&self, sites: usize) -> ProbeSpec {
        let sector = if self.excitations == 1 {
            Sector::SingleParticle
        } else {
            Sector::Excitations(self.excitations)
        };
        ProbeSpec {
            sites,
            hopping: self.hopping,
            anisotropy: self.anisotropy,
            sector,
            initial: self.initial.clone(),
        }
    }

    pub fn probe(&self, sites: usize, budget: MemoryBudget) -> starkprobe::Result<StarkProbe> {
        StarkProbe::with_budget(self.spec(sites), budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveParams {
    pub sites: usize,
    pub chain: ChainParams,
    pub field: f64,
    pub times: Grid,
}

impl Default for EvolveParams {
    fn default() -> Self {
        Self {
            sites: 100,
            chain: ChainParams {
                initial: InitialState::Site { site: 50 },
                ..ChainParams::default()
            },
            field: 0.5,
            times: Grid::Linear {
                start: 0.0,
                stop: 50.0,
                points: 501,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QfiSweepParams {
    pub sites: Vec<usize>,
    pub chain: ChainParams,
    pub fields: Grid,
    pub window: LongTimeWindow,
    pub with_cfi: bool,
}

impl Default for QfiSweepParams {
    fn default() -> Self {
        Self {
            sites: vec![20, 40, 60, 80, 100],
            chain: ChainParams::default(),
            fields: Grid::Log {
                start: 1e-3,
                stop: 10.0,
                points: 41,
            },
            window: LongTimeWindow::default(),
            with_cfi: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum ScalingRecipe {
    /// Size exponent at a fixed field or at each size's transition.
    SizeScaling(SizeScalingParams),
    /// Local size exponent against `hL/J`.
    BetaScan(BetaScanParams),
    /// Excitation exponent on a fixed chain for each anisotropy.
    AlphaVsDelta(AlphaParams),
    /// Size exponent at fixed `N` for each anisotropy.
    FixedN(FixedNParams),
}

impl Default for ScalingRecipe {
    fn default() -> Self {
        ScalingRecipe::SizeScaling(SizeScalingParams::default())
    }
}

impl ScalingRecipe {
    fn validate(&self) -> Result<(), String> {
        match self {
            ScalingRecipe::SizeScaling(p) => {
                sizes_for_fit("sizes", &p.sizes)?;
                p.chain.validate("chain")?;
                validate_choice(&p.choice)?;
                p.window.validate().map_err(|e| format!("window: {e}"))
            }
            ScalingRecipe::BetaScan(p) => {
                sizes_for_fit("sizes", &p.sizes)?;
                p.chain.validate("chain")?;
                p.fields.values().map_err(|e| format!("fields: {e}"))?;
                if p.span < MIN_FIT_POINTS || p.span > p.sizes.len() {
                    return Err(format!("span: must lie in {MIN_FIT_POINTS}..={}", p.sizes.len()));
                }
                p.window.validate().map_err(|e| format!("window: {e}"))
            }
            ScalingRecipe::AlphaVsDelta(p) => {
                sizes_for_fit("excitations", &p.excitations)?;
                if p.excitations.iter().any(|&n| n == 0 || n >= p.sites) {
                    return Err("excitations: each must lie in 1..sites".into());
                }
                if p.anisotropies.is_empty() {
                    return Err("anisotropies: list is empty".into());
                }
                validate_choice(&p.choice)?;
                p.window.validate().map_err(|e| format!("window: {e}"))
            }
            ScalingRecipe::FixedN(p) => {
                sizes_for_fit("sizes", &p.sizes)?;
                if p.excitations == 0 {
                    return Err("excitations: must be at least 1".into());
                }
                if p.anisotropies.is_empty() {
                    return Err("anisotropies: list is empty".into());
                }
                p.grid.validate().map_err(|e| format!("grid: {e}"))?;
                p.window.validate().map_err(|e| format!("window: {e}"))
            }
        }
    }
}

fn sizes_for_fit(name: &str, v: &[usize]) -> Result<(), String> {
    if v.len() < MIN_FIT_POINTS {
        return Err(format!("{name}: exponent fits use at least {MIN_FIT_POINTS} entries"));
    }
    Ok(())
}

fn validate_choice(choice: &FieldChoice) -> Result<(), String> {
    match choice {
        FieldChoice::Fixed { field } => finite("choice.field", *field),
        FieldChoice::Transition { grid } => grid.validate().map_err(|e| format!("choice.grid: {e}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeScalingParams {
    pub sizes: Vec<usize>,
    pub chain: ChainParams,
    pub choice: FieldChoice,
    pub window: LongTimeWindow,
}

impl Default for SizeScalingParams {
    fn default() -> Self {
        Self {
            sizes: vec![20, 40, 60, 80, 100],
            chain: ChainParams::default(),
            choice: FieldChoice::Transition {
                grid: TransitionGrid::default(),
            },
            window: LongTimeWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaScanParams {
    pub sizes: Vec<usize>,
    pub chain: ChainParams,
    pub fields: Grid,
    /// Consecutive sizes per local fit.
    pub span: usize,
    pub window: LongTimeWindow,
}

impl Default for BetaScanParams {
    fn default() -> Self {
        Self {
            sizes: (20..=100).step_by(4).collect(),
            chain: ChainParams::default(),
            fields: Grid::Log {
                start: 0.02,
                stop: 0.5,
                points: 14,
            },
            span: 4,
            window: LongTimeWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaParams {
    pub sites: usize,
    pub excitations: Vec<usize>,
    pub anisotropies: Vec<f64>,
    pub choice: FieldChoice,
    pub window: LongTimeWindow,
}

impl Default for AlphaParams {
    fn default() -> Self {
        Self {
            sites: 13,
            excitations: (1..=7).collect(),
            anisotropies: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            choice: FieldChoice::Fixed { field: 5.0 },
            window: LongTimeWindow::phase_averaged(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedNParams {
    pub excitations: usize,
    pub sizes: Vec<usize>,
    pub anisotropies: Vec<f64>,
    pub grid: TransitionGrid,
    pub window: LongTimeWindow,
}

impl Default for FixedNParams {
    fn default() -> Self {
        Self {
            excitations: 3,
            sizes: vec![11, 13, 15, 17, 19],
            anisotropies: vec![0.0, 1.0],
            grid: TransitionGrid::default(),
            window: LongTimeWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DephaseParams {
    pub sites: usize,
    pub chain: ChainParams,
    pub fields: Vec<f64>,
    pub gammas: Vec<f64>,
    pub times: Grid,
    /// Central-difference step for `d rho / dh`.
    pub dh: f64,
    pub form: DephasingForm,
    /// Cap on the RK4 step; `None` keeps the built-in limit.
    pub max_step: Option<f64>,
}

impl Default for DephaseParams {
    fn default() -> Self {
        Self {
            sites: 16,
            chain: ChainParams::default(),
            fields: vec![0.1],
            gammas: vec![0.001, 0.005, 0.02],
            times: Grid::List {
                values: vec![100.0, 200.0, 500.0, 1000.0],
            },
            dh: 1e-6,
            form: DephasingForm::SigmaZ,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateParams {
    pub sites: usize,
    pub chain: ChainParams,
    pub time: f64,
    pub h_true: Vec<f64>,
    /// The likelihood grid for each `h_true` spans `h_true +- half_width`.
    pub half_width: f64,
    pub step: f64,
    /// Measurements per repetition (`M`).
    pub samples: u64,
    pub repetitions: usize,
    pub refine: bool,
}

impl Default for EstimateParams {
    fn default() -> Self {
        Self {
            sites: 16,
            chain: ChainParams {
                initial: InitialState::Site { site: 1 },
                ..ChainParams::default()
            },
            time: 500.0,
            h_true: vec![0.1],
            half_width: 1e-3,
            step: 1e-4,
            samples: 100,
            repetitions: 200,
            refine: false,
        }
    }
}

impl EstimateParams {
    pub fn grid(&self, h: f64) -> starkprobe::Result<Vec<f64>> {
        linear_grid(h - self.half_width, h + self.half_width + 0.5 * self.step, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundCheckParams {
    pub sites: Vec<usize>,
    pub chain: ChainParams,
    pub fields: Grid,
    pub times: Grid,
    /// Test hook: multiplies every QFI before the check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrupt_qfi: Option<f64>,
}

impl Default for BoundCheckParams {
    fn default() -> Self {
        Self {
            sites: vec![20, 40],
            chain: ChainParams::default(),
            fields: Grid::Log {
                start: 1e-3,
                stop: 10.0,
                points: 13,
            },
            times: Grid::List {
                values: vec![1.0, 10.0, 100.0, 1000.0],
            },
            corrupt_qfi: None,
        }
    }
}
