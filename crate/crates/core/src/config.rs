//! Experiment configuration: a TOML file of dotted keys such as
//! `dram.banks = 8`, overridable key by key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::fam_codec::Strategy;
use crate::memory_model::{DramGeometry, FaultKind, SramGeometry, VoltageFaultTable};
use crate::memory_sim::PlacementConfig;
use crate::resilience::{MemorySetup, SweepGrid};
use crate::snn::{SnnProfile, UpdateTarget};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("`{key}`: {msg}")]
    Field { key: String, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("{0}: {1}")]
    Syntax(String, String),
}

fn field(key: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError::Field {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

/// Per-memory fault setting: an explicit bit-fault rate, or a supply
/// voltage looked up in a voltage table.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryFaults {
    pub rate: f64,
    pub kind: FaultKind,
    pub voltage: Option<f64>,
    pub voltage_table: Option<PathBuf>,
}

impl MemoryFaults {
    fn new() -> Self {
        Self {
            rate: 0.0,
            kind: FaultKind::Flip,
            voltage: None,
            voltage_table: None,
        }
    }

    /// The effective rate, resolving a voltage through its table.
    pub fn resolve(&self, prefix: &str) -> Result<f64, ConfigError> {
        match (self.voltage, &self.voltage_table) {
            (None, _) => Ok(self.rate),
            (Some(_), None) => Err(field(&format!("{prefix}.voltage_table"), "required when a voltage is set")),
            (Some(v), Some(path)) => {
                let key = format!("{prefix}.voltage");
                let table = VoltageFaultTable::load(path).map_err(|e| field(&format!("{prefix}.voltage_table"), e))?;
                table.rate_at(v).map_err(|e| field(&key, e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Samples `0..train_size` of the training file train the network.
    pub train_size: usize,
    /// The next `validation_size` samples are held out for checkpoints.
    pub validation_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FatmSettings {
    pub factor: f64,
    pub stages: usize,
    pub epochs_per_stage: u32,
    pub patience: u32,
    pub min_delta: f64,
    pub fixed_map: bool,
    pub update: UpdateTarget,
    /// Explicit starting point; found by a sweep on the validation split
    /// when absent.
    pub boundary: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dram: DramGeometry,
    pub sram: SramGeometry,
    pub dram_faults: MemoryFaults,
    pub sram_faults: MemoryFaults,
    pub placement: PlacementConfig,
    pub strategy: Strategy,
    pub profile: SnnProfile,
    pub neurons: usize,
    pub allow_non_square: bool,
    pub epochs: u32,
    pub data: DataConfig,
    pub sweep_dram_rates: Vec<f64>,
    pub sweep_sram_rates: Vec<f64>,
    pub sweep_seeds: usize,
    /// Absolute floor; defaults to fault-free accuracy minus `floor_margin`.
    pub floor: Option<f64>,
    pub floor_margin: f64,
    pub eval_seeds: usize,
    pub fatm: FatmSettings,
}

#[derive(Serialize)]
struct FileView<'a> {
    seed: u64,
    strategy: &'static str,
    dram: DramView<'a>,
    sram: SramView<'a>,
    placement: PlacementView,
    snn: SnnView,
    data: &'a DataConfig,
    sweep: SweepView<'a>,
    eval: EvalView,
    fatm: FatmView,
}

#[derive(Serialize)]
struct DramView<'a> {
    banks: u32,
    subarrays: u32,
    rows: u32,
    columns: u32,
    word_width: u32,
    #[serde(flatten)]
    faults: FaultsView<'a>,
}

#[derive(Serialize)]
struct SramView<'a> {
    banks: u32,
    rows: u32,
    word_width: u32,
    #[serde(flatten)]
    faults: FaultsView<'a>,
}

#[derive(Serialize)]
struct FaultsView<'a> {
    fault_rate: f64,
    fault_kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    voltage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    voltage_table: Option<&'a Path>,
}

impl<'a> From<&'a MemoryFaults> for FaultsView<'a> {
    fn from(m: &'a MemoryFaults) -> Self {
        Self {
            fault_rate: m.rate,
            fault_kind: m.kind.tag(),
            voltage: m.voltage,
            voltage_table: m.voltage_table.as_deref(),
        }
    }
}

#[derive(Serialize)]
struct PlacementView {
    dram_max_faults_per_word: u32,
    sram_max_faults_per_word: u32,
}

#[derive(Serialize)]
struct SnnView {
    neurons: usize,
    allow_non_square: bool,
    epochs: u32,
    #[serde(flatten)]
    profile: BTreeMap<&'static str, f64>,
}

#[derive(Serialize)]
struct SweepView<'a> {
    dram_rates: &'a [f64],
    sram_rates: &'a [f64],
    seeds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    floor: Option<f64>,
    floor_margin: f64,
}

#[derive(Serialize)]
struct EvalView {
    seeds: usize,
}

#[derive(Serialize)]
struct FatmView {
    factor: f64,
    stages: usize,
    epochs_per_stage: u32,
    patience: u32,
    min_delta: f64,
    fixed_map: bool,
    update: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary_dram: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary_sram: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let data = PathBuf::from("data/mnist");
        Self {
            seed: 0,
            dram: DramGeometry::ddr3_2gb(),
            sram: SramGeometry::buffer_32kb(),
            dram_faults: MemoryFaults::new(),
            sram_faults: MemoryFaults::new(),
            placement: PlacementConfig::default(),
            strategy: Strategy::Fam1,
            profile: SnnProfile::default(),
            neurons: 100,
            allow_non_square: false,
            epochs: 1,
            data: DataConfig {
                train_images: data.join("train-images-idx3-ubyte"),
                train_labels: data.join("train-labels-idx1-ubyte"),
                test_images: data.join("test-images-idx3-ubyte"),
                test_labels: data.join("test-labels-idx1-ubyte"),
                train_size: 7000,
                validation_size: 1000,
                test_size: 2000,
            },
            sweep_dram_rates: SweepGrid::default_rates(),
            sweep_sram_rates: SweepGrid::default_rates(),
            sweep_seeds: 5,
            floor: None,
            floor_margin: 0.05,
            eval_seeds: 1,
            fatm: FatmSettings {
                factor: 2.0,
                stages: 3,
                epochs_per_stage: 1,
                patience: 2,
                min_delta: 0.002,
                fixed_map: false,
                update: UpdateTarget::Shadow,
                boundary: None,
            },
        }
    }
}

/// Flattens nested tables into dotted keys.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(field(key, "expected a number")),
    }
}

fn as_u64(key: &str, v: &toml::Value) -> Result<u64, ConfigError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(field(key, "expected a non-negative integer")),
    }
}

fn as_u32(key: &str, v: &toml::Value) -> Result<u32, ConfigError> {
    u32::try_from(as_u64(key, v)?).map_err(|_| field(key, "value too large"))
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| field(key, "expected true or false"))
}

fn as_str<'v>(key: &str, v: &'v toml::Value) -> Result<&'v str, ConfigError> {
    v.as_str().ok_or_else(|| field(key, "expected a string"))
}

fn as_rates(key: &str, v: &toml::Value) -> Result<Vec<f64>, ConfigError> {
    v.as_array()
        .ok_or_else(|| field(key, "expected an array of numbers"))?
        .iter()
        .map(|x| as_f64(key, x))
        .collect()
}

fn probability(key: &str, p: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(field(key, format!("probability {p} outside [0, 1]")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        let mut cfg = Self::default();
        cfg.apply_toml(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn apply_toml(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(origin.into(), e.to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        for (k, v) in &flat {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override; the value uses TOML syntax, with
    /// bare words taken as strings.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax("--set".into(), format!("`{assignment}` is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        self.set(key, &value)
    }

    pub fn set(&mut self, key: &str, v: &toml::Value) -> Result<(), ConfigError> {
        let path = |v: &toml::Value| as_str(key, v).map(PathBuf::from);
        match key {
            "seed" => self.seed = as_u64(key, v)?,
            "strategy" => self.strategy = as_str(key, v)?.parse().map_err(|e| field(key, e))?,
            "dram.banks" => self.dram.banks = as_u32(key, v)?,
            "dram.subarrays" => self.dram.subarrays = as_u32(key, v)?,
            "dram.rows" => self.dram.rows = as_u32(key, v)?,
            "dram.columns" => self.dram.columns = as_u32(key, v)?,
            "dram.word_width" => self.dram.word_width = as_u32(key, v)?,
            "sram.banks" => self.sram.banks = as_u32(key, v)?,
            "sram.rows" => self.sram.rows = as_u32(key, v)?,
            "sram.word_width" => self.sram.word_width = as_u32(key, v)?,
            "dram.fault_rate" => self.dram_faults.rate = probability(key, as_f64(key, v)?)?,
            "sram.fault_rate" => self.sram_faults.rate = probability(key, as_f64(key, v)?)?,
            "dram.fault_kind" => self.dram_faults.kind = as_str(key, v)?.parse().map_err(|e| field(key, e))?,
            "sram.fault_kind" => self.sram_faults.kind = as_str(key, v)?.parse().map_err(|e| field(key, e))?,
            "dram.voltage" => self.dram_faults.voltage = Some(as_f64(key, v)?),
            "sram.voltage" => self.sram_faults.voltage = Some(as_f64(key, v)?),
            "dram.voltage_table" => self.dram_faults.voltage_table = Some(path(v)?),
            "sram.voltage_table" => self.sram_faults.voltage_table = Some(path(v)?),
            "placement.dram_max_faults_per_word" => self.placement.dram_max_faults_per_word = as_u32(key, v)?,
            "placement.sram_max_faults_per_word" => self.placement.sram_max_faults_per_word = as_u32(key, v)?,
            "snn.neurons" => self.neurons = as_u64(key, v)? as usize,
            "snn.allow_non_square" => self.allow_non_square = as_bool(key, v)?,
            "snn.epochs" => self.epochs = as_u32(key, v)?,
            "data.train_images" => self.data.train_images = path(v)?,
            "data.train_labels" => self.data.train_labels = path(v)?,
            "data.test_images" => self.data.test_images = path(v)?,
            "data.test_labels" => self.data.test_labels = path(v)?,
            "data.train_size" => self.data.train_size = as_u64(key, v)? as usize,
            "data.validation_size" => self.data.validation_size = as_u64(key, v)? as usize,
            "data.test_size" => self.data.test_size = as_u64(key, v)? as usize,
            "sweep.dram_rates" => self.sweep_dram_rates = as_rates(key, v)?,
            "sweep.sram_rates" => self.sweep_sram_rates = as_rates(key, v)?,
            "sweep.seeds" => self.sweep_seeds = as_u64(key, v)? as usize,
            "sweep.floor" => self.floor = Some(as_f64(key, v)?),
            "sweep.floor_margin" => self.floor_margin = as_f64(key, v)?,
            "eval.seeds" => self.eval_seeds = as_u64(key, v)? as usize,
            "fatm.factor" => self.fatm.factor = as_f64(key, v)?,
            "fatm.stages" => self.fatm.stages = as_u64(key, v)? as usize,
            "fatm.epochs_per_stage" => self.fatm.epochs_per_stage = as_u32(key, v)?,
            "fatm.patience" => self.fatm.patience = as_u32(key, v)?,
            "fatm.min_delta" => self.fatm.min_delta = as_f64(key, v)?,
            "fatm.fixed_map" => self.fatm.fixed_map = as_bool(key, v)?,
            "fatm.update" => {
                self.fatm.update = match as_str(key, v)? {
                    "shadow" => UpdateTarget::Shadow,
                    "perturbed" => UpdateTarget::Perturbed,
                    other => return Err(field(key, format!("expected shadow or perturbed, got `{other}`"))),
                }
            }
            "fatm.boundary_dram" => {
                let s = self.fatm.boundary.map_or(0.0, |b| b.1);
                self.fatm.boundary = Some((probability(key, as_f64(key, v)?)?, s));
            }
            "fatm.boundary_sram" => {
                let d = self.fatm.boundary.map_or(0.0, |b| b.0);
                self.fatm.boundary = Some((d, probability(key, as_f64(key, v)?)?));
            }
            _ => {
                if let Some(name) = key.strip_prefix("snn.") {
                    self.profile.set(name, as_f64(key, v)?).map_err(|e| field(key, e))?;
                } else {
                    return Err(ConfigError::UnknownKey(key.to_string()));
                }
            }
        }
        Ok(())
    }

    /// The resolved configuration as a file `load` reads back unchanged.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        let d = &self.dram;
        let view = FileView {
            seed: self.seed,
            strategy: self.strategy.name(),
            dram: DramView {
                banks: d.banks,
                subarrays: d.subarrays,
                rows: d.rows,
                columns: d.columns,
                word_width: d.word_width,
                faults: (&self.dram_faults).into(),
            },
            sram: SramView {
                banks: self.sram.banks,
                rows: self.sram.rows,
                word_width: self.sram.word_width,
                faults: (&self.sram_faults).into(),
            },
            placement: PlacementView {
                dram_max_faults_per_word: self.placement.dram_max_faults_per_word,
                sram_max_faults_per_word: self.placement.sram_max_faults_per_word,
            },
            snn: SnnView {
                neurons: self.neurons,
                allow_non_square: self.allow_non_square,
                epochs: self.epochs,
                profile: self.profile.named().into_iter().collect(),
            },
            data: &self.data,
            sweep: SweepView {
                dram_rates: &self.sweep_dram_rates,
                sram_rates: &self.sweep_sram_rates,
                seeds: self.sweep_seeds,
                floor: self.floor,
                floor_margin: self.floor_margin,
            },
            eval: EvalView { seeds: self.eval_seeds },
            fatm: FatmView {
                factor: self.fatm.factor,
                stages: self.fatm.stages,
                epochs_per_stage: self.fatm.epochs_per_stage,
                patience: self.fatm.patience,
                min_delta: self.fatm.min_delta,
                fixed_map: self.fatm.fixed_map,
                update: match self.fatm.update {
                    UpdateTarget::Shadow => "shadow",
                    UpdateTarget::Perturbed => "perturbed",
                },
                boundary_dram: self.fatm.boundary.map(|b| b.0),
                boundary_sram: self.fatm.boundary.map(|b| b.1),
            },
        };
        toml::to_string(&view).map_err(|e| ConfigError::Syntax("resolved config".into(), e.to_string()))
    }

    /// Cross-field checks; every failure names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.dram;
        DramGeometry::new(d.banks, d.subarrays, d.rows, d.columns, d.word_width).map_err(|e| field("dram", e))?;
        SramGeometry::new(self.sram.banks, self.sram.rows, self.sram.word_width).map_err(|e| field("sram", e))?;
        if d.word_width != self.sram.word_width || d.word_width != self.profile.weight_bits {
            return Err(field(
                "dram.word_width",
                format!(
                    "DRAM ({}), buffer ({}) and weight ({}) word widths must agree",
                    d.word_width, self.sram.word_width, self.profile.weight_bits
                ),
            ));
        }
        for (key, b) in [
            ("placement.dram_max_faults_per_word", self.placement.dram_max_faults_per_word),
            ("placement.sram_max_faults_per_word", self.placement.sram_max_faults_per_word),
        ] {
            if b > d.word_width {
                return Err(field(key, format!("budget {b} exceeds word width {}", d.word_width)));
            }
        }
        self.profile.validate().map_err(|e| field("snn", e))?;
        if self.neurons == 0 {
            return Err(field("snn.neurons", "must be at least 1"));
        }
        let root = (self.neurons as f64).sqrt().round() as usize;
        if root * root != self.neurons && !self.allow_non_square {
            return Err(field(
                "snn.neurons",
                format!("{} is not a perfect square (set snn.allow_non_square = true)", self.neurons),
            ));
        }
        if self.epochs == 0 {
            return Err(field("snn.epochs", "must be at least 1"));
        }
        for (key, n) in [
            ("data.train_size", self.data.train_size),
            ("data.test_size", self.data.test_size),
            ("sweep.seeds", self.sweep_seeds),
            ("eval.seeds", self.eval_seeds),
        ] {
            if n == 0 {
                return Err(field(key, "must be at least 1"));
            }
        }
        for (key, rates) in [("sweep.dram_rates", &self.sweep_dram_rates), ("sweep.sram_rates", &self.sweep_sram_rates)] {
            if rates.is_empty() {
                return Err(field(key, "must not be empty"));
            }
            for &r in rates.iter() {
                probability(key, r)?;
            }
            if rates.windows(2).any(|w| w[0] >= w[1]) {
                return Err(field(key, "rates must be strictly ascending"));
            }
        }
        if let Some(f) = self.floor {
            if !(0.0..=1.0).contains(&f) {
                return Err(field("sweep.floor", format!("{f} outside [0, 1]")));
            }
        }
        if !(self.fatm.factor >= 1.0) {
            return Err(field("fatm.factor", "must be at least 1"));
        }
        if self.fatm.stages == 0 || self.fatm.epochs_per_stage == 0 || self.fatm.patience == 0 {
            return Err(field("fatm", "stages, epochs_per_stage and patience must be at least 1"));
        }
        if !(self.fatm.min_delta >= 0.0) {
            return Err(field("fatm.min_delta", "must be non-negative"));
        }
        Ok(())
    }

    pub fn memory_setup(&self) -> MemorySetup {
        MemorySetup {
            dram: self.dram,
            sram: self.sram,
            placement: PlacementConfig {
                word_width: self.dram.word_width,
                ..self.placement
            },
            dram_fault_kind: self.dram_faults.kind,
            sram_fault_kind: self.sram_faults.kind,
        }
    }

    /// The data files the command reads must exist.
    pub fn check_data_paths(&self, need_train: bool, need_test: bool) -> Result<(), ConfigError> {
        let mut paths = Vec::new();
        if need_train {
            paths.push(("data.train_images", &self.data.train_images));
            paths.push(("data.train_labels", &self.data.train_labels));
        }
        if need_test {
            paths.push(("data.test_images", &self.data.test_images));
            paths.push(("data.test_labels", &self.data.test_labels));
        }
        for (key, p) in paths {
            if !p.is_file() {
                return Err(field(key, format!("file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_sections_agree() {
        let mut a = ExperimentConfig::default();
        a.apply_toml("dram.banks = 4\nsnn.v_threshold = -50.0\n", "a").unwrap();
        let mut b = ExperimentConfig::default();
        b.apply_toml("[dram]\nbanks = 4\n[snn]\nv_threshold = -50\n", "b").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dram.banks, 4);
        assert_eq!(a.profile.lif.v_threshold, -50.0);
    }

    #[test]
    fn overrides_parse_values() {
        let mut c = ExperimentConfig::default();
        c.apply_override("strategy=fam2").unwrap();
        c.apply_override("sweep.dram_rates=[0, 1e-3]").unwrap();
        c.apply_override("fatm.fixed_map = true").unwrap();
        assert_eq!(c.strategy, Strategy::Fam2);
        assert_eq!(c.sweep_dram_rates, vec![0.0, 1e-3]);
        assert!(c.fatm.fixed_map);
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = ExperimentConfig::default();
        let e = c.apply_override("dram.fault_rate=1.5").unwrap_err();
        assert!(e.to_string().contains("dram.fault_rate"), "{e}");
        assert!(matches!(c.apply_override("nope=1"), Err(ConfigError::UnknownKey(_))));
        c.placement.sram_max_faults_per_word = 9;
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("placement.sram_max_faults_per_word"), "{e}");
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut c = ExperimentConfig::default();
        c.apply_override("sram.rows=0").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("sram"));
    }

    #[test]
    fn non_square_needs_opt_in() {
        let mut c = ExperimentConfig::default();
        c.neurons = 50;
        assert!(c.validate().is_err());
        c.allow_non_square = true;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn resolved_file_round_trips() {
        let mut c = ExperimentConfig::default();
        for o in [
            "seed=17",
            "strategy=fam2",
            "sram.fault_kind=sa1",
            "dram.fault_rate=3e-4",
            "sweep.dram_rates=[0, 1e-6, 0.05]",
            "sweep.floor=0.6",
            "snn.weight_norm=10.5",
            "snn.min_spikes=7",
            "fatm.boundary_sram=2e-3",
            "fatm.update=perturbed",
        ] {
            c.apply_override(o).unwrap();
        }
        let text = c.to_toml().unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_toml(&text, "resolved").unwrap();
        assert_eq!(back, c, "{text}");
    }
}
