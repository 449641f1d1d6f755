//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! dataset.kind = spirals
//! network.hidden = 32
//! msth.profile = full
//! regulator.calcium_threshold = 0.08
//! perturbation.0.kind = weight_corruption
//! perturbation.0.magnitude = 10
//! ```
//!
//! Every key can also be given on the command line as `--set key=value`.
//! [`ExperimentSpec::to_pairs`] lists the fully resolved configuration in a
//! fixed order; its text form is what the config hash covers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{MsthError, Result};
use crate::network::{Activation, LossKind, ScaleSwitches};
use crate::regulators::RegulatorConfig;
use crate::training::{OptimizerKind, PerturbationKind, PerturbationSpec};

pub const DEFAULT_MODEL_SEED: u64 = 42;
pub const DEFAULT_DATA_SEED: u64 = 2023;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_RECOVERY_BAND: f64 = 0.05;
pub const DEFAULT_REPLICATES: usize = 20;
pub const OUTPUT_ROOT_ENV: &str = "MSTH_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Spirals,
    Tabular,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Blobs => "blobs",
            DatasetKind::Spirals => "spirals",
            DatasetKind::Tabular => "tabular",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// synthetic sample count
    pub n: usize,
    /// label-flip probability for blobs, angular noise (radians) for spirals
    pub noise: f64,
    /// blob dimensionality
    pub dims: usize,
    /// blob centre distance in units of the cluster std
    pub separation: f64,
    pub path: Option<PathBuf>,
    pub label_column: String,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            kind: DatasetKind::Blobs,
            n: 400,
            noise: 0.0,
            dims: 2,
            separation: 4.0,
            path: None,
            label_column: "label".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    /// 1 means a single stratified 70/15/15 split
    pub k_folds: usize,
    /// hard cap on steps per fold, 0 for none
    pub max_steps: u64,
    pub eval_every: u64,
    /// epochs without improvement before stopping, 0 disables
    pub patience: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub loss: LossKind,
    pub perf_window: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            epochs: 10,
            batch_size: DEFAULT_BATCH_SIZE,
            k_folds: 1,
            max_steps: 0,
            eval_every: 10,
            patience: 20,
            optimizer: OptimizerKind::Adam,
            lr: 0.001,
            weight_decay: 1e-5,
            loss: LossKind::CrossEntropy,
            perf_window: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: DatasetSpec,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub scales: ScaleSwitches,
    pub coordination: bool,
    pub adaptive_lr: bool,
    pub train: TrainSpec,
    pub regulator: RegulatorConfig,
    pub perturbations: Vec<PerturbationSpec>,
    pub recovery_band: f64,
    /// post-perturbation steps within which recovery must happen
    pub recovery_window: u64,
    pub model_seed: u64,
    pub data_seed: u64,
    /// seed replicates per ablation cell
    pub replicates: usize,
    /// worker threads, 0 for one per core
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".to_string(),
            dataset: DatasetSpec::default(),
            hidden: vec![16],
            activation: Activation::Relu,
            scales: ScaleSwitches::ALL,
            coordination: true,
            adaptive_lr: false,
            train: TrainSpec::default(),
            regulator: RegulatorConfig::default(),
            perturbations: Vec::new(),
            recovery_band: DEFAULT_RECOVERY_BAND,
            recovery_window: 500,
            model_seed: DEFAULT_MODEL_SEED,
            data_seed: DEFAULT_DATA_SEED,
            replicates: DEFAULT_REPLICATES,
            workers: 0,
            output_dir: PathBuf::from("runs/experiment"),
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> MsthError {
    MsthError::Config(format!("{key} = {value:?}: {what}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(key, value, "not a valid number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// Split `text` into `(key, value)` pairs, skipping blanks and comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| MsthError::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(MsthError::Config(format!("line {}: empty key", i + 1)));
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Parse a `key=value` command-line override.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| MsthError::Config(format!("override {arg:?} is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Set one numeric field of a serializable struct by name.
fn set_json_field<T: Serialize + for<'de> Deserialize<'de>>(
    target: &mut T,
    field: &str,
    key: &str,
    value: &str,
) -> Result<()> {
    let mut json = serde_json::to_value(&*target)?;
    let obj = json
        .as_object_mut()
        .expect("struct serializes to an object");
    let slot = obj
        .get_mut(field)
        .ok_or_else(|| bad(key, value, "unknown key"))?;
    *slot = match slot {
        Value::Number(n) if n.is_u64() => Value::from(parse_num::<u64>(key, value)?),
        Value::Number(_) => {
            let x: f64 = parse_num(key, value)?;
            Value::from(x)
        }
        Value::Bool(_) => Value::Bool(parse_bool(key, value)?),
        _ => return Err(bad(key, value, "not settable")),
    };
    *target = serde_json::from_value(json).map_err(|e| bad(key, value, &e.to_string()))?;
    Ok(())
}

fn json_fields<T: Serialize>(prefix: &str, target: &T, out: &mut Vec<(String, String)>) {
    let json = serde_json::to_value(target).expect("config serializes");
    for (k, v) in json.as_object().expect("struct serializes to an object") {
        if v.is_object() {
            continue;
        }
        out.push((format!("{prefix}.{k}"), v.to_string()));
    }
}

impl ExperimentSpec {
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut spec = ExperimentSpec::default();
        for (k, v) in pairs {
            spec.set(k.as_ref(), v.as_ref())?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(parse_pairs(text)?)
    }

    /// Load a config file and apply `overrides` on top.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| MsthError::Config(format!("{}: {e}", path.display())))?;
        let mut pairs = parse_pairs(&text)?;
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(pairs)
    }

    /// Apply one key. Does not validate the whole spec.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| parse_num::<f64>(key, v);
        let int = |v: &str| parse_num::<u64>(key, v);
        let flag = |v: &str| parse_bool(key, v);
        match key {
            "name" => self.name = value.to_string(),
            "dataset.kind" => {
                self.dataset.kind = match value.to_ascii_lowercase().as_str() {
                    "blobs" => DatasetKind::Blobs,
                    "spirals" => DatasetKind::Spirals,
                    "tabular" => DatasetKind::Tabular,
                    _ => return Err(bad(key, value, "expected blobs, spirals or tabular")),
                }
            }
            "dataset.n" => self.dataset.n = int(value)? as usize,
            "dataset.noise" => self.dataset.noise = num(value)?,
            "dataset.dims" => self.dataset.dims = int(value)? as usize,
            "dataset.separation" => self.dataset.separation = num(value)?,
            "dataset.path" => {
                self.dataset.path = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "dataset.label_column" => self.dataset.label_column = value.to_string(),
            "network.hidden" => {
                self.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|s| parse_num::<usize>(key, s.trim()))
                        .collect::<Result<_>>()?
                };
            }
            "network.activation" => {
                self.activation =
                    Activation::parse(value).ok_or_else(|| bad(key, value, "unknown activation"))?
            }
            "msth.profile" => {
                self.scales = ScaleSwitches::profile(value)
                    .ok_or_else(|| bad(key, value, "unknown profile"))?
            }
            "msth.ultra" => self.scales.ultra = flag(value)?,
            "msth.fast" => self.scales.fast = flag(value)?,
            "msth.medium" => self.scales.medium = flag(value)?,
            "msth.slow" => self.scales.slow = flag(value)?,
            "msth.coordination" => self.coordination = flag(value)?,
            "msth.adaptive_lr" => self.adaptive_lr = flag(value)?,
            "train.epochs" => self.train.epochs = int(value)? as usize,
            "train.batch_size" => self.train.batch_size = int(value)? as usize,
            "train.k_folds" => self.train.k_folds = int(value)? as usize,
            "train.max_steps" => self.train.max_steps = int(value)?,
            "train.eval_every" => self.train.eval_every = int(value)?,
            "train.patience" => self.train.patience = int(value)? as usize,
            "train.optimizer" => {
                self.train.optimizer = OptimizerKind::parse(value)
                    .ok_or_else(|| bad(key, value, "expected sgd or adam"))?
            }
            "train.lr" => self.train.lr = num(value)?,
            "train.weight_decay" => self.train.weight_decay = num(value)?,
            "train.loss" => {
                self.train.loss = LossKind::parse(value)
                    .ok_or_else(|| bad(key, value, "expected mse or cross_entropy"))?
            }
            "train.perf_window" => self.train.perf_window = int(value)? as usize,
            "recovery.band" => self.recovery_band = num(value)?,
            "recovery.window" => self.recovery_window = int(value)?,
            "seed.model" => self.model_seed = int(value)?,
            "seed.data" => self.data_seed = int(value)?,
            "run.replicates" => self.replicates = int(value)? as usize,
            "run.workers" => self.workers = int(value)? as usize,
            "output.dir" => self.output_dir = PathBuf::from(value),
            _ => {
                if let Some(field) = key.strip_prefix("regulator.") {
                    return set_json_field(&mut self.regulator, field, key, value);
                }
                if let Some(field) = key.strip_prefix("schedule.") {
                    return set_json_field(&mut self.regulator.schedule, field, key, value);
                }
                if let Some(rest) = key.strip_prefix("perturbation.") {
                    return self.set_perturbation(key, rest, value);
                }
                return Err(bad(key, value, "unknown key"));
            }
        }
        Ok(())
    }

    fn set_perturbation(&mut self, key: &str, rest: &str, value: &str) -> Result<()> {
        let (idx, field) = rest
            .split_once('.')
            .ok_or_else(|| bad(key, value, "expected perturbation.N.field"))?;
        let idx: usize = parse_num(key, idx)?;
        if idx > 64 {
            return Err(bad(key, value, "perturbation index too large"));
        }
        while self.perturbations.len() <= idx {
            self.perturbations.push(PerturbationSpec {
                kind: PerturbationKind::WeightCorruption,
                magnitude: 0.0,
                start_step: 1,
                end_step: 1,
                target_layer: None,
            });
        }
        let p = &mut self.perturbations[idx];
        match field {
            "kind" => {
                p.kind = PerturbationKind::parse(value).ok_or_else(|| {
                    bad(
                        key,
                        value,
                        "expected activation_noise, weight_corruption or input_shift",
                    )
                })?
            }
            "magnitude" => p.magnitude = parse_num(key, value)?,
            "start" => p.start_step = parse_num(key, value)?,
            "end" => p.end_step = parse_num(key, value)?,
            "layer" => {
                p.target_layer = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            _ => return Err(bad(key, value, "unknown perturbation field")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(MsthError::Config(m));
        let d = &self.dataset;
        if d.kind != DatasetKind::Tabular && d.n < 10 {
            return err(format!("dataset.n must be at least 10, got {}", d.n));
        }
        if d.kind == DatasetKind::Blobs {
            if !(2..=16).contains(&d.dims) {
                return err(format!("dataset.dims must be in 2..=16, got {}", d.dims));
            }
            if !(0.0..=1.0).contains(&d.noise) {
                return err(format!(
                    "blob noise is a flip probability in [0, 1], got {}",
                    d.noise
                ));
            }
        }
        if !(d.noise.is_finite() && d.noise >= 0.0) || !d.separation.is_finite() {
            return err("dataset noise and separation must be finite, noise >= 0".into());
        }
        if d.kind == DatasetKind::Tabular && d.path.is_none() {
            return err("dataset.path is required for tabular data".into());
        }
        if self.hidden.contains(&0) {
            return err("network.hidden sizes must be positive".into());
        }
        let t = &self.train;
        if t.epochs == 0
            || t.batch_size == 0
            || t.k_folds == 0
            || t.eval_every == 0
            || t.perf_window == 0
        {
            return err(
                "train.epochs, batch_size, k_folds, eval_every and perf_window must be positive"
                    .into(),
            );
        }
        if !(t.lr.is_finite() && t.lr > 0.0)
            || !(t.weight_decay.is_finite() && t.weight_decay >= 0.0)
        {
            return err("train.lr must be positive and train.weight_decay non-negative".into());
        }
        if !(self.recovery_band > 0.0 && self.recovery_band < 1.0) {
            return err(format!(
                "recovery.band must be in (0, 1), got {}",
                self.recovery_band
            ));
        }
        if self.replicates == 0 {
            return err("run.replicates must be positive".into());
        }
        self.regulator.validate()?;
        for p in &self.perturbations {
            p.validate()?;
            if p.kind != PerturbationKind::InputShift && p.layer() > self.hidden.len() {
                return err(format!(
                    "perturbation layer {} does not exist ({} layers)",
                    p.layer(),
                    self.hidden.len() + 1
                ));
            }
        }
        Ok(())
    }

    /// Every resolved key in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        let d = &self.dataset;
        push("name", self.name.clone());
        push("dataset.kind", d.kind.name().to_string());
        push("dataset.n", d.n.to_string());
        push("dataset.noise", d.noise.to_string());
        push("dataset.dims", d.dims.to_string());
        push("dataset.separation", d.separation.to_string());
        push(
            "dataset.path",
            d.path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        push("dataset.label_column", d.label_column.clone());
        push(
            "network.hidden",
            self.hidden
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        push("network.activation", self.activation.name().to_string());
        push("msth.ultra", self.scales.ultra.to_string());
        push("msth.fast", self.scales.fast.to_string());
        push("msth.medium", self.scales.medium.to_string());
        push("msth.slow", self.scales.slow.to_string());
        push("msth.coordination", self.coordination.to_string());
        push("msth.adaptive_lr", self.adaptive_lr.to_string());
        let t = &self.train;
        push("train.epochs", t.epochs.to_string());
        push("train.batch_size", t.batch_size.to_string());
        push("train.k_folds", t.k_folds.to_string());
        push("train.max_steps", t.max_steps.to_string());
        push("train.eval_every", t.eval_every.to_string());
        push("train.patience", t.patience.to_string());
        push("train.optimizer", t.optimizer.name().to_string());
        push("train.lr", t.lr.to_string());
        push("train.weight_decay", t.weight_decay.to_string());
        push("train.loss", t.loss.name().to_string());
        push("train.perf_window", t.perf_window.to_string());
        push("recovery.band", self.recovery_band.to_string());
        push("recovery.window", self.recovery_window.to_string());
        push("seed.model", self.model_seed.to_string());
        push("seed.data", self.data_seed.to_string());
        push("run.replicates", self.replicates.to_string());
        push("run.workers", self.workers.to_string());
        push("output.dir", self.output_dir.display().to_string());
        json_fields("regulator", &self.regulator, &mut out);
        json_fields("schedule", &self.regulator.schedule, &mut out);
        for (i, p) in self.perturbations.iter().enumerate() {
            out.push((format!("perturbation.{i}.kind"), p.kind.name().to_string()));
            out.push((
                format!("perturbation.{i}.magnitude"),
                p.magnitude.to_string(),
            ));
            out.push((format!("perturbation.{i}.start"), p.start_step.to_string()));
            out.push((format!("perturbation.{i}.end"), p.end_step.to_string()));
            out.push((
                format!("perturbation.{i}.layer"),
                p.target_layer
                    .map(|l| l.to_string())
                    .unwrap_or_else(|| "none".into()),
            ));
        }
        out
    }

    /// Resolved configuration as config-file text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of [`Self::to_text`], hex encoded.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Output directory after applying the output-root environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => {
                PathBuf::from(root).join(&self.output_dir)
            }
            _ => self.output_dir.clone(),
        }
    }

    pub fn regulation_enabled(&self) -> bool {
        self.scales.any()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let text = "
            # spirals benchmark
            dataset.kind = spirals
            network.hidden = 32, 16
            msth.profile = dual_slow
            regulator.calcium_threshold = 0.07
            schedule.fast_every = 5
            perturbation.0.kind = weight_corruption
            perturbation.0.magnitude = 10
            perturbation.0.start = 200
            perturbation.0.end = 249
            perturbation.0.layer = 0
        ";
        let spec = ExperimentSpec::from_text(text).unwrap();
        assert_eq!(spec.hidden, vec![32, 16]);
        assert!(!spec.scales.ultra && spec.scales.medium && spec.scales.slow);
        assert_eq!(spec.regulator.calcium_threshold, 0.07);
        assert_eq!(spec.regulator.schedule.fast_every, 5);
        assert_eq!(spec.perturbations[0].end_step, 249);
        let again = ExperimentSpec::from_text(&spec.to_text()).unwrap();
        assert_eq!(again, spec);
        assert_eq!(again.config_hash(), spec.config_hash());
    }

    #[test]
    fn defaults_follow_protocol() {
        let spec = ExperimentSpec::default();
        assert_eq!((spec.model_seed, spec.data_seed), (42, 2023));
        assert_eq!(spec.train.batch_size, 32);
        assert_eq!(spec.recovery_band, 0.05);
        assert_eq!(spec.config_hash().len(), 64);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "nonsense.key = 1",
            "train.lr = fast",
            "regulator.no_such = 1",
            "msth.profile = quantum",
            "just text",
            "perturbation.0.start = 9\nperturbation.0.end = 3",
            "train.batch_size = 0",
        ] {
            assert!(
                matches!(ExperimentSpec::from_text(text), Err(MsthError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn overrides_win() {
        let mut pairs = parse_pairs("train.lr = 0.01").unwrap();
        pairs.push(parse_override("train.lr=0.05").unwrap());
        assert_eq!(ExperimentSpec::from_pairs(pairs).unwrap().train.lr, 0.05);
    }
}
