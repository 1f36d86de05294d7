//! End-to-end experiments: configuration and the train / degrade / recover
//! / evaluate / proxcheck stages.
//!
//! Every stage reads its inputs from the output directory (or regenerates
//! them from the config) and writes its artifacts there, so stages can be
//! run one at a time or chained. All randomness is derived from the global
//! seed, and every file is written from the calling thread, so a fixed
//! config gives byte-identical outputs.
//!
//! Config files are flat `key = value` lines; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::autoencoder::{
    Activation, Autoencoder, AutoencoderModel, FcArchitecture, Model, TiedAutoencoder,
};
use crate::degradation::{degrade, generate_mask, DegradationSpec, ErasureMask, MaskPattern};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::io::{self, fmt_f64, ImageRecord};
use crate::metrics::{mse, psnr, summarize, EvalSummary, EvalThresholds};
use crate::numerics::{derive_seed, Rng, Vector};
use crate::parallel::map_indexed;
use crate::proxcheck::{check_model, default_probe_points};
use crate::recovery::{
    baseline_iterate, default_gamma, recover_known_h, recover_unknown_h, MaskInit, RecoveryConfig,
    RecoveryResult,
};
use crate::synth::synthetic_images;
use crate::trainer::{train, BatchSize, TrainConfig};

const STREAM_MASK: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_MASK_INIT: u64 = 4;
const STREAM_CONTROL: u64 = 5;
const STREAM_PROBES: u64 = 6;

/// ADMM penalty used for noisy observations when `recover.gamma = auto`.
pub const NOISY_GAMMA: f64 = 2.0;

pub const MODEL_FILE: &str = "model.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const TRAIN_IMAGES_FILE: &str = "train_images.mprb";
pub const DEGRADED_FILE: &str = "degraded.mprb";
pub const DEGRADATION_FILE: &str = "degradation.json";
pub const MASK_DIR: &str = "masks";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PROXCHECK_FILE: &str = "proxcheck.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";
const CONTROL_LABEL: &str = "control";

/// Where images come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Procedural images (see [`crate::synth`]).
    Synthetic { count: usize },
    /// A directory of PGM/PPM/MPRB files, or a single such file.
    Path(PathBuf),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic { .. } => f.write_str("synthetic"),
            DataSource::Path(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Fc,
    Tied,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub latent: usize,
    /// Layer count for FC models (even).
    pub depth: usize,
    pub activation: Activation,
    pub bias: bool,
}

impl ModelSpec {
    pub fn build(&self, d: usize, rng: &mut Rng) -> Result<Model> {
        match self.kind {
            ModelKind::Fc => {
                let mut arch =
                    FcArchitecture::mirrored(d, self.latent, self.depth, self.activation)?;
                arch.bias = self.bias;
                Ok(Model::Deep(AutoencoderModel::new_fc(&arch, rng)?))
            }
            ModelKind::Tied => Ok(Model::Tied(TiedAutoencoder::random(
                d,
                self.latent,
                self.activation,
                rng,
            )?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RecoveryMode {
    UnknownH,
    KnownH,
    Baseline,
}

impl RecoveryMode {
    pub const ALL: [RecoveryMode; 3] = [
        RecoveryMode::UnknownH,
        RecoveryMode::KnownH,
        RecoveryMode::Baseline,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RecoveryMode::UnknownH => "unknown-h",
            RecoveryMode::KnownH => "known-h",
            RecoveryMode::Baseline => "baseline",
        }
    }
}

impl fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecoveryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "unknown-h" | "unknown" | "blind" => Ok(RecoveryMode::UnknownH),
            "known-h" | "known" => Ok(RecoveryMode::KnownH),
            "baseline" => Ok(RecoveryMode::Baseline),
            other => Err(Error::Config(format!("unknown recovery mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskInitKind {
    Zeros,
    BernoulliHalf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataSource,
    /// Seed for synthetic images; the global seed when unset.
    pub data_seed: Option<u64>,
    pub geometry: Geometry,
    pub limit: Option<usize>,
    /// Images the model was not trained on, recovered as a control.
    pub control: Option<DataSource>,
    pub model: ModelSpec,
    /// Model to load in later stages; `<output>/model.bin` when unset.
    pub model_path: Option<PathBuf>,
    pub train: TrainConfig,
    /// Training seed; the global seed when unset.
    pub train_seed: Option<u64>,
    pub mask: MaskPattern,
    pub sigma_eps: f64,
    pub noise_on_kept_only: bool,
    /// `None` picks [`default_gamma`] for the model on clean data and
    /// [`NOISY_GAMMA`] when `sigma_eps > 0`.
    pub gamma: Option<f64>,
    pub admm_iters: usize,
    pub outer_tol: f64,
    pub patience: usize,
    pub max_outer: usize,
    pub mask_init: MaskInitKind,
    pub baseline_max_iters: usize,
    pub baseline_tol: f64,
    pub modes: Vec<RecoveryMode>,
    pub thresholds: EvalThresholds,
    pub probes: usize,
    pub prox_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let rc = RecoveryConfig::default();
        ExperimentConfig {
            seed: 42,
            output: PathBuf::from("out"),
            data: DataSource::Synthetic { count: 20 },
            data_seed: None,
            geometry: Geometry {
                height: 16,
                width: 16,
                channels: 1,
            },
            limit: None,
            control: None,
            model: ModelSpec {
                kind: ModelKind::Fc,
                latent: 64,
                depth: 10,
                activation: Activation::LeakyRelu { slope: 0.01 },
                bias: true,
            },
            model_path: None,
            train: TrainConfig {
                loss_checkpoints: vec![1e-4, 1e-6, 1e-8, 1e-10],
                ..TrainConfig::default()
            },
            train_seed: None,
            mask: MaskPattern::UniformRandom { p_erase: 0.5 },
            sigma_eps: 0.0,
            noise_on_kept_only: false,
            gamma: None,
            admm_iters: rc.admm_iters,
            outer_tol: rc.outer_tol,
            patience: rc.patience,
            max_outer: rc.max_outer,
            mask_init: MaskInitKind::BernoulliHalf,
            baseline_max_iters: crate::recovery::BASELINE_MAX_ITERS,
            baseline_tol: crate::recovery::BASELINE_TOL,
            modes: RecoveryMode::ALL.to_vec(),
            thresholds: EvalThresholds::default(),
            probes: 16,
            prox_tol: 1e-6,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean '{value}' for {key}"))),
    }
}

fn parse_source(value: &str) -> DataSource {
    if value == "synthetic" {
        DataSource::Synthetic { count: 20 }
    } else {
        DataSource::Path(PathBuf::from(value))
    }
}

fn fmt_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| fmt_f64(v))
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Defaults overridden by the `key = value` lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text)
    }

    /// Applies one setting. `train.loss_target` replaces the checkpoint
    /// list's tail: thresholds above the target are kept, then the target.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "data.source" => {
                let count = match self.data {
                    DataSource::Synthetic { count } => count,
                    DataSource::Path(_) => 20,
                };
                self.data = match parse_source(value) {
                    DataSource::Synthetic { .. } => DataSource::Synthetic { count },
                    p => p,
                };
            }
            "data.count" => match &mut self.data {
                DataSource::Synthetic { count } => *count = parse(key, value)?,
                DataSource::Path(_) => {
                    return Err(Error::Config("data.count applies to synthetic data".into()))
                }
            },
            "data.seed" => self.data_seed = Some(parse(key, value)?),
            "data.height" => self.geometry.height = parse(key, value)?,
            "data.width" => self.geometry.width = parse(key, value)?,
            "data.channels" => self.geometry.channels = parse(key, value)?,
            "data.limit" => {
                self.limit = if value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "data.control" => {
                self.control = match value {
                    "none" => None,
                    v => Some(parse_source(v)),
                }
            }
            "data.control_count" => match &mut self.control {
                Some(DataSource::Synthetic { count }) => *count = parse(key, value)?,
                _ => {
                    return Err(Error::Config(
                        "data.control_count needs data.control = synthetic first".into(),
                    ))
                }
            },
            "model.kind" => {
                self.model.kind = match value {
                    "fc" | "deep" => ModelKind::Fc,
                    "tied" => ModelKind::Tied,
                    _ => return Err(Error::Config(format!("unknown model kind '{value}'"))),
                }
            }
            "model.latent" => self.model.latent = parse(key, value)?,
            "model.depth" => self.model.depth = parse(key, value)?,
            "model.activation" => self.model.activation = value.parse()?,
            "model.bias" => self.model.bias = parse_bool(key, value)?,
            "model.path" => {
                self.model_path = (value != "none").then(|| PathBuf::from(value));
            }
            "train.lr" => self.train.learning_rate = parse(key, value)?,
            "train.beta1" => self.train.beta1 = parse(key, value)?,
            "train.beta2" => self.train.beta2 = parse(key, value)?,
            "train.eps" => self.train.eps = parse(key, value)?,
            "train.batch_size" => {
                self.train.batch_size = if value == "full" {
                    BatchSize::Full
                } else {
                    BatchSize::Fixed(parse(key, value)?)
                }
            }
            "train.seed" => self.train_seed = Some(parse(key, value)?),
            "train.checkpoints" => {
                self.train.loss_checkpoints = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "train.loss_target" => {
                let target: f64 = parse(key, value)?;
                self.train.loss_checkpoints.retain(|&t| t > target);
                self.train.loss_checkpoints.push(target);
            }
            "train.max_epochs" => self.train.max_epochs = parse(key, value)?,
            "train.decay_patience" => self.train.decay_patience = parse(key, value)?,
            "train.decay_factor" => self.train.decay_factor = parse(key, value)?,
            "train.min_lr" => self.train.min_learning_rate = parse(key, value)?,
            "degrade.mask" => self.mask = value.parse()?,
            "degrade.sigma_eps" => self.sigma_eps = parse(key, value)?,
            "degrade.noise_on_kept_only" => self.noise_on_kept_only = parse_bool(key, value)?,
            "recover.gamma" => {
                self.gamma = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "recover.admm_iters" => self.admm_iters = parse(key, value)?,
            "recover.outer_tol" => self.outer_tol = parse(key, value)?,
            "recover.patience" => self.patience = parse(key, value)?,
            "recover.max_outer" => self.max_outer = parse(key, value)?,
            "recover.mask_init" => {
                self.mask_init = match value {
                    "bernoulli_half" => MaskInitKind::BernoulliHalf,
                    "zeros" => MaskInitKind::Zeros,
                    _ => return Err(Error::Config(format!("unknown mask init '{value}'"))),
                }
            }
            "recover.baseline_max_iters" => self.baseline_max_iters = parse(key, value)?,
            "recover.baseline_tol" => self.baseline_tol = parse(key, value)?,
            "recover.modes" => {
                self.modes = value
                    .split(',')
                    .map(RecoveryMode::from_str)
                    .collect::<Result<_>>()?
            }
            "eval.accurate" => self.thresholds.accurate = parse(key, value)?,
            "eval.approximate" => self.thresholds.approximate = parse(key, value)?,
            "proxcheck.probes" => self.probes = parse(key, value)?,
            "proxcheck.tol" => self.prox_tol = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        Geometry::new(
            self.geometry.height,
            self.geometry.width,
            self.geometry.channels,
        )?;
        if let DataSource::Synthetic { count: 0 } = self.data {
            return Err(Error::Config("data.count must be >= 1".into()));
        }
        if self.limit == Some(0) {
            return Err(Error::Config("data.limit must be >= 1".into()));
        }
        if self.model.latent == 0 {
            return Err(Error::Config("model.latent must be >= 1".into()));
        }
        if self.model.kind == ModelKind::Fc
            && (self.model.depth < 2 || !self.model.depth.is_multiple_of(2))
        {
            return Err(Error::Config("model.depth must be even and >= 2".into()));
        }
        self.model.activation.validate()?;
        self.train_config().validate()?;
        self.mask.validate()?;
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::Config("degrade.sigma_eps must be >= 0".into()));
        }
        self.recovery_config(1.0).validate()?;
        if let Some(g) = self.gamma {
            self.recovery_config(g).validate()?;
        }
        if self.baseline_max_iters == 0 {
            return Err(Error::Config(
                "recover.baseline_max_iters must be >= 1".into(),
            ));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("recover.modes must not be empty".into()));
        }
        let t = self.thresholds;
        if !(t.accurate > 0.0 && t.accurate < t.approximate) {
            return Err(Error::Config(
                "need 0 < eval.accurate < eval.approximate".into(),
            ));
        }
        if self.probes == 0 {
            return Err(Error::Config("proxcheck.probes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.train_seed.unwrap_or(self.seed),
            ..self.train.clone()
        }
    }

    /// Recovery settings before per-sample seed derivation.
    pub fn recovery_config(&self, gamma: f64) -> RecoveryConfig {
        RecoveryConfig {
            gamma,
            admm_iters: self.admm_iters,
            outer_tol: self.outer_tol,
            patience: self.patience,
            max_outer: self.max_outer,
            mask_init: match self.mask_init {
                MaskInitKind::Zeros => MaskInit::Zeros,
                MaskInitKind::BernoulliHalf => MaskInit::BernoulliHalf {
                    seed: derive_seed(self.seed, STREAM_MASK_INIT),
                },
            },
        }
    }

    pub fn gamma_for(&self, model: &Model) -> f64 {
        match self.gamma {
            Some(g) => g,
            None if self.sigma_eps > 0.0 => NOISY_GAMMA,
            None => default_gamma(model),
        }
    }

    pub fn model_file(&self) -> PathBuf {
        self.model_path
            .clone()
            .unwrap_or_else(|| self.output.join(MODEL_FILE))
    }

    /// Degradation of sample `index`: mask and noise drawn from streams
    /// derived from the global seed.
    pub fn degradation_for(&self, index: usize) -> Result<DegradationSpec> {
        let mask_seed = derive_seed(derive_seed(self.seed, STREAM_MASK), index as u64);
        let mask = generate_mask(&self.mask, self.geometry, &mut Rng::new(mask_seed))?;
        Ok(DegradationSpec {
            mask,
            sigma_eps: self.sigma_eps,
            noise_on_kept_only: self.noise_on_kept_only,
            seed: derive_seed(derive_seed(self.seed, STREAM_NOISE), index as u64),
        })
    }

    /// Every setting as `key = value` lines, in a fixed order. Parsing the
    /// result gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("output".into(), self.output.display().to_string()),
            ("data.source".into(), self.data.to_string()),
        ];
        if let DataSource::Synthetic { count } = self.data {
            lines.push(("data.count".into(), count.to_string()));
        }
        if let Some(s) = self.data_seed {
            lines.push(("data.seed".into(), s.to_string()));
        }
        lines.extend([
            ("data.height".into(), self.geometry.height.to_string()),
            ("data.width".into(), self.geometry.width.to_string()),
            ("data.channels".into(), self.geometry.channels.to_string()),
            (
                "data.limit".into(),
                self.limit.map_or("none".into(), |l| l.to_string()),
            ),
            (
                "data.control".into(),
                self.control
                    .as_ref()
                    .map_or("none".into(), |c| c.to_string()),
            ),
        ]);
        if let Some(DataSource::Synthetic { count }) = self.control {
            lines.push(("data.control_count".into(), count.to_string()));
        }
        let kind = match self.model.kind {
            ModelKind::Fc => "fc",
            ModelKind::Tied => "tied",
        };
        lines.extend([
            ("model.kind".into(), kind.into()),
            ("model.latent".into(), self.model.latent.to_string()),
            ("model.depth".into(), self.model.depth.to_string()),
            ("model.activation".into(), self.model.activation.to_string()),
            ("model.bias".into(), self.model.bias.to_string()),
        ]);
        if let Some(p) = &self.model_path {
            lines.push(("model.path".into(), p.display().to_string()));
        }
        let t = &self.train;
        lines.extend([
            ("train.lr".into(), fmt_f64(t.learning_rate)),
            ("train.beta1".into(), fmt_f64(t.beta1)),
            ("train.beta2".into(), fmt_f64(t.beta2)),
            ("train.eps".into(), fmt_f64(t.eps)),
            (
                "train.batch_size".into(),
                match t.batch_size {
                    BatchSize::Full => "full".into(),
                    BatchSize::Fixed(b) => b.to_string(),
                },
            ),
        ]);
        if let Some(s) = self.train_seed {
            lines.push(("train.seed".into(), s.to_string()));
        }
        lines.extend([
            ("train.checkpoints".into(), fmt_list(&t.loss_checkpoints)),
            ("train.max_epochs".into(), t.max_epochs.to_string()),
            ("train.decay_patience".into(), t.decay_patience.to_string()),
            ("train.decay_factor".into(), fmt_f64(t.decay_factor)),
            ("train.min_lr".into(), fmt_f64(t.min_learning_rate)),
            ("degrade.mask".into(), self.mask.to_string()),
            ("degrade.sigma_eps".into(), fmt_f64(self.sigma_eps)),
            (
                "degrade.noise_on_kept_only".into(),
                self.noise_on_kept_only.to_string(),
            ),
            (
                "recover.gamma".into(),
                self.gamma.map_or("auto".into(), fmt_f64),
            ),
            ("recover.admm_iters".into(), self.admm_iters.to_string()),
            ("recover.outer_tol".into(), fmt_f64(self.outer_tol)),
            ("recover.patience".into(), self.patience.to_string()),
            ("recover.max_outer".into(), self.max_outer.to_string()),
            (
                "recover.mask_init".into(),
                match self.mask_init {
                    MaskInitKind::Zeros => "zeros".into(),
                    MaskInitKind::BernoulliHalf => "bernoulli_half".into(),
                },
            ),
            (
                "recover.baseline_max_iters".into(),
                self.baseline_max_iters.to_string(),
            ),
            ("recover.baseline_tol".into(), fmt_f64(self.baseline_tol)),
            (
                "recover.modes".into(),
                self.modes
                    .iter()
                    .map(|m| m.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eval.accurate".into(), fmt_f64(self.thresholds.accurate)),
            (
                "eval.approximate".into(),
                fmt_f64(self.thresholds.approximate),
            ),
            ("proxcheck.probes".into(), self.probes.to_string()),
            ("proxcheck.tol".into(), fmt_f64(self.prox_tol)),
        ]);
        lines
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn load_source(
    source: &DataSource,
    cfg: &ExperimentConfig,
    seed: u64,
    prefix: &str,
) -> Result<Vec<ImageRecord>> {
    match source {
        DataSource::Synthetic { count } => Ok(synthetic_images(*count, cfg.geometry, seed)?
            .into_iter()
            .enumerate()
            .map(|(i, data)| ImageRecord {
                sample_id: format!("{prefix}_{i:03}"),
                data,
                geometry: cfg.geometry,
            })
            .collect()),
        DataSource::Path(p) => io::load_dataset(p, Some(cfg.geometry), cfg.limit, cfg.seed),
    }
}

/// The training images described by the config.
pub fn load_training_set(cfg: &ExperimentConfig) -> Result<Vec<ImageRecord>> {
    load_source(&cfg.data, cfg, cfg.data_seed.unwrap_or(cfg.seed), "img")
}

/// The control (non-training) images, if configured.
pub fn load_control_set(cfg: &ExperimentConfig) -> Result<Option<Vec<ImageRecord>>> {
    let seed = derive_seed(cfg.data_seed.unwrap_or(cfg.seed), STREAM_CONTROL);
    cfg.control
        .as_ref()
        .map(|c| load_source(c, cfg, seed, "ctl"))
        .transpose()
}

fn vectors(records: &[ImageRecord]) -> Vec<Vector> {
    records.iter().map(|r| r.data.clone()).collect()
}

fn checkpoint_file(threshold: f64) -> String {
    format!("checkpoint_{threshold:e}.bin")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    io::write_file(path, text)
}

#[derive(Serialize)]
struct CheckpointInfo {
    threshold: f64,
    epoch: usize,
    loss: f64,
    file: String,
}

#[derive(Serialize)]
struct TrainSummary {
    model: String,
    parameters: usize,
    reached_target: bool,
    final_loss: f64,
    epochs: usize,
    checkpoints: Vec<CheckpointInfo>,
}

/// Trains the configured model and writes the final model, one file per
/// loss checkpoint, the training log, and the training images.
pub fn run_train(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let records = load_training_set(cfg)?;
    let data = vectors(&records);
    let mut rng = Rng::new(cfg.seed);
    let model = cfg.model.build(cfg.geometry.len(), &mut rng)?;
    let describe = model.describe();
    let parameters = crate::trainer::Trainable::num_params(&model);
    let outcome = train(model, &data, &cfg.train_config())?;

    let out = &cfg.output;
    io::write_file(&out.join(RESOLVED_CONFIG_FILE), cfg.to_text())?;
    io::write_tensor(&out.join(TRAIN_IMAGES_FILE), cfg.geometry, &data)?;
    io::save_model(&out.join(MODEL_FILE), &outcome.model)?;
    for c in &outcome.checkpoints {
        io::save_model(&out.join(checkpoint_file(c.threshold)), &c.model)?;
    }
    let mut log = String::from("epoch,loss,lr\n");
    for e in &outcome.log {
        log.push_str(&format!(
            "{},{},{}\n",
            e.epoch,
            fmt_f64(e.loss),
            fmt_f64(e.learning_rate)
        ));
    }
    io::write_file(&out.join(TRAIN_LOG_FILE), log)?;
    let summary = TrainSummary {
        model: describe.clone(),
        parameters,
        reached_target: outcome.reached_target,
        final_loss: outcome.final_loss,
        epochs: outcome.epochs,
        checkpoints: outcome
            .checkpoints
            .iter()
            .map(|c| CheckpointInfo {
                threshold: c.threshold,
                epoch: c.epoch,
                loss: c.loss,
                file: checkpoint_file(c.threshold),
            })
            .collect(),
    };
    write_json(&out.join(TRAIN_SUMMARY_FILE), &summary)?;

    let mut msg = format!(
        "train: {describe} ({parameters} parameters) on {} images, loss {} after {} epochs",
        data.len(),
        fmt_f64(outcome.final_loss),
        outcome.epochs
    );
    if !outcome.reached_target {
        msg.push_str(&format!(
            " (target {} not reached)",
            fmt_f64(cfg.train.target_loss())
        ));
    }
    Ok(msg)
}

#[derive(Serialize)]
struct DegradedSample {
    sample_id: String,
    mask_file: String,
    kept_fraction: f64,
}

#[derive(Serialize)]
struct DegradationInfo {
    mask_pattern: String,
    sigma_eps: f64,
    noise_on_kept_only: bool,
    samples: Vec<DegradedSample>,
}

fn mask_file(index: usize) -> String {
    format!("{MASK_DIR}/{index:03}.mask")
}

/// Degrades every training image and writes the observations and masks.
pub fn run_degrade(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let records = load_training_set(cfg)?;
    let mut observed = Vec::with_capacity(records.len());
    let mut samples = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let spec = cfg.degradation_for(i)?;
        observed.push(degrade(&r.data, &spec)?);
        io::write_mask(&cfg.output.join(mask_file(i)), &spec.mask)?;
        samples.push(DegradedSample {
            sample_id: r.sample_id.clone(),
            mask_file: mask_file(i),
            kept_fraction: spec.mask.kept_fraction(),
        });
    }
    io::write_tensor(&cfg.output.join(DEGRADED_FILE), cfg.geometry, &observed)?;
    write_json(
        &cfg.output.join(DEGRADATION_FILE),
        &DegradationInfo {
            mask_pattern: cfg.mask.to_string(),
            sigma_eps: cfg.sigma_eps,
            noise_on_kept_only: cfg.noise_on_kept_only,
            samples,
        },
    )?;
    Ok(format!(
        "degrade: {} images with {} (sigma_eps {})",
        records.len(),
        cfg.mask,
        fmt_f64(cfg.sigma_eps)
    ))
}

fn serialize_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(&fmt_f64(*v))
    } else {
        s.serialize_f64(*v)
    }
}

/// Outcome of recovering one sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryRecord {
    pub sample_id: String,
    pub converged: bool,
    pub outer_iters: usize,
    pub final_mse: f64,
    /// `"inf"` in JSON for exact recoveries.
    #[serde(serialize_with = "serialize_psnr")]
    pub final_psnr: f64,
    /// Coordinates where the estimated mask differs from the true one;
    /// absent for methods that do not estimate a mask.
    pub mask_hamming_error: Option<usize>,
}

impl RecoveryRecord {
    pub fn new(
        sample_id: &str,
        result: &RecoveryResult,
        truth: &[f64],
        mask: &ErasureMask,
    ) -> Result<Self> {
        let final_mse = mse(&result.estimate, truth)?;
        Ok(RecoveryRecord {
            sample_id: sample_id.to_string(),
            converged: result.converged,
            outer_iters: result.outer_iters,
            final_mse,
            final_psnr: psnr(final_mse),
            mask_hamming_error: result
                .mask_estimate
                .as_ref()
                .map(|m| m.hamming(mask))
                .transpose()?,
        })
    }
}

/// Runs one recovery method on observation `y` of sample `index`.
pub fn recover_sample(
    cfg: &ExperimentConfig,
    model: &Model,
    mode: RecoveryMode,
    index: usize,
    y: &[f64],
    mask: &ErasureMask,
) -> Result<RecoveryResult> {
    let rc = cfg.recovery_config(cfg.gamma_for(model)).for_sample(index);
    match mode {
        RecoveryMode::UnknownH => recover_unknown_h(model, y, &rc, None),
        RecoveryMode::KnownH => recover_known_h(model, y, mask, &rc, cfg.sigma_eps == 0.0, None),
        RecoveryMode::Baseline => {
            baseline_iterate(model, y, cfg.baseline_max_iters, cfg.baseline_tol, None)
        }
    }
}

fn estimates_file(label: &str) -> String {
    format!("estimates_{label}.mprb")
}

fn records_file(label: &str) -> String {
    format!("records_{label}.json")
}

fn recover_set(
    cfg: &ExperimentConfig,
    model: &Model,
    mode: RecoveryMode,
    label: &str,
    records: &[ImageRecord],
    observed: &[Vector],
    masks: &[ErasureMask],
) -> Result<Vec<RecoveryRecord>> {
    let jobs: Vec<usize> = (0..records.len()).collect();
    let results = map_indexed(&jobs, |_, &i| {
        recover_sample(cfg, model, mode, i, &observed[i], &masks[i])
    })?;
    let estimates: Vec<Vector> = results.iter().map(|r| r.estimate.clone()).collect();
    let recs = results
        .iter()
        .zip(records)
        .zip(masks)
        .map(|((res, rec), mask)| RecoveryRecord::new(&rec.sample_id, res, &rec.data, mask))
        .collect::<Result<Vec<_>>>()?;
    io::write_tensor(
        &cfg.output.join(estimates_file(label)),
        cfg.geometry,
        &estimates,
    )?;
    write_json(&cfg.output.join(records_file(label)), &recs)?;
    Ok(recs)
}

/// Runs every configured recovery mode on the degraded training images
/// (and the control set, with the unknown-mask method, when configured).
pub fn run_recover(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let model = io::load_model(&cfg.model_file())?;
    if model.dim() != cfg.geometry.len() {
        return Err(Error::dims(
            "model dimension",
            cfg.geometry.len(),
            model.dim(),
        ));
    }
    let records = load_training_set(cfg)?;
    let (geometry, observed) = io::read_tensor(&cfg.output.join(DEGRADED_FILE))?;
    if geometry != cfg.geometry || observed.len() != records.len() {
        return Err(Error::Config(format!(
            "{} does not match the configured dataset; rerun degrade",
            DEGRADED_FILE
        )));
    }
    let masks = (0..records.len())
        .map(|i| io::read_mask(&cfg.output.join(mask_file(i))))
        .collect::<Result<Vec<_>>>()?;

    let mut lines = Vec::new();
    for &mode in &cfg.modes {
        let recs = recover_set(
            cfg,
            &model,
            mode,
            mode.as_str(),
            &records,
            &observed,
            &masks,
        )?;
        let converged = recs.iter().filter(|r| r.converged).count();
        lines.push(format!(
            "recover {mode}: {} samples, {converged} converged",
            recs.len()
        ));
    }
    if let Some(control) = load_control_set(cfg)? {
        let specs = (0..control.len())
            .map(|i| cfg.degradation_for(i))
            .collect::<Result<Vec<_>>>()?;
        let observed = control
            .iter()
            .zip(&specs)
            .map(|(r, s)| degrade(&r.data, s))
            .collect::<Result<Vec<_>>>()?;
        let masks: Vec<ErasureMask> = specs.into_iter().map(|s| s.mask).collect();
        let recs = recover_set(
            cfg,
            &model,
            RecoveryMode::UnknownH,
            CONTROL_LABEL,
            &control,
            &observed,
            &masks,
        )?;
        lines.push(format!(
            "recover control (unknown-h): {} samples",
            recs.len()
        ));
    }
    Ok(lines.join("\n"))
}

#[derive(Serialize)]
struct SummaryFile {
    n: usize,
    thresholds: EvalThresholds,
    modes: BTreeMap<String, EvalSummary>,
}

fn evaluate_set(
    cfg: &ExperimentConfig,
    label: &str,
    records: &[ImageRecord],
) -> Result<Option<EvalSummary>> {
    let path = cfg.output.join(estimates_file(label));
    if !path.exists() {
        return Ok(None);
    }
    let (_, estimates) = io::read_tensor(&path)?;
    if estimates.len() != records.len() {
        return Err(Error::dims(
            "estimate count",
            records.len(),
            estimates.len(),
        ));
    }
    let mut csv = String::from("sample_id,mse,psnr_db,accurate,approximate\n");
    let mut mses = Vec::with_capacity(records.len());
    for (rec, est) in records.iter().zip(&estimates) {
        let m = mse(est, &rec.data)?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.sample_id,
            fmt_f64(m),
            fmt_f64(psnr(m)),
            m < cfg.thresholds.accurate,
            m < cfg.thresholds.approximate
        ));
        mses.push(m);
    }
    io::write_file(&cfg.output.join(format!("metrics_{label}.csv")), csv)?;
    summarize(&mses, cfg.thresholds).map(Some)
}

/// Scores every available estimate set and writes per-sample metrics CSVs
/// plus one summary JSON.
pub fn run_evaluate(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let records = load_training_set(cfg)?;
    let mut modes = BTreeMap::new();
    let mut lines = Vec::new();
    for mode in RecoveryMode::ALL {
        if let Some(s) = evaluate_set(cfg, mode.as_str(), &records)? {
            modes.insert(mode.as_str().to_string(), s);
        }
    }
    if let Some(control) = load_control_set(cfg)? {
        if let Some(s) = evaluate_set(cfg, CONTROL_LABEL, &control)? {
            modes.insert(CONTROL_LABEL.to_string(), s);
        }
    }
    if modes.is_empty() {
        return Err(Error::Config(
            "no estimates found; run recover first".into(),
        ));
    }
    for (label, s) in &modes {
        lines.push(format!(
            "evaluate {label}: accurate {}/{}, approximate {}/{}, avg psnr {:.2} dB",
            s.n_accurate, s.n, s.n_approximate, s.n, s.avg_psnr_db
        ));
    }
    write_json(
        &cfg.output.join(SUMMARY_FILE),
        &SummaryFile {
            n: records.len(),
            thresholds: cfg.thresholds,
            modes,
        },
    )?;
    Ok(lines.join("\n"))
}

/// Checks whether the trained model is a certified proximity operator and
/// writes the report.
pub fn run_proxcheck(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let model = io::load_model(&cfg.model_file())?;
    let training = load_training_set(cfg)
        .map(|r| vectors(&r))
        .unwrap_or_default();
    let extra: Vec<Vector> = training
        .into_iter()
        .filter(|v| v.len() == model.dim())
        .collect();
    let probes = default_probe_points(
        model.dim(),
        cfg.probes,
        derive_seed(cfg.seed, STREAM_PROBES),
        &extra,
    );
    let check = check_model(&model, &probes, cfg.prox_tol)?;
    let mut text = check.to_json()?;
    text.push('\n');
    io::write_file(&cfg.output.join(PROXCHECK_FILE), text)?;
    Ok(match &check {
        crate::proxcheck::ModelCheck::Report(r) => format!("proxcheck:\n{}", r.summary()),
        crate::proxcheck::ModelCheck::OutOfScope { model } => {
            format!("proxcheck: {model} is not a tied two-layer autoencoder; out of scope")
        }
    })
}

/// All stages in order.
pub fn run_e2e(cfg: &ExperimentConfig) -> Result<String> {
    let stages: [fn(&ExperimentConfig) -> Result<String>; 5] = [
        run_train,
        run_degrade,
        run_recover,
        run_evaluate,
        run_proxcheck,
    ];
    let mut out = Vec::new();
    for stage in stages {
        out.push(stage(cfg)?);
    }
    Ok(out.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_overrides_defaults() {
        let cfg = ExperimentConfig::parse(
            "# comment\nseed = 7\ntrain.lr=1e-2  # inline\nrecover.gamma = 0.1\nrecover.modes = unknown-h,baseline\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.learning_rate, 1e-2);
        assert_eq!(cfg.gamma, Some(0.1));
        assert_eq!(
            cfg.modes,
            vec![RecoveryMode::UnknownH, RecoveryMode::Baseline]
        );
        assert_eq!(cfg.train_config().seed, 7);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::parse("train.learning_rate = 1").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        assert!(ExperimentConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn loss_target_replaces_tail() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("train.loss_target", "1e-7").unwrap();
        assert_eq!(cfg.train.loss_checkpoints, vec![1e-4, 1e-6, 1e-7]);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in [
            ("data.control", "synthetic"),
            ("data.control_count", "5"),
            ("model.activation", "prelu:0.2"),
            ("degrade.mask", "stripes:4:0.5"),
            ("train.batch_size", "8"),
            ("data.seed", "9"),
        ] {
            cfg.set(k, v).unwrap();
        }
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn per_sample_degradations_differ_and_repeat() {
        let cfg = ExperimentConfig::default();
        let a = cfg.degradation_for(0).unwrap();
        assert_eq!(a, cfg.degradation_for(0).unwrap());
        assert_ne!(a.mask, cfg.degradation_for(1).unwrap().mask);
    }

    #[test]
    fn invalid_configs_fail_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("eval.accurate", "1e-3").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.set("model.depth", "3").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn psnr_inf_serializes_as_string() {
        let rec = RecoveryRecord {
            sample_id: "a".into(),
            converged: true,
            outer_iters: 1,
            final_mse: 0.0,
            final_psnr: f64::INFINITY,
            mask_hamming_error: Some(0),
        };
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"final_psnr\":\"inf\""));
    }
}
