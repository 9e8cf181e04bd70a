//! End-to-end experiment orchestration: build or load a dataset, split it,
//! fit the scaler on training rows, freeze a hashed evaluation pair on disk,
//! train every learnable model through a learning-rate sweep, evaluate all
//! models on the identical frozen pair, and emit raw plus normalized tables.
//!
//! Configs are plain TOML mirroring [`ExperimentConfig`] field for field;
//! unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::basis::{build_trig_basis, SignalMatrix, TrigBasis};
use crate::data::{
    apply_scaler, derive_seed, fit_scaler, segment_whole_track, shuffle_split,
    synth_bandlimited_dataset, NoiseSpec, ScalerKind, ScalerParams, SAMPLES_PER_SECOND,
    STREAM_EVAL_NOISE,
};
use crate::error::{at_stage, Error, Result};
use crate::eval::{emit_report, mse, normalize_groups, RawResult, ResultTable};
use crate::filters::{po_filter, PoThreshold};
use crate::io::{read_signal_matrix, read_signal_matrix_verified, read_wav_mono_48k, sha256_hex, write_signal_matrix};
use crate::nn::save_checkpoint;
use crate::training::{
    lr_sweep_select, model_output, ModelKind, OptimizerKind, RateOutcome, TrainConfig,
};

/// Held-out fraction of the outer train/evaluation split.
const EVAL_FRACTION: f64 = 0.2;

// Experiment-level seed streams; disjoint from the data-module streams.
const STREAM_EXP_SPLIT: u64 = 20;
const STREAM_EXP_DATA: u64 = 21;
const STREAM_EXP_MODEL: u64 = 22;

/// Basis geometry for the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub samples: usize,
    pub max_index: usize,
}

/// Where the clean dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Every `.wav` in the directory (sorted by name), segmented into
    /// one-second rows.
    WavDir { path: PathBuf },
    /// Band-limited rows drawn from the experiment seed.
    Synthetic {
        rows: usize,
        active_indices: Vec<usize>,
        amplitude: (f64, f64),
    },
    /// A previously written dataset file.
    File { path: PathBuf },
}

/// Which scaler to fit on the training split. `None` is the identity, for
/// synthetic experiments that must keep signals exactly band-limited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerChoice {
    MinMax,
    Standard,
    None,
}

impl ScalerChoice {
    pub fn name(self) -> &'static str {
        match self {
            ScalerChoice::MinMax => "minmax",
            ScalerChoice::Standard => "standard",
            ScalerChoice::None => "none",
        }
    }

    pub fn fit(self, train: &SignalMatrix) -> Result<ScalerParams> {
        match self {
            ScalerChoice::MinMax => fit_scaler(train, ScalerKind::MinMax),
            ScalerChoice::Standard => fit_scaler(train, ScalerKind::Standard),
            ScalerChoice::None => Ok(ScalerParams::None),
        }
    }
}

/// One entry of the model list: a learnable family or a rule-based filter.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Learned(ModelKind),
    Po(PoThreshold),
}

impl ModelChoice {
    /// Name used in result tables and artifact file names.
    pub fn display_name(&self) -> String {
        match self {
            ModelChoice::Learned(kind) => kind.name().to_string(),
            ModelChoice::Po(threshold) => threshold.name(),
        }
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelChoice> {
        if let Some(kind) = ModelKind::from_name(s) {
            return Ok(ModelChoice::Learned(kind));
        }
        if s == "po" {
            return Ok(ModelChoice::Po(PoThreshold::AllPass));
        }
        if let Some(rest) = s.strip_prefix("po:") {
            let tau: f64 = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad cutoff in model token {s:?}")))?;
            if !(tau >= 0.0) || !tau.is_finite() {
                return Err(Error::Config(format!("cutoff must be finite and >= 0 in {s:?}")));
            }
            return Ok(ModelChoice::Po(PoThreshold::Cutoff(tau)));
        }
        Err(Error::Config(format!(
            "unknown model {s:?} (expected ppo1..ppo3, dae1..dae3, po, or po:<cutoff>)"
        )))
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelChoice::Learned(kind) => f.write_str(kind.name()),
            ModelChoice::Po(PoThreshold::AllPass) => f.write_str("po"),
            ModelChoice::Po(PoThreshold::Cutoff(tau)) => write!(f, "po:{tau}"),
        }
    }
}

impl Serialize for ModelChoice {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModelChoice {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let token = String::deserialize(deserializer)?;
        token.parse().map_err(serde::de::Error::custom)
    }
}

/// Training hyperparameters shared by every learnable model in the
/// experiment (model kind, noise, and seeds are filled in per model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "crate::training::default_epochs")]
    pub epochs: usize,
    #[serde(default = "crate::training::default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "crate::training::default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "crate::training::default_l2")]
    pub l2: f64,
    #[serde(default = "crate::training::default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: crate::training::default_epochs(),
            batch_size: crate::training::default_batch_size(),
            learning_rates: crate::training::default_learning_rates(),
            l2: crate::training::default_l2(),
            validation_fraction: crate::training::default_validation_fraction(),
            optimizer: OptimizerKind::default(),
        }
    }
}

/// Full description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub basis: BasisSection,
    pub data: DataSource,
    pub scaler: ScalerChoice,
    pub noise: NoiseSpec,
    pub models: Vec<ModelChoice>,
    #[serde(default)]
    pub train: TrainSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("model list is empty".into()));
        }
        for (i, a) in self.models.iter().enumerate() {
            for b in &self.models[i + 1..] {
                if a.display_name() == b.display_name() {
                    return Err(Error::Config(format!(
                        "duplicate model {} in the model list",
                        a.display_name()
                    )));
                }
            }
        }
        match &self.data {
            DataSource::WavDir { path } | DataSource::File { path } => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "data source {} does not exist",
                        path.display()
                    )));
                }
            }
            DataSource::Synthetic { rows, .. } => {
                if *rows < 5 {
                    return Err(Error::Config(format!(
                        "synthetic dataset needs at least 5 rows for the split, got {rows}"
                    )));
                }
            }
        }
        // Borrow the training validator by building a representative config.
        self.train_config(ModelKind::Ppo1, 0).validate()
    }

    /// Concrete per-model training config: shared hyperparameters plus a
    /// model-indexed seed so families initialize independently.
    fn train_config(&self, kind: ModelKind, model_index: u64) -> TrainConfig {
        let mut tc = TrainConfig::new(kind, self.noise.clone());
        tc.epochs = self.train.epochs;
        tc.batch_size = self.train.batch_size;
        tc.learning_rates = self.train.learning_rates.clone();
        tc.l2 = self.train.l2;
        tc.validation_fraction = self.train.validation_fraction;
        tc.optimizer = self.train.optimizer;
        tc.seed = derive_seed(self.seed, STREAM_EXP_MODEL, model_index);
        tc
    }
}

/// Reads every `.wav` in the directory (sorted by name) and stacks their
/// one-second segments into a single dataset.
pub fn load_wav_dir(dir: &Path) -> Result<SignalMatrix> {
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "wav"))
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        return Err(Error::Config(format!("no .wav files in {}", dir.display())));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for wav in &wavs {
        let track = read_wav_mono_48k(wav)?;
        let segment = segment_whole_track(&track)?;
        rows += segment.rows();
        values.extend(segment.array().iter().copied());
    }
    let array = ndarray::Array2::from_shape_vec((rows, SAMPLES_PER_SECOND), values)
        .expect("every segment has the same width");
    SignalMatrix::new(array)
}

fn load_dataset(config: &ExperimentConfig, basis: &TrigBasis) -> Result<SignalMatrix> {
    match &config.data {
        DataSource::Synthetic { rows, active_indices, amplitude } => {
            let (signal, _) = synth_bandlimited_dataset(
                basis,
                *rows,
                active_indices,
                *amplitude,
                derive_seed(config.seed, STREAM_EXP_DATA, 0),
            )?;
            Ok(signal)
        }
        DataSource::File { path } => read_signal_matrix(path),
        DataSource::WavDir { path } => load_wav_dir(path),
    }
}

struct FrozenEval {
    clean_path: PathBuf,
    noisy_path: PathBuf,
    clean_hash: String,
    noisy_hash: String,
}

impl FrozenEval {
    /// Re-verifies both hashes and reloads the pair. Called before every
    /// model evaluation so all models provably score against identical bytes.
    fn load(&self) -> Result<(SignalMatrix, SignalMatrix)> {
        let noisy = read_signal_matrix_verified(&self.noisy_path, &self.noisy_hash)?;
        let clean = read_signal_matrix_verified(&self.clean_path, &self.clean_hash)?;
        Ok((noisy, clean))
    }
}

/// Runs the whole experiment and returns the normalized result table.
/// Artifacts land in `config.out_dir`: the frozen evaluation pair and its
/// hashes, per-model checkpoints/history/sweep logs, `results.csv`, and one
/// bar chart per group. A `stale.marker` file exists while the run is in
/// flight (and after a failed run) to flag partial artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    at_stage("config", config.validate())?;
    let basis = at_stage(
        "basis",
        build_trig_basis(config.basis.samples, config.basis.max_index),
    )?;
    std::fs::create_dir_all(&config.out_dir)?;
    let stale = config.out_dir.join("stale.marker");
    std::fs::write(&stale, "run incomplete; artifacts here may be partial\n")?;

    let clean = at_stage("load-data", load_dataset(config, &basis))?;
    if clean.cols() != basis.samples() {
        return Err(Error::stage(
            "load-data",
            Error::dims("dataset width", basis.samples(), clean.cols()),
        ));
    }
    let (train_clean, eval_clean) = at_stage(
        "split",
        shuffle_split(&clean, EVAL_FRACTION, derive_seed(config.seed, STREAM_EXP_SPLIT, 0)),
    )?;
    let scaler = at_stage("scale", config.scaler.fit(&train_clean))?;
    let train_scaled = at_stage("scale", apply_scaler(&scaler, &train_clean))?;
    let eval_scaled = at_stage("scale", apply_scaler(&scaler, &eval_clean))?;

    let frozen = at_stage("freeze-eval", freeze_eval_pair(config, &basis, &eval_scaled))?;

    let dataset_label = config.noise.kind.name().to_string();
    let scaler_label = config.scaler.name().to_string();
    let mut raw = Vec::with_capacity(config.models.len());
    for (index, choice) in config.models.iter().enumerate() {
        let name = choice.display_name();
        let denoised = match choice {
            ModelChoice::Po(threshold) => {
                let (noisy, _) = at_stage(format!("evaluate-{name}"), frozen.load())?;
                at_stage(format!("evaluate-{name}"), po_filter(&basis, threshold, &noisy))?
            }
            ModelChoice::Learned(kind) => {
                let tc = config.train_config(*kind, index as u64);
                let (best_lr, model, runs) = at_stage(
                    format!("train-{name}"),
                    lr_sweep_select(&tc, &basis, &train_scaled),
                )?;
                at_stage(
                    format!("train-{name}"),
                    write_model_artifacts(config, &name, &model, &scaler, best_lr, &runs),
                )?;
                let (noisy, _) = at_stage(format!("evaluate-{name}"), frozen.load())?;
                at_stage(
                    format!("evaluate-{name}"),
                    model_output(*kind, &model, &basis, &noisy),
                )?
            }
        };
        let (_, eval_target) = at_stage(format!("evaluate-{name}"), frozen.load())?;
        let score = at_stage(format!("evaluate-{name}"), mse(&denoised, &eval_target))?;
        raw.push(RawResult {
            dataset: dataset_label.clone(),
            scaler: scaler_label.clone(),
            model: name,
            mse: score,
        });
    }

    let table = at_stage("report", normalize_groups(&raw))?;
    at_stage("report", emit_report(&table, &config.out_dir).map(|_| ()))?;
    std::fs::remove_file(&stale)?;
    Ok(table)
}

fn freeze_eval_pair(
    config: &ExperimentConfig,
    basis: &TrigBasis,
    eval_scaled: &SignalMatrix,
) -> Result<FrozenEval> {
    let eval_noisy = config.noise.realize(
        eval_scaled,
        Some(basis),
        derive_seed(config.noise.seed, STREAM_EVAL_NOISE, 0),
    )?;
    let clean_path = config.out_dir.join("eval_clean.sig");
    let noisy_path = config.out_dir.join("eval_noisy.sig");
    write_signal_matrix(&clean_path, eval_scaled)?;
    write_signal_matrix(&noisy_path, &eval_noisy)?;
    let clean_hash = sha256_hex(&clean_path)?;
    let noisy_hash = sha256_hex(&noisy_path)?;
    std::fs::write(
        config.out_dir.join("eval_hashes.txt"),
        format!("eval_clean.sig {clean_hash}\neval_noisy.sig {noisy_hash}\n"),
    )?;
    Ok(FrozenEval { clean_path, noisy_path, clean_hash, noisy_hash })
}

fn write_model_artifacts(
    config: &ExperimentConfig,
    name: &str,
    model: &crate::nn::Mlp,
    scaler: &ScalerParams,
    best_lr: f64,
    runs: &[crate::training::SweepRun],
) -> Result<()> {
    save_checkpoint(&config.out_dir.join(format!("{name}.ckpt")), model, scaler)?;
    let mut log = format!("model: {name}\n");
    for run in runs {
        log.push_str(&run.summary());
        log.push('\n');
    }
    log.push_str(&format!("selected lr: {best_lr:e}\n"));
    std::fs::write(config.out_dir.join(format!("{name}_sweep.txt")), log)?;
    if let Some(history) = runs.iter().find_map(|run| match &run.outcome {
        RateOutcome::Completed(history) if run.lr == best_lr => Some(history),
        _ => None,
    }) {
        history.write_csv(&config.out_dir.join(format!("{name}_history.csv")))?;
    }
    Ok(())
}
