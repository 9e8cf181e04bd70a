//! The optimization loop: model families, Adam/SGD steps, per-epoch noise
//! resampling, minibatching, validation-based snapshot selection, and
//! learning-rate sweeps.
//!
//! Everything is deterministic: given a config (seeds included), two runs
//! produce bit-identical histories and parameters.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::basis::{SignalMatrix, TrigBasis};
use crate::data::{
    derive_seed, select_rows, split_indices, NoiseSpec, STREAM_BATCH_ORDER, STREAM_MODEL_INIT,
    STREAM_TRAIN_NOISE, STREAM_VAL_NOISE, STREAM_VAL_SPLIT,
};
use crate::error::{Error, Result};
use crate::eval::mse;
use crate::filters::ppo_forward;
use crate::nn::{dae_loss_and_grad, ppo_loss_and_grad, Activation, GradientSet, Mlp};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// The six learnable model families. The trailing number counts mappings:
/// for mask networks the layers of the network itself, for autoencoders the
/// layers in the encoder (the decoder mirrors them).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ppo1,
    Ppo2,
    Ppo3,
    Dae1,
    Dae2,
    Dae3,
}

/// Hidden widths between the signal dimension `m` and coefficient dimension
/// `d`, placed at the same fractional positions as the reference geometry
/// (4800/2048 with hiddens 3200 and 2432, i.e. 18/43 and 6/43 of the span).
fn hidden_dims(m: usize, d: usize) -> (usize, usize) {
    let span = (m - d) as f64;
    let h1 = d + (span * 18.0 / 43.0).round() as usize;
    let h2 = d + (span * 6.0 / 43.0).round() as usize;
    (h1, h2)
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ppo1 => "ppo1",
            ModelKind::Ppo2 => "ppo2",
            ModelKind::Ppo3 => "ppo3",
            ModelKind::Dae1 => "dae1",
            ModelKind::Dae2 => "dae2",
            ModelKind::Dae3 => "dae3",
        }
    }

    pub fn from_name(name: &str) -> Option<ModelKind> {
        match name {
            "ppo1" => Some(ModelKind::Ppo1),
            "ppo2" => Some(ModelKind::Ppo2),
            "ppo3" => Some(ModelKind::Ppo3),
            "dae1" => Some(ModelKind::Dae1),
            "dae2" => Some(ModelKind::Dae2),
            "dae3" => Some(ModelKind::Dae3),
            _ => None,
        }
    }

    pub fn is_mask_model(self) -> bool {
        matches!(self, ModelKind::Ppo1 | ModelKind::Ppo2 | ModelKind::Ppo3)
    }

    /// Full layer dimension plan for a basis with `m` samples and `d`
    /// coefficients.
    pub fn layer_dims(self, m: usize, d: usize) -> Vec<usize> {
        let (h1, h2) = hidden_dims(m, d);
        match self {
            ModelKind::Ppo1 => vec![m, d],
            ModelKind::Ppo2 => vec![m, h2, d],
            ModelKind::Ppo3 => vec![m, h1, h2, d],
            ModelKind::Dae1 => vec![m, d, m],
            ModelKind::Dae2 => vec![m, h2, d, h2, m],
            ModelKind::Dae3 => vec![m, h1, h2, d, h2, h1, m],
        }
    }

    /// ReLU hidden layers; sigmoid head for mask models, affine head for
    /// autoencoders so negative outputs stay reachable.
    pub fn activations(self, m: usize, d: usize) -> Vec<Activation> {
        let layers = self.layer_dims(m, d).len() - 1;
        let mut acts = vec![Activation::Relu; layers];
        *acts.last_mut().expect("at least one layer") = if self.is_mask_model() {
            Activation::Sigmoid
        } else {
            Activation::Affine
        };
        acts
    }
}

/// Gradient update rule. Adam is the default; plain SGD stays available as a
/// config switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

pub(crate) fn default_epochs() -> usize {
    2000
}
pub(crate) fn default_batch_size() -> usize {
    256
}
pub(crate) fn default_learning_rates() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5]
}
pub(crate) fn default_l2() -> f64 {
    1e-5
}
pub(crate) fn default_validation_fraction() -> f64 {
    0.2
}

/// Everything one training run needs besides the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub noise: NoiseSpec,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(model: ModelKind, noise: NoiseSpec) -> TrainConfig {
        TrainConfig {
            model,
            noise,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rates: default_learning_rates(),
            l2: default_l2(),
            validation_fraction: default_validation_fraction(),
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.learning_rates.is_empty() {
            return Err(Error::InvalidArgument("no learning rates to try".into()));
        }
        if let Some(&bad) = self.learning_rates.iter().find(|&&lr| !(lr > 0.0) || !lr.is_finite())
        {
            return Err(Error::InvalidArgument(format!("bad learning rate {bad}")));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::InvalidArgument(format!("bad l2 penalty {}", self.l2)));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch record of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_mse: Vec<f64>,
    /// Wall-clock seconds per epoch. Diagnostic only; deliberately left out
    /// of every serialized artifact so outputs stay bit-reproducible.
    pub epoch_seconds: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.val_mse.len()
    }

    pub fn best_val_mse(&self) -> f64 {
        self.val_mse[self.best_epoch]
    }

    /// Plain-text log: `epoch,train_loss,val_mse` rows at full precision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,val_mse\n");
        for (epoch, (loss, val)) in self.train_loss.iter().zip(&self.val_mse).enumerate() {
            writeln!(out, "{epoch},{loss:.16e},{val:.16e}").expect("string writes cannot fail");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// First/second gradient moments for every parameter, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
    steps: u32,
}

impl AdamState {
    pub fn new(mlp: &Mlp) -> AdamState {
        AdamState {
            m_weights: mlp.weights().iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_weights: mlp.weights().iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_biases: mlp.biases().iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_biases: mlp.biases().iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            steps: 0,
        }
    }
}

fn check_grad_shapes(mlp: &Mlp, grads: &GradientSet) -> Result<()> {
    let weights_match = mlp.weights().len() == grads.weights.len()
        && mlp
            .weights()
            .iter()
            .zip(&grads.weights)
            .all(|(w, g)| w.dim() == g.dim())
        && mlp
            .biases()
            .iter()
            .zip(&grads.biases)
            .all(|(b, g)| b.dim() == g.dim());
    if !weights_match {
        return Err(Error::dims("optimizer step", "gradients shaped like the model", "mismatch"));
    }
    Ok(())
}

/// One Adam update with bias correction.
pub fn adam_step(mlp: &mut Mlp, grads: &GradientSet, state: &mut AdamState, lr: f64) -> Result<()> {
    check_grad_shapes(mlp, grads)?;
    if state.m_weights.len() != grads.weights.len()
        || state
            .m_weights
            .iter()
            .zip(&grads.weights)
            .any(|(m, g)| m.dim() != g.dim())
    {
        return Err(Error::dims("adam_step", "state shaped like the model", "mismatch"));
    }
    state.steps += 1;
    let correction1 = 1.0 - ADAM_BETA1.powi(state.steps as i32);
    let correction2 = 1.0 - ADAM_BETA2.powi(state.steps as i32);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    };
    for i in 0..grads.weights.len() {
        for ((p, &g), (m, v)) in mlp.weights_mut()[i]
            .iter_mut()
            .zip(grads.weights[i].iter())
            .zip(state.m_weights[i].iter_mut().zip(state.v_weights[i].iter_mut()))
        {
            update(p, g, m, v);
        }
        for ((p, &g), (m, v)) in mlp.biases_mut()[i]
            .iter_mut()
            .zip(grads.biases[i].iter())
            .zip(state.m_biases[i].iter_mut().zip(state.v_biases[i].iter_mut()))
        {
            update(p, g, m, v);
        }
    }
    Ok(())
}

/// Plain gradient descent: `p -= lr * g`.
pub fn sgd_step(mlp: &mut Mlp, grads: &GradientSet, lr: f64) -> Result<()> {
    check_grad_shapes(mlp, grads)?;
    for i in 0..grads.weights.len() {
        for (p, &g) in mlp.weights_mut()[i].iter_mut().zip(grads.weights[i].iter()) {
            *p -= lr * g;
        }
        for (p, &g) in mlp.biases_mut()[i].iter_mut().zip(grads.biases[i].iter()) {
            *p -= lr * g;
        }
    }
    Ok(())
}

/// Denoised output of a trained model on (scaled) noisy input: the masked
/// synthesis pipeline for mask models, the network output for autoencoders.
pub fn model_output(
    kind: ModelKind,
    model: &Mlp,
    basis: &TrigBasis,
    noisy: &SignalMatrix,
) -> Result<SignalMatrix> {
    if kind.is_mask_model() {
        Ok(ppo_forward(basis, model, noisy)?.0)
    } else {
        let cache = model.forward(noisy.array())?;
        SignalMatrix::new(cache.output().clone())
    }
}

fn as_divergence(lr: f64, epoch: usize, err: Error) -> Error {
    match err {
        Error::NonFinite(what) => Error::Diverged { lr, epoch, detail: what.to_string() },
        other => other,
    }
}

/// Trains one model at one learning rate.
///
/// Each epoch regenerates the noisy inputs from the clean data with an
/// epoch-derived seed (so no noisy realization repeats), shuffles and
/// minibatches, optimizes against the clean targets, and measures MSE on a
/// held-out validation slice whose noise comes from a reserved seed stream.
/// The returned model is the snapshot with the lowest validation MSE.
///
/// The basis fixes the coefficient dimension for layer sizing and serves the
/// mask pipeline; autoencoders use it only for sizing. A non-finite loss
/// aborts with [`Error::Diverged`].
pub fn train(
    config: &TrainConfig,
    lr: f64,
    basis: &TrigBasis,
    clean_train: &SignalMatrix,
) -> Result<(Mlp, TrainHistory)> {
    config.validate()?;
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!("bad learning rate {lr}")));
    }
    if clean_train.cols() != basis.samples() {
        return Err(Error::dims("train data width", basis.samples(), clean_train.cols()));
    }
    let m = basis.samples();
    let d = basis.dim();
    let mut model = Mlp::init(
        &config.model.layer_dims(m, d),
        &config.model.activations(m, d),
        derive_seed(config.seed, STREAM_MODEL_INIT, 0),
    )?;
    let (fit_idx, val_idx) = split_indices(
        clean_train.rows(),
        config.validation_fraction,
        derive_seed(config.seed, STREAM_VAL_SPLIT, 0),
    )?;
    let clean_fit = select_rows(clean_train, &fit_idx);
    let clean_val = select_rows(clean_train, &val_idx);

    let mut adam = AdamState::new(&model);
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        val_mse: Vec::with_capacity(config.epochs),
        epoch_seconds: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(usize, f64, Mlp)> = None;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let noisy_fit = config.noise.realize(
            &clean_fit,
            Some(basis),
            derive_seed(config.noise.seed, STREAM_TRAIN_NOISE, epoch as u64),
        )?;
        let mut order: Vec<usize> = (0..clean_fit.rows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            STREAM_BATCH_ORDER,
            epoch as u64,
        )));

        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let noisy_b = select_rows(&noisy_fit, batch);
            let clean_b = select_rows(&clean_fit, batch);
            let step = if config.model.is_mask_model() {
                ppo_loss_and_grad(&model, basis, &noisy_b, &clean_b, config.l2)
            } else {
                dae_loss_and_grad(&model, &noisy_b, &clean_b, config.l2)
            };
            let (loss, grads) = step.map_err(|e| as_divergence(lr, epoch, e))?;
            match config.optimizer {
                OptimizerKind::Adam => adam_step(&mut model, &grads, &mut adam, lr)?,
                OptimizerKind::Sgd => sgd_step(&mut model, &grads, lr)?,
            }
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / clean_fit.rows() as f64;

        let noisy_val = config.noise.realize(
            &clean_val,
            Some(basis),
            derive_seed(config.noise.seed, STREAM_VAL_NOISE, epoch as u64),
        )?;
        let denoised = model_output(config.model, &model, basis, &noisy_val)
            .map_err(|e| as_divergence(lr, epoch, e))?;
        let val = mse(&denoised, &clean_val)?;

        history.train_loss.push(train_loss);
        history.val_mse.push(val);
        history.epoch_seconds.push(started.elapsed().as_secs_f64());
        if best.as_ref().map_or(true, |(_, best_val, _)| val < *best_val) {
            best = Some((epoch, val, model.clone()));
        }
    }

    let (best_epoch, _, best_model) = best.expect("epochs >= 1 always records a snapshot");
    history.best_epoch = best_epoch;
    Ok((best_model, history))
}

/// What happened to one learning rate in a sweep.
#[derive(Debug, Clone)]
pub enum RateOutcome {
    Completed(TrainHistory),
    Diverged { epoch: usize, detail: String },
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub lr: f64,
    pub outcome: RateOutcome,
}

impl SweepRun {
    /// One stable text line for sweep logs.
    pub fn summary(&self) -> String {
        match &self.outcome {
            RateOutcome::Completed(history) => format!(
                "lr {:e}: best val MSE {:.16e} at epoch {}",
                self.lr,
                history.best_val_mse(),
                history.best_epoch
            ),
            RateOutcome::Diverged { epoch, detail } => {
                format!("lr {:e}: diverged at epoch {epoch} ({detail})", self.lr)
            }
        }
    }
}

/// Trains the configured model at every learning rate and keeps the one with
/// the lowest validation MSE. Divergent rates are recorded and excluded;
/// evaluation data is never consulted (train only ever sees training rows).
pub fn lr_sweep_select(
    config: &TrainConfig,
    basis: &TrigBasis,
    clean_train: &SignalMatrix,
) -> Result<(f64, Mlp, Vec<SweepRun>)> {
    config.validate()?;
    let mut best: Option<(f64, Mlp, f64)> = None;
    let mut runs = Vec::with_capacity(config.learning_rates.len());
    for &lr in &config.learning_rates {
        match train(config, lr, basis, clean_train) {
            Ok((model, history)) => {
                let val = history.best_val_mse();
                if best.as_ref().map_or(true, |(_, _, best_val)| val < *best_val) {
                    best = Some((lr, model, val));
                }
                runs.push(SweepRun { lr, outcome: RateOutcome::Completed(history) });
            }
            Err(Error::Diverged { epoch, detail, .. }) => {
                runs.push(SweepRun { lr, outcome: RateOutcome::Diverged { epoch, detail } });
            }
            Err(other) => return Err(other),
        }
    }
    match best {
        Some((lr, model, _)) => Ok((lr, model, runs)),
        None => Err(Error::AllRatesDiverged),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_trig_basis;
    use crate::data::{synth_bandlimited_dataset, NoiseKind};

    fn tiny_setup() -> (TrigBasis, SignalMatrix) {
        let basis = build_trig_basis(32, 6).unwrap();
        let active: Vec<usize> = (0..basis.dim()).collect();
        let (clean, _) =
            synth_bandlimited_dataset(&basis, 40, &active, (-1.0, 1.0), 31).unwrap();
        (basis, clean)
    }

    fn quick_config(model: ModelKind) -> TrainConfig {
        let mut config = TrainConfig::new(model, NoiseSpec::clean(5));
        config.epochs = 8;
        config.batch_size = 8;
        config.learning_rates = vec![1e-2];
        config.l2 = 0.0;
        config.seed = 17;
        config
    }

    #[test]
    fn layer_plans_match_the_reference_geometry() {
        assert_eq!(ModelKind::Ppo3.layer_dims(4800, 2048), vec![4800, 3200, 2432, 2048]);
        assert_eq!(ModelKind::Ppo2.layer_dims(4800, 2048), vec![4800, 2432, 2048]);
        assert_eq!(ModelKind::Ppo1.layer_dims(4800, 2048), vec![4800, 2048]);
        assert_eq!(ModelKind::Dae1.layer_dims(4800, 2048), vec![4800, 2048, 4800]);
        assert_eq!(
            ModelKind::Dae3.layer_dims(4800, 2048),
            vec![4800, 3200, 2432, 2048, 2432, 3200, 4800]
        );
        // Desk scale: hidden widths sit at the same fractions of the span.
        assert_eq!(ModelKind::Ppo3.layer_dims(256, 64), vec![256, 144, 91, 64]);
        assert_eq!(ModelKind::Dae2.layer_dims(256, 64), vec![256, 91, 64, 91, 256]);
    }

    #[test]
    fn activation_plans_pick_the_right_heads() {
        let acts = ModelKind::Ppo3.activations(256, 64);
        assert_eq!(acts, vec![Activation::Relu, Activation::Relu, Activation::Sigmoid]);
        let acts = ModelKind::Dae2.activations(256, 64);
        assert_eq!(
            acts,
            vec![Activation::Relu, Activation::Relu, Activation::Relu, Activation::Affine]
        );
        assert_eq!(ModelKind::Dae1.activations(256, 64), vec![
            Activation::Relu,
            Activation::Affine
        ]);
    }

    #[test]
    fn model_names_round_trip() {
        for kind in [
            ModelKind::Ppo1,
            ModelKind::Ppo2,
            ModelKind::Ppo3,
            ModelKind::Dae1,
            ModelKind::Dae2,
            ModelKind::Dae3,
        ] {
            assert_eq!(ModelKind::from_name(kind.name()), Some(kind));
        }
        assert_eq!(ModelKind::from_name("ppo4"), None);
    }

    #[test]
    fn adam_with_zero_gradient_changes_nothing() {
        let mut mlp = Mlp::init(&[3, 4, 2], &[Activation::Relu, Activation::Affine], 1).unwrap();
        let reference = mlp.clone();
        let grads = GradientSet::zeros_like(&mlp);
        let mut state = AdamState::new(&mlp);
        for _ in 0..5 {
            adam_step(&mut mlp, &grads, &mut state, 1e-2).unwrap();
        }
        assert_eq!(mlp, reference);
    }

    #[test]
    fn adam_constant_gradient_steps_at_the_learning_rate() {
        // With a constant gradient g the bias-corrected moment ratio is
        // g/|g|, so every step moves each parameter by exactly lr (up to
        // epsilon).
        let mut mlp = Mlp::init(&[2, 2], &[Activation::Affine], 2).unwrap();
        let mut grads = GradientSet::zeros_like(&mlp);
        grads.weights[0].fill(3.0);
        grads.biases[0].fill(-0.5);
        let mut state = AdamState::new(&mlp);
        let lr = 1e-3;
        for _ in 0..5 {
            let before = mlp.clone();
            adam_step(&mut mlp, &grads, &mut state, lr).unwrap();
            for (b, a) in before.weights()[0].iter().zip(mlp.weights()[0].iter()) {
                assert!(((b - a) - lr).abs() < 1e-6 * lr, "weight step {}", b - a);
            }
            for (b, a) in before.biases()[0].iter().zip(mlp.biases()[0].iter()) {
                assert!(((b - a) + lr).abs() < 1e-6 * lr, "bias step {}", b - a);
            }
        }
    }

    #[test]
    fn optimizer_steps_are_deterministic() {
        let make = || {
            let mut mlp =
                Mlp::init(&[4, 3], &[Activation::Affine], 3).unwrap();
            let mut grads = GradientSet::zeros_like(&mlp);
            grads.weights[0].fill(0.7);
            grads.biases[0].fill(-0.2);
            let mut state = AdamState::new(&mlp);
            for _ in 0..10 {
                adam_step(&mut mlp, &grads, &mut state, 1e-2).unwrap();
            }
            mlp
        };
        let a = make();
        let b = make();
        for (wa, wb) in a.weights().iter().zip(b.weights()) {
            for (x, y) in wa.iter().zip(wb.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn sgd_step_is_exact() {
        let mut mlp = Mlp::init(&[2, 1], &[Activation::Affine], 4).unwrap();
        let before = mlp.clone();
        let mut grads = GradientSet::zeros_like(&mlp);
        grads.weights[0].fill(2.0);
        grads.biases[0].fill(-1.0);
        sgd_step(&mut mlp, &grads, 0.25).unwrap();
        for (b, a) in before.weights()[0].iter().zip(mlp.weights()[0].iter()) {
            assert_eq!(a, &(b - 0.5));
        }
        assert_eq!(mlp.biases()[0][0], before.biases()[0][0] + 0.25);
    }

    #[test]
    fn optimizer_rejects_mismatched_shapes() {
        let mut mlp = Mlp::init(&[4, 3], &[Activation::Affine], 5).unwrap();
        let other = Mlp::init(&[5, 3], &[Activation::Affine], 5).unwrap();
        let grads = GradientSet::zeros_like(&other);
        let mut state = AdamState::new(&mlp);
        assert!(adam_step(&mut mlp, &grads, &mut state, 1e-2).is_err());
        assert!(sgd_step(&mut mlp, &grads, 1e-2).is_err());
    }

    #[test]
    fn training_fits_clean_band_limited_data() {
        let (basis, clean) = tiny_setup();
        let mut config = quick_config(ModelKind::Ppo1);
        config.epochs = 200;
        config.learning_rates = vec![2e-2];
        let (model, history) = train(&config, 2e-2, &basis, &clean).unwrap();

        // Against a predict-zero baseline the trained model must be far
        // better than 1% — on clean data the mask only has to open up.
        let (fit_idx, val_idx) =
            split_indices(40, 0.2, derive_seed(config.seed, STREAM_VAL_SPLIT, 0)).unwrap();
        assert_eq!(fit_idx.len() + val_idx.len(), 40);
        let clean_val = select_rows(&clean, &val_idx);
        let zero = SignalMatrix::zeros(clean_val.rows(), clean_val.cols());
        let baseline = mse(&zero, &clean_val).unwrap();
        let denoised = model_output(config.model, &model, &basis, &clean_val).unwrap();
        let final_mse = mse(&denoised, &clean_val).unwrap();
        assert!(
            final_mse < 0.01 * baseline,
            "final {final_mse:e} vs baseline {baseline:e}"
        );
        assert!(history.train_loss[0] > *history.train_loss.last().unwrap());
        assert_eq!(history.epochs_run(), 200);
    }

    #[test]
    fn single_epoch_history_is_well_formed() {
        let (basis, clean) = tiny_setup();
        let mut config = quick_config(ModelKind::Dae1);
        config.epochs = 1;
        let (_, history) = train(&config, 1e-3, &basis, &clean).unwrap();
        assert_eq!(history.train_loss.len(), 1);
        assert_eq!(history.val_mse.len(), 1);
        assert_eq!(history.epoch_seconds.len(), 1);
        assert_eq!(history.best_epoch, 0);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let (basis, clean) = tiny_setup();
        let config = quick_config(ModelKind::Ppo1);
        let (model_a, history_a) = train(&config, 1e-2, &basis, &clean).unwrap();
        let (model_b, history_b) = train(&config, 1e-2, &basis, &clean).unwrap();
        assert_eq!(model_a, model_b);
        for (a, b) in history_a.train_loss.iter().zip(&history_b.train_loss) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in history_a.val_mse.iter().zip(&history_b.val_mse) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(history_a.best_epoch, history_b.best_epoch);
    }

    #[test]
    fn epoch_noise_streams_never_repeat_for_noisy_kinds() {
        let (_, clean) = tiny_setup();
        let spec = NoiseSpec { kind: NoiseKind::Outliers, seed: 3 };
        let epoch0 = spec
            .realize(&clean, None, derive_seed(spec.seed, STREAM_TRAIN_NOISE, 0))
            .unwrap();
        let epoch1 = spec
            .realize(&clean, None, derive_seed(spec.seed, STREAM_TRAIN_NOISE, 1))
            .unwrap();
        let val0 = spec
            .realize(&clean, None, derive_seed(spec.seed, STREAM_VAL_NOISE, 0))
            .unwrap();
        assert_ne!(epoch0, epoch1);
        assert_ne!(epoch0, val0);
    }

    #[test]
    fn sweep_with_single_rate_matches_train() {
        let (basis, clean) = tiny_setup();
        let config = quick_config(ModelKind::Ppo1);
        let (model, history) = train(&config, 1e-2, &basis, &clean).unwrap();
        let (lr, sweep_model, runs) = lr_sweep_select(&config, &basis, &clean).unwrap();
        assert_eq!(lr, 1e-2);
        assert_eq!(model, sweep_model);
        assert_eq!(runs.len(), 1);
        match &runs[0].outcome {
            // Wall-clock timings differ between runs; every number that the
            // seeds determine must match exactly.
            RateOutcome::Completed(h) => {
                assert_eq!(h.train_loss, history.train_loss);
                assert_eq!(h.val_mse, history.val_mse);
                assert_eq!(h.best_epoch, history.best_epoch);
            }
            RateOutcome::Diverged { .. } => panic!("unexpected divergence"),
        }
    }

    #[test]
    fn sweep_excludes_divergent_rates() {
        let (basis, clean) = tiny_setup();
        let mut config = quick_config(ModelKind::Dae1);
        config.optimizer = OptimizerKind::Sgd;
        config.epochs = 5;
        config.learning_rates = vec![1e6, 1e-3];
        let (lr, _, runs) = lr_sweep_select(&config, &basis, &clean).unwrap();
        assert_eq!(lr, 1e-3);
        assert!(matches!(runs[0].outcome, RateOutcome::Diverged { .. }), "{}", runs[0].summary());
        assert!(matches!(runs[1].outcome, RateOutcome::Completed(_)));
    }

    #[test]
    fn all_divergent_rates_is_an_explicit_error() {
        let (basis, clean) = tiny_setup();
        let mut config = quick_config(ModelKind::Dae1);
        config.optimizer = OptimizerKind::Sgd;
        config.epochs = 5;
        config.learning_rates = vec![1e6, 1e7];
        match lr_sweep_select(&config, &basis, &clean) {
            Err(Error::AllRatesDiverged) => {}
            other => panic!("expected AllRatesDiverged, got {other:?}"),
        }
    }

    #[test]
    fn history_csv_omits_wall_clock() {
        let dir = tempfile::tempdir().unwrap();
        let history = TrainHistory {
            train_loss: vec![0.5, 0.25],
            val_mse: vec![0.4, 0.3],
            epoch_seconds: vec![0.01, 0.011],
            best_epoch: 1,
        };
        let path = dir.path().join("history.csv");
        history.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "epoch,train_loss,val_mse");
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains("0.011"));
    }

    #[test]
    fn config_validation_and_toml_defaults() {
        let config: TrainConfig =
            toml::from_str("model = \"ppo2\"\n\n[noise]\nkind = \"shuffle\"\nseed = 4").unwrap();
        assert_eq!(config.model, ModelKind::Ppo2);
        assert_eq!(config.epochs, 2000);
        assert_eq!(config.batch_size, 256);
        assert_eq!(config.optimizer, OptimizerKind::Adam);
        assert!(config.validate().is_ok());

        assert!(toml::from_str::<TrainConfig>("model = \"ppo9\"\n[noise]\nkind = \"clean\"\nseed = 0").is_err());
        assert!(toml::from_str::<TrainConfig>("model = \"ppo1\"\nbogus = 1\n[noise]\nkind = \"clean\"\nseed = 0").is_err());

        let mut bad = quick_config(ModelKind::Ppo1);
        bad.epochs = 0;
        assert!(bad.validate().is_err());
        let mut bad = quick_config(ModelKind::Ppo1);
        bad.learning_rates = vec![-1.0];
        assert!(bad.validate().is_err());
        let mut bad = quick_config(ModelKind::Ppo1);
        bad.validation_fraction = 1.0;
        assert!(bad.validate().is_err());
    }
}
