//! Fully connected networks with explicit reverse-mode gradients, the two
//! training losses (coefficient-mask denoising and direct signal
//! reconstruction), and checkpoint serialization.
//!
//! The gradient code is written out by hand so every arithmetic step is
//! inspectable; finite-difference tests pin it down.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::basis::{analyze, SignalMatrix, TrigBasis};
use crate::data::ScalerParams;
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"PPOCKPT1";

/// Elementwise layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Logistic function; used as the final layer wherever outputs must lie
    /// in \[0, 1\].
    Sigmoid,
    /// Identity, i.e. the layer stays affine.
    Affine,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Affine => z,
        }
    }

    /// Derivative at pre-activation `z` whose output was `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Affine => 1.0,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Relu => b'r',
            Activation::Sigmoid => b's',
            Activation::Affine => b'a',
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            b'r' => Some(Activation::Relu),
            b's' => Some(Activation::Sigmoid),
            b'a' => Some(Activation::Affine),
            _ => None,
        }
    }
}

/// Multilayer perceptron. Layer `i` maps `dims[i] -> dims[i+1]` through
/// weight matrix `W_i` of shape `(dims[i+1], dims[i])`, bias `b_i`, and its
/// activation: rows of the input batch are transformed as
/// `a_{i+1} = act(a_i W_i^T + b_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activations: Vec<Activation>,
}

/// Intermediate quantities from a forward pass, kept for backpropagation.
pub struct ForwardCache {
    /// `activations[0]` is the input batch; `activations[i+1]` the output of
    /// layer `i`.
    activations: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache always holds the input")
    }
}

/// Per-layer parameter gradients, shaped exactly like the network.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientSet {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        GradientSet {
            weights: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }
}

impl Mlp {
    /// Initializes weights uniformly on `(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// and biases at zero, deterministically from the seed.
    pub fn init(layer_dims: &[usize], activations: &[Activation], seed: u64) -> Result<Mlp> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a network needs at least input and output dims, got {layer_dims:?}"
            )));
        }
        if activations.len() != layer_dims.len() - 1 {
            return Err(Error::dims(
                "Mlp::init activations",
                layer_dims.len() - 1,
                activations.len(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "zero-width layer in {layer_dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(activations.len());
        let mut biases = Vec::with_capacity(activations.len());
        for i in 0..activations.len() {
            let bound = 1.0 / (layer_dims[i] as f64).sqrt();
            weights.push(Array2::from_shape_fn(
                (layer_dims[i + 1], layer_dims[i]),
                |_| rng.random_range(-bound..bound),
            ));
            biases.push(Array1::zeros(layer_dims[i + 1]));
        }
        Ok(Mlp { weights, biases, activations: activations.to_vec() })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("at least one layer").nrows()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.weights.iter().map(|w| w.nrows()));
        dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Mutable parameter access for optimizers and perturbation tests.
    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    /// Runs the batch through every layer, recording pre-activations and
    /// activations.
    pub fn forward(&self, input: &Array2<f64>) -> Result<ForwardCache> {
        if input.ncols() != self.input_dim() {
            return Err(Error::dims("Mlp::forward", self.input_dim(), input.ncols()));
        }
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        let mut preacts = Vec::with_capacity(self.weights.len());
        activations.push(input.clone());
        for (i, act) in self.activations.iter().enumerate() {
            let z = activations[i].dot(&self.weights[i].t()) + &self.biases[i];
            let a = z.mapv(|v| act.apply(v));
            preacts.push(z);
            activations.push(a);
        }
        Ok(ForwardCache { activations, preacts })
    }

    /// Backpropagates `d(loss)/d(output)` through the cached pass, returning
    /// gradients for every weight and bias.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<GradientSet> {
        let out = cache.output();
        if output_grad.dim() != out.dim() {
            return Err(Error::dims(
                "Mlp::backward",
                format!("{:?}", out.dim()),
                format!("{:?}", output_grad.dim()),
            ));
        }
        let mut grads = GradientSet::zeros_like(self);
        let mut delta = output_grad.clone();
        for i in (0..self.weights.len()).rev() {
            Zip::from(&mut delta)
                .and(&cache.preacts[i])
                .and(&cache.activations[i + 1])
                .for_each(|d, &z, &a| *d *= self.activations[i].derivative(z, a));
            grads.weights[i] = delta.t().dot(&cache.activations[i]);
            grads.biases[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&self.weights[i]);
            }
        }
        Ok(grads)
    }
}

fn check_pair(context: &'static str, noisy: &SignalMatrix, clean: &SignalMatrix) -> Result<()> {
    if noisy.rows() != clean.rows() || noisy.cols() != clean.cols() {
        return Err(Error::dims(
            context,
            format!("{}x{}", noisy.rows(), noisy.cols()),
            format!("{}x{}", clean.rows(), clean.cols()),
        ));
    }
    if noisy.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

fn check_l2(l2: f64) -> Result<()> {
    if !(l2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "l2 penalty must be non-negative, got {l2}"
        )));
    }
    Ok(())
}

/// Data term and mask gradient for the coefficient-mask loss, given the mask
/// the network produced: reconstruct from `mask .* analyze(noisy)`, compare
/// against `clean` in signal space, and push the residual back to the mask.
pub(crate) fn ppo_mask_objective(
    basis: &TrigBasis,
    mask: &Array2<f64>,
    noisy: &SignalMatrix,
    clean: &SignalMatrix,
) -> Result<(f64, Array2<f64>)> {
    let alpha = analyze(basis, noisy)?;
    let masked = mask * alpha.array();
    let denoised = masked.dot(&basis.matrix().t());
    let resid = denoised - clean.array();
    let n = (noisy.rows() * noisy.cols()) as f64;
    let loss = resid.iter().map(|v| v * v).sum::<f64>() / n;
    let d_mask = resid.dot(basis.matrix()) * alpha.array() * (2.0 / n);
    Ok((loss, d_mask))
}

/// Mean squared reconstruction error of the masked-coefficient pipeline plus
/// an L2 weight penalty, with gradients for every network parameter. The
/// basis itself receives no gradient.
pub fn ppo_loss_and_grad(
    mlp: &Mlp,
    basis: &TrigBasis,
    noisy: &SignalMatrix,
    clean: &SignalMatrix,
    l2: f64,
) -> Result<(f64, GradientSet)> {
    check_pair("ppo_loss_and_grad", noisy, clean)?;
    check_l2(l2)?;
    if noisy.cols() != basis.samples() {
        return Err(Error::dims("ppo_loss_and_grad samples", basis.samples(), noisy.cols()));
    }
    if mlp.output_dim() != basis.dim() {
        return Err(Error::dims("ppo_loss_and_grad mask width", basis.dim(), mlp.output_dim()));
    }
    let cache = mlp.forward(noisy.array())?;
    let (data_loss, d_mask) = ppo_mask_objective(basis, cache.output(), noisy, clean)?;
    let loss = data_loss + l2 * mlp.weight_norm_sq();
    if !loss.is_finite() {
        return Err(Error::NonFinite("mask loss"));
    }
    let mut grads = mlp.backward(&cache, &d_mask)?;
    add_weight_decay(&mut grads, mlp, l2);
    Ok((loss, grads))
}

/// Mean squared error of direct signal reconstruction plus an L2 weight
/// penalty, with parameter gradients.
pub fn dae_loss_and_grad(
    mlp: &Mlp,
    noisy: &SignalMatrix,
    clean: &SignalMatrix,
    l2: f64,
) -> Result<(f64, GradientSet)> {
    check_pair("dae_loss_and_grad", noisy, clean)?;
    check_l2(l2)?;
    if mlp.output_dim() != clean.cols() {
        return Err(Error::dims("dae_loss_and_grad output", clean.cols(), mlp.output_dim()));
    }
    let cache = mlp.forward(noisy.array())?;
    let resid = cache.output() - clean.array();
    let n = (noisy.rows() * noisy.cols()) as f64;
    let data_loss = resid.iter().map(|v| v * v).sum::<f64>() / n;
    let loss = data_loss + l2 * mlp.weight_norm_sq();
    if !loss.is_finite() {
        return Err(Error::NonFinite("reconstruction loss"));
    }
    let d_out = resid * (2.0 / n);
    let mut grads = mlp.backward(&cache, &d_out)?;
    add_weight_decay(&mut grads, mlp, l2);
    Ok((loss, grads))
}

fn add_weight_decay(grads: &mut GradientSet, mlp: &Mlp, l2: f64) {
    if l2 == 0.0 {
        return;
    }
    for (g, w) in grads.weights.iter_mut().zip(&mlp.weights) {
        *g += &(w * (2.0 * l2));
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Writes network parameters and the fitted scaler to a flat binary file:
/// magic, layer count, a shape/activation table, then row-major
/// little-endian f64 payloads and the scaler block.
pub fn save_checkpoint(path: &Path, mlp: &Mlp, scaler: &ScalerParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(mlp.weights.len() as u64).to_le_bytes())?;
    for (wm, act) in mlp.weights.iter().zip(&mlp.activations) {
        w.write_all(&(wm.nrows() as u64).to_le_bytes())?;
        w.write_all(&(wm.ncols() as u64).to_le_bytes())?;
        w.write_all(&[act.tag()])?;
    }
    for (wm, b) in mlp.weights.iter().zip(&mlp.biases) {
        for v in wm.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in b.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    scaler.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Mlp, ScalerParams)> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |detail: String| Error::format(path, detail);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad(format!("bad magic {magic:02x?}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let layers = u64::from_le_bytes(u64buf) as usize;
    if layers == 0 || layers > 64 {
        return Err(bad(format!("implausible layer count {layers}")));
    }
    let mut shapes = Vec::with_capacity(layers);
    let mut activations = Vec::with_capacity(layers);
    for _ in 0..layers {
        r.read_exact(&mut u64buf)?;
        let rows = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let cols = u64::from_le_bytes(u64buf) as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let act = Activation::from_tag(tag[0])
            .ok_or_else(|| bad(format!("unknown activation tag 0x{:02x}", tag[0])))?;
        if rows == 0 || cols == 0 {
            return Err(bad(format!("zero-sized layer {rows}x{cols}")));
        }
        shapes.push((rows, cols));
        activations.push(act);
    }
    for pair in shapes.windows(2) {
        if pair[1].1 != pair[0].0 {
            return Err(bad(format!(
                "layer shapes do not chain: {:?} then {:?}",
                pair[0], pair[1]
            )));
        }
    }
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    let read_f64 = |r: &mut BufReader<File>| -> Result<f64> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    };
    for &(rows, cols) in &shapes {
        let mut wm = Array2::zeros((rows, cols));
        for v in wm.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        let mut b = Array1::zeros(rows);
        for v in b.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        weights.push(wm);
        biases.push(b);
    }
    let scaler = ScalerParams::read_from(&mut r)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after scaler block".into()));
    }
    Ok((Mlp { weights, biases, activations }, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_trig_basis, synthesize, CoefficientMatrix};
    use crate::data::{fit_scaler, ScalerKind};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> SignalMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SignalMatrix::new(Array2::from_shape_fn((rows, cols), |_| {
            rng.random_range(-1.5..1.5)
        }))
        .unwrap()
    }

    #[test]
    fn activation_spot_values() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.5), 2.5);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert!((Activation::Sigmoid.apply(2.0) - 0.880_797_077_977_882_4).abs() < 1e-15);
        assert_eq!(Activation::Affine.apply(-3.25), -3.25);
    }

    #[test]
    fn init_shapes_biases_and_bound() {
        let mlp = Mlp::init(&[9, 5, 4], &[Activation::Relu, Activation::Sigmoid], 7).unwrap();
        assert_eq!(mlp.layer_dims(), vec![9, 5, 4]);
        assert_eq!(mlp.weights()[0].dim(), (5, 9));
        assert_eq!(mlp.weights()[1].dim(), (4, 5));
        assert!(mlp.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let bound0 = 1.0 / 9f64.sqrt();
        let max0 = mlp.weights()[0].iter().fold(0f64, |m, v| m.max(v.abs()));
        assert!(max0 < bound0 && max0 > 0.5 * bound0, "max |w| = {max0}");
    }

    #[test]
    fn init_is_seed_deterministic() {
        let acts = [Activation::Relu, Activation::Affine];
        let a = Mlp::init(&[6, 4, 3], &acts, 11).unwrap();
        let b = Mlp::init(&[6, 4, 3], &acts, 11).unwrap();
        let c = Mlp::init(&[6, 4, 3], &acts, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_bad_specs() {
        assert!(Mlp::init(&[5], &[], 0).is_err());
        assert!(Mlp::init(&[5, 3], &[], 0).is_err());
        assert!(Mlp::init(&[5, 0, 3], &[Activation::Relu, Activation::Affine], 0).is_err());
    }

    #[test]
    fn forward_matches_manual_affine_layer() {
        let mut mlp = Mlp::init(&[2, 2], &[Activation::Affine], 0).unwrap();
        mlp.weights_mut()[0] = ndarray::array![[1.0, 2.0], [3.0, -1.0]];
        mlp.biases_mut()[0] = ndarray::array![0.5, -0.5];
        let input = ndarray::array![[1.0, 1.0], [2.0, 0.0]];
        let cache = mlp.forward(&input).unwrap();
        let expected = ndarray::array![[3.5, 1.5], [2.5, 5.5]];
        assert_eq!(cache.output(), &expected);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let mlp = Mlp::init(&[4, 2], &[Activation::Affine], 0).unwrap();
        assert!(mlp.forward(&Array2::zeros((3, 5))).is_err());
    }

    /// Central finite differences over every parameter of the network.
    fn finite_diff_check<F>(mlp: &mut Mlp, loss: F)
    where
        F: Fn(&Mlp) -> (f64, GradientSet),
    {
        let (_, grads) = loss(mlp);
        let h = 1e-5;
        let layers = mlp.weights().len();
        for i in 0..layers {
            let (rows, cols) = mlp.weights()[i].dim();
            for r in 0..rows {
                for c in 0..cols {
                    let orig = mlp.weights()[i][[r, c]];
                    mlp.weights_mut()[i][[r, c]] = orig + h;
                    let (up, _) = loss(mlp);
                    mlp.weights_mut()[i][[r, c]] = orig - h;
                    let (down, _) = loss(mlp);
                    mlp.weights_mut()[i][[r, c]] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grads.weights[i][[r, c]];
                    let rel = (analytic - numeric).abs()
                        / analytic.abs().max(numeric.abs()).max(1e-6);
                    assert!(rel < 1e-4, "W[{i}][{r},{c}]: {analytic} vs {numeric} (rel {rel:e})");
                }
            }
            for r in 0..mlp.biases()[i].len() {
                let orig = mlp.biases()[i][r];
                mlp.biases_mut()[i][r] = orig + h;
                let (up, _) = loss(mlp);
                mlp.biases_mut()[i][r] = orig - h;
                let (down, _) = loss(mlp);
                mlp.biases_mut()[i][r] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.biases[i][r];
                let rel =
                    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "b[{i}][{r}]: {analytic} vs {numeric} (rel {rel:e})");
            }
        }
    }

    #[test]
    fn dae_gradients_match_finite_differences() {
        let mut mlp =
            Mlp::init(&[6, 8, 6], &[Activation::Relu, Activation::Affine], 21).unwrap();
        let noisy = random_batch(4, 6, 1);
        let clean = random_batch(4, 6, 2);
        finite_diff_check(&mut mlp, |m| dae_loss_and_grad(m, &noisy, &clean, 0.01).unwrap());
    }

    #[test]
    fn ppo_gradients_match_finite_differences() {
        let basis = build_trig_basis(16, 3).unwrap();
        let mut mlp =
            Mlp::init(&[16, 10, 8], &[Activation::Relu, Activation::Sigmoid], 33).unwrap();
        let noisy = random_batch(4, 16, 3);
        let clean = random_batch(4, 16, 4);
        finite_diff_check(&mut mlp, |m| {
            ppo_loss_and_grad(m, &basis, &noisy, &clean, 0.005).unwrap()
        });
    }

    #[test]
    fn mask_gradient_agrees_with_coefficient_space_formula() {
        // In coefficient space the data term is mean((m.*a - b)^2) plus a
        // mask-independent offset, so d/dm_k = 2/(R*M) * a_k (m_k a_k - b_k).
        let basis = build_trig_basis(24, 5).unwrap();
        let noisy = random_batch(6, 24, 5);
        let clean = random_batch(6, 24, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mask = Array2::from_shape_fn((6, basis.dim()), |_| rng.random_range(0.0..1.0));
        let (_, d_mask) = ppo_mask_objective(&basis, &mask, &noisy, &clean).unwrap();

        let alpha = analyze(&basis, &noisy).unwrap();
        let beta = analyze(&basis, &clean).unwrap();
        let n = (6 * 24) as f64;
        for r in 0..6 {
            for k in 0..basis.dim() {
                let a = alpha.array()[[r, k]];
                let b = beta.array()[[r, k]];
                let expected = 2.0 / n * a * (mask[[r, k]] * a - b);
                let got = d_mask[[r, k]];
                assert!(
                    (got - expected).abs() < 1e-12,
                    "({r},{k}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn saturated_mask_on_clean_band_limited_data_has_zero_loss() {
        let basis = build_trig_basis(16, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coeffs = CoefficientMatrix::new(Array2::from_shape_fn((5, basis.dim()), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let clean = synthesize(&basis, &coeffs).unwrap();
        // Zero weights and a large positive bias saturate the sigmoid to
        // exactly 1.0, making the pipeline a plain round trip.
        let mut mlp = Mlp::init(&[16, basis.dim()], &[Activation::Sigmoid], 0).unwrap();
        mlp.weights_mut()[0].fill(0.0);
        mlp.biases_mut()[0].fill(50.0);
        let (loss, _) = ppo_loss_and_grad(&mlp, &basis, &clean, &clean, 0.0).unwrap();
        assert!(loss < 1e-25, "loss {loss:e}");
    }

    #[test]
    fn l2_term_adds_exactly_the_weight_norm() {
        let mlp = Mlp::init(&[5, 7, 5], &[Activation::Relu, Activation::Affine], 13).unwrap();
        let noisy = random_batch(3, 5, 8);
        let clean = random_batch(3, 5, 9);
        let (base, _) = dae_loss_and_grad(&mlp, &noisy, &clean, 0.0).unwrap();
        let (penalized, _) = dae_loss_and_grad(&mlp, &noisy, &clean, 0.1).unwrap();
        let expected = base + 0.1 * mlp.weight_norm_sq();
        assert!((penalized - expected).abs() < 1e-12);
        assert!(dae_loss_and_grad(&mlp, &noisy, &clean, -0.1).is_err());
    }

    #[test]
    fn loss_shape_mismatches_are_rejected() {
        let basis = build_trig_basis(16, 3).unwrap();
        let mlp = Mlp::init(&[16, 8], &[Activation::Sigmoid], 0).unwrap();
        let a = random_batch(4, 16, 0);
        let b = random_batch(3, 16, 0);
        assert!(ppo_loss_and_grad(&mlp, &basis, &a, &b, 0.0).is_err());
        let wrong_head = Mlp::init(&[16, 7], &[Activation::Sigmoid], 0).unwrap();
        assert!(ppo_loss_and_grad(&wrong_head, &basis, &a, &a, 0.0).is_err());
        let dae = Mlp::init(&[16, 16], &[Activation::Affine], 0).unwrap();
        assert!(dae_loss_and_grad(&dae, &a, &b, 0.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mlp = Mlp::init(
            &[6, 9, 4],
            &[Activation::Relu, Activation::Sigmoid],
            99,
        )
        .unwrap();
        let train = random_batch(8, 6, 10);
        let scaler = fit_scaler(&train, ScalerKind::Standard).unwrap();
        save_checkpoint(&path, &mlp, &scaler).unwrap();
        let (loaded, loaded_scaler) = load_checkpoint(&path).unwrap();
        assert_eq!(mlp, loaded);
        assert_eq!(scaler, loaded_scaler);
        for (a, b) in mlp.weights().iter().zip(loaded.weights()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let input = random_batch(3, 6, 11);
        let out_a = mlp.forward(input.array()).unwrap();
        let out_b = loaded.forward(input.array()).unwrap();
        assert_eq!(out_a.output(), out_b.output());
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mlp = Mlp::init(&[4, 3], &[Activation::Sigmoid], 1).unwrap();
        save_checkpoint(&path, &mlp, &ScalerParams::None).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let bad_magic = path.with_file_name("bad_magic.ckpt");
        let mut corrupted = bytes.clone();
        corrupted[0] ^= 0xff;
        std::fs::write(&bad_magic, &corrupted).unwrap();
        assert!(load_checkpoint(&bad_magic).is_err());

        let truncated = path.with_file_name("truncated.ckpt");
        std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_checkpoint(&truncated).is_err());

        let padded = path.with_file_name("padded.ckpt");
        let mut extra = bytes;
        extra.push(0);
        std::fs::write(&padded, &extra).unwrap();
        assert!(load_checkpoint(&padded).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn sigmoid_head_outputs_stay_in_unit_interval(
            seed in 0u64..1000,
            rows in 1usize..6,
        ) {
            let mlp = Mlp::init(
                &[10, 7, 5],
                &[Activation::Relu, Activation::Sigmoid],
                seed,
            ).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let input = Array2::from_shape_fn((rows, 10), |_| rng.random_range(-30.0..30.0));
            let out = mlp.forward(&input).unwrap();
            for &v in out.output().iter() {
                prop_assert!((0.0..=1.0).contains(&v), "mask value {v}");
            }
        }
    }
}
