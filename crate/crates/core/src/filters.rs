//! Projection filtering: weight trigonometric coefficients with a mask, then
//! synthesize back to signal space.
//!
//! Three mask sources are supported. Binary masks give a true projection
//! (idempotent, self-adjoint). Soft masks in \[0, 1\] give the "pseudo"
//! variant, self-adjoint but deliberately not idempotent. Network masks are
//! soft masks predicted per input row by an [`Mlp`] with a sigmoid head.

use ndarray::{Array1, ArrayView1};

use crate::basis::{analyze, synthesize, CoefficientMatrix, SignalMatrix, TrigBasis};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

/// Whether a mask is restricted to {0, 1} or may take any value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Binary,
    Soft,
}

/// A length-D vector of per-coefficient weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    weights: Array1<f64>,
    kind: MaskKind,
}

impl Mask {
    /// A mask whose entries must all be exactly 0 or 1.
    pub fn binary(weights: Array1<f64>) -> Result<Mask> {
        if let Some(bad) = weights.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "binary mask entry {bad} is neither 0 nor 1"
            )));
        }
        Ok(Mask { weights, kind: MaskKind::Binary })
    }

    /// A mask whose entries must lie in [0, 1]. The endpoints are allowed:
    /// a saturated sigmoid rounds to exactly 0.0 or 1.0 in f64.
    pub fn soft(weights: Array1<f64>) -> Result<Mask> {
        if let Some(bad) = weights.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument(format!(
                "soft mask entry {bad} lies outside [0, 1]"
            )));
        }
        Ok(Mask { weights, kind: MaskKind::Soft })
    }

    /// The all-ones binary mask: the filter keeps every coefficient. This is
    /// the explicit representation of an "all-pass" filter; it is not
    /// expressed through a zero threshold, which would drop coefficients
    /// that are exactly zero.
    pub fn all_pass(dim: usize) -> Mask {
        Mask { weights: Array1::ones(dim), kind: MaskKind::Binary }
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Binary mask keeping the coefficients whose magnitude strictly exceeds
/// `tau`.
pub fn threshold_mask(coeffs: ArrayView1<f64>, tau: f64) -> Result<Mask> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be non-negative, got {tau}"
        )));
    }
    Mask::binary(coeffs.mapv(|v| if v.abs() > tau { 1.0 } else { 0.0 }))
}

/// Applies one fixed mask to every row: analyze, weight each coefficient,
/// synthesize.
pub fn apply_projection(
    basis: &TrigBasis,
    mask: &Mask,
    signal: &SignalMatrix,
) -> Result<SignalMatrix> {
    if mask.len() != basis.dim() {
        return Err(Error::dims("apply_projection mask", basis.dim(), mask.len()));
    }
    let coeffs = analyze(basis, signal)?;
    let masked = coeffs.array() * mask.weights();
    synthesize(basis, &CoefficientMatrix::new_unchecked(masked))
}

/// Rule-based filter choice for the classical baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoThreshold {
    /// Keep every coefficient.
    AllPass,
    /// Per row, keep the coefficients of that row whose magnitude strictly
    /// exceeds the cutoff. The mask is data-dependent: each row is
    /// thresholded against its own observed coefficients.
    Cutoff(f64),
}

impl PoThreshold {
    pub fn name(&self) -> String {
        match self {
            PoThreshold::AllPass => "po_all_pass".to_string(),
            PoThreshold::Cutoff(tau) => format!("po_cutoff_{tau}"),
        }
    }
}

/// Filters every row with the rule-based projection.
pub fn po_filter(
    basis: &TrigBasis,
    threshold: &PoThreshold,
    signal: &SignalMatrix,
) -> Result<SignalMatrix> {
    match threshold {
        PoThreshold::AllPass => {
            apply_projection(basis, &Mask::all_pass(basis.dim()), signal)
        }
        PoThreshold::Cutoff(tau) => {
            let coeffs = analyze(basis, signal)?;
            let mut masked = coeffs.into_array();
            for mut row in masked.rows_mut() {
                let mask = threshold_mask(row.view(), *tau)?;
                row *= mask.weights();
            }
            synthesize(basis, &CoefficientMatrix::new_unchecked(masked))
        }
    }
}

/// Runs the network on each row to predict a soft mask, filters with it, and
/// returns the masks alongside the filtered signal for diagnostics.
pub fn ppo_forward(
    basis: &TrigBasis,
    network: &Mlp,
    signal: &SignalMatrix,
) -> Result<(SignalMatrix, Vec<Mask>)> {
    if network.input_dim() != basis.samples() {
        return Err(Error::dims("ppo_forward input", basis.samples(), network.input_dim()));
    }
    if network.output_dim() != basis.dim() {
        return Err(Error::dims("ppo_forward mask width", basis.dim(), network.output_dim()));
    }
    if network.activations().last() != Some(&Activation::Sigmoid) {
        return Err(Error::InvalidArgument(
            "mask network must end in a sigmoid layer".into(),
        ));
    }
    let cache = network.forward(signal.array())?;
    let mask_rows = cache.output();
    let coeffs = analyze(basis, signal)?;
    let masked = coeffs.array() * mask_rows;
    let filtered = synthesize(basis, &CoefficientMatrix::new_unchecked(masked))?;
    let masks = mask_rows
        .rows()
        .into_iter()
        .map(|row| Mask::soft(row.to_owned()))
        .collect::<Result<Vec<_>>>()?;
    Ok((filtered, masks))
}
