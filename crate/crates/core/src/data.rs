//! Dataset construction, per-column scaling, train/eval splitting, and the
//! noise models used to corrupt clean signals.
//!
//! Every random choice funnels through an explicit `u64` seed via
//! [`derive_seed`], so datasets, splits and noise realizations are
//! bit-reproducible. Noise is generated row by row from per-row derived
//! seeds; the result does not depend on evaluation order.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::basis::{synthesize, CoefficientMatrix, SignalMatrix, TrigBasis};
use crate::error::{Error, Result};

/// Source sample rate expected from the WAV ingestion path.
pub const SAMPLE_RATE: usize = 48_000;
/// Keep every tenth sample when downsampling a one-second segment.
pub const DOWNSAMPLE_FACTOR: usize = 10;
/// Samples per row after segmentation and downsampling.
pub const SAMPLES_PER_SECOND: usize = SAMPLE_RATE / DOWNSAMPLE_FACTOR;

// Stream tags for derive_seed. Each independent consumer of randomness gets
// its own tag so seeds never collide across subsystems.
pub(crate) const STREAM_SHUFFLE_PERM: u64 = 1;
pub(crate) const STREAM_OUTLIER_ROWS: u64 = 2;
pub(crate) const STREAM_BAND_ROWS: u64 = 3;
pub(crate) const STREAM_SYNTH_ROWS: u64 = 4;
pub(crate) const STREAM_SPLIT: u64 = 5;
pub(crate) const STREAM_TRAIN_NOISE: u64 = 6;
pub(crate) const STREAM_VAL_NOISE: u64 = 7;
pub(crate) const STREAM_BATCH_ORDER: u64 = 8;
pub(crate) const STREAM_VAL_SPLIT: u64 = 9;
pub(crate) const STREAM_EVAL_NOISE: u64 = 10;
pub(crate) const STREAM_MODEL_INIT: u64 = 11;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from a base seed, a stream tag and an index
/// within the stream. Fixed scheme; changing it changes every reproduced
/// number downstream.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(base ^ splitmix(stream)) ^ splitmix(index))
}

fn rng_for(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

fn sample_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// Cuts a mono 48 kHz track into one-second rows and keeps every tenth
/// sample, yielding a `seconds x 4800` matrix.
pub fn segment_and_downsample(track: &[f64], seconds: usize) -> Result<SignalMatrix> {
    if track.len() < SAMPLE_RATE {
        return Err(Error::InvalidArgument(format!(
            "track has {} samples, shorter than one second ({SAMPLE_RATE})",
            track.len()
        )));
    }
    if seconds == 0 {
        return Err(Error::InvalidArgument("zero seconds requested".into()));
    }
    if track.len() < seconds * SAMPLE_RATE {
        return Err(Error::InvalidArgument(format!(
            "track has {} samples, need {} for {seconds} whole seconds",
            track.len(),
            seconds * SAMPLE_RATE
        )));
    }
    let mut out = Array2::zeros((seconds, SAMPLES_PER_SECOND));
    for r in 0..seconds {
        let base = r * SAMPLE_RATE;
        for c in 0..SAMPLES_PER_SECOND {
            out[[r, c]] = track[base + c * DOWNSAMPLE_FACTOR];
        }
    }
    SignalMatrix::new(out)
}

/// [`segment_and_downsample`] over every whole second in the track.
pub fn segment_whole_track(track: &[f64]) -> Result<SignalMatrix> {
    segment_and_downsample(track, track.len() / SAMPLE_RATE)
}

// ---------------------------------------------------------------------------
// Synthetic band-limited data
// ---------------------------------------------------------------------------

/// Generates rows that are exact basis combinations supported on
/// `active_indices`, with amplitudes drawn uniformly from `amplitude`.
/// Returns the signals together with the ground-truth coefficients.
pub fn synth_bandlimited_dataset(
    basis: &TrigBasis,
    rows: usize,
    active_indices: &[usize],
    amplitude: (f64, f64),
    seed: u64,
) -> Result<(SignalMatrix, CoefficientMatrix)> {
    if rows == 0 {
        return Err(Error::InvalidArgument("zero rows requested".into()));
    }
    if active_indices.is_empty() {
        return Err(Error::InvalidArgument("empty active index set".into()));
    }
    let mut active: Vec<usize> = active_indices.to_vec();
    active.sort_unstable();
    active.dedup();
    if let Some(&bad) = active.iter().find(|&&k| k >= basis.dim()) {
        return Err(Error::InvalidArgument(format!(
            "active index {bad} out of range for {} coefficients",
            basis.dim()
        )));
    }
    let (lo, hi) = amplitude;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "bad amplitude range [{lo}, {hi})"
        )));
    }

    let mut coeffs = Array2::zeros((rows, basis.dim()));
    for r in 0..rows {
        let mut rng = rng_for(seed, STREAM_SYNTH_ROWS, r as u64);
        for &k in &active {
            coeffs[[r, k]] = sample_range(&mut rng, lo, hi);
        }
    }
    let coeffs = CoefficientMatrix::new(coeffs)?;
    let signal = synthesize(basis, &coeffs)?;
    Ok((signal, coeffs))
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

/// Scaler family to fit on training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    /// Per-column linear map of the training min/max onto (-1, 1).
    MinMax,
    /// Per-column zero mean, unit variance on the training set.
    Standard,
}

/// Fitted per-column scaling parameters.
///
/// `None` is the identity transform; it exists so pipelines that must keep
/// signals exactly band-limited (the synthetic oracle experiments) can run
/// through the same code paths.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalerParams {
    MinMax { mins: Array1<f64>, maxs: Array1<f64> },
    Standard { means: Array1<f64>, stds: Array1<f64> },
    None,
}

impl ScalerParams {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ScalerParams::MinMax { .. } => "minmax",
            ScalerParams::Standard { .. } => "standard",
            ScalerParams::None => "none",
        }
    }

    fn check_cols(&self, context: &'static str, cols: usize) -> Result<()> {
        let expected = match self {
            ScalerParams::MinMax { mins, .. } => mins.len(),
            ScalerParams::Standard { means, .. } => means.len(),
            ScalerParams::None => return Ok(()),
        };
        if cols != expected {
            return Err(Error::dims(context, expected, cols));
        }
        Ok(())
    }

    /// Binary encoding used inside checkpoint files: a kind byte, then the
    /// column count and per-column statistics as little-endian f64.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        match self {
            ScalerParams::MinMax { mins, maxs } => {
                w.write_all(&[b'm'])?;
                w.write_all(&(mins.len() as u64).to_le_bytes())?;
                for v in mins.iter().chain(maxs.iter()) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            ScalerParams::Standard { means, stds } => {
                w.write_all(&[b's'])?;
                w.write_all(&(means.len() as u64).to_le_bytes())?;
                for v in means.iter().chain(stds.iter()) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            ScalerParams::None => w.write_all(&[b'n'])?,
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        if kind[0] == b'n' {
            return Ok(ScalerParams::None);
        }
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8)?;
        let cols = u64::from_le_bytes(len8) as usize;
        let read_vec = |r: &mut R| -> Result<Array1<f64>> {
            let mut out = Array1::zeros(cols);
            let mut buf = [0u8; 8];
            for v in out.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            Ok(out)
        };
        match kind[0] {
            b'm' => {
                let mins = read_vec(r)?;
                let maxs = read_vec(r)?;
                Ok(ScalerParams::MinMax { mins, maxs })
            }
            b's' => {
                let means = read_vec(r)?;
                let stds = read_vec(r)?;
                Ok(ScalerParams::Standard { means, stds })
            }
            other => Err(Error::Config(format!(
                "unknown scaler tag byte 0x{other:02x}"
            ))),
        }
    }
}

/// Fits per-column scaling statistics on training rows only.
pub fn fit_scaler(train: &SignalMatrix, kind: ScalerKind) -> Result<ScalerParams> {
    if train.rows() == 0 || train.cols() == 0 {
        return Err(Error::InvalidArgument("cannot fit a scaler on empty data".into()));
    }
    let values = train.array();
    match kind {
        ScalerKind::MinMax => {
            let mut mins = Array1::from_elem(train.cols(), f64::INFINITY);
            let mut maxs = Array1::from_elem(train.cols(), f64::NEG_INFINITY);
            for row in values.rows() {
                for (c, &v) in row.iter().enumerate() {
                    if v < mins[c] {
                        mins[c] = v;
                    }
                    if v > maxs[c] {
                        maxs[c] = v;
                    }
                }
            }
            Ok(ScalerParams::MinMax { mins, maxs })
        }
        ScalerKind::Standard => {
            let n = train.rows() as f64;
            let means = values.sum_axis(ndarray::Axis(0)) / n;
            let mut vars = Array1::<f64>::zeros(train.cols());
            for row in values.rows() {
                for (c, &v) in row.iter().enumerate() {
                    let d = v - means[c];
                    vars[c] += d * d;
                }
            }
            let stds = vars.mapv(|v| (v / n).sqrt());
            Ok(ScalerParams::Standard { means, stds })
        }
    }
}

/// Applies fitted scaling. Constant training columns map to 0 under both
/// kinds, which keeps the transform total without dividing by zero.
pub fn apply_scaler(params: &ScalerParams, data: &SignalMatrix) -> Result<SignalMatrix> {
    params.check_cols("apply_scaler", data.cols())?;
    let mut out = data.array().clone();
    match params {
        ScalerParams::MinMax { mins, maxs } => {
            for mut row in out.rows_mut() {
                for (c, v) in row.iter_mut().enumerate() {
                    let span = maxs[c] - mins[c];
                    *v = if span > 0.0 {
                        -1.0 + 2.0 * (*v - mins[c]) / span
                    } else {
                        0.0
                    };
                }
            }
        }
        ScalerParams::Standard { means, stds } => {
            for mut row in out.rows_mut() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = if stds[c] > 0.0 { (*v - means[c]) / stds[c] } else { 0.0 };
                }
            }
        }
        ScalerParams::None => {}
    }
    SignalMatrix::new(out)
}

/// Inverts [`apply_scaler`]. Constant training columns map back to their
/// training value.
pub fn invert_scaler(params: &ScalerParams, data: &SignalMatrix) -> Result<SignalMatrix> {
    params.check_cols("invert_scaler", data.cols())?;
    let mut out = data.array().clone();
    match params {
        ScalerParams::MinMax { mins, maxs } => {
            for mut row in out.rows_mut() {
                for (c, v) in row.iter_mut().enumerate() {
                    let span = maxs[c] - mins[c];
                    *v = if span > 0.0 {
                        mins[c] + (*v + 1.0) * span / 2.0
                    } else {
                        mins[c]
                    };
                }
            }
        }
        ScalerParams::Standard { means, stds } => {
            for mut row in out.rows_mut() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = if stds[c] > 0.0 { *v * stds[c] + means[c] } else { means[c] };
                }
            }
        }
        ScalerParams::None => {}
    }
    SignalMatrix::new(out)
}

// ---------------------------------------------------------------------------
// Noise models
// ---------------------------------------------------------------------------

/// Noise family applied to (scaled) clean data.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// No corruption; the noisy input equals the clean data.
    Clean,
    /// Adds a row-permuted copy of the dataset to itself, so signal and
    /// noise share frequency content.
    Shuffle,
    /// Multiplies every entry by an independent uniform draw from [1, 2),
    /// producing noise correlated with the signal.
    Outliers,
    /// Adds a synthetic basis combination supported on fixed coefficient
    /// indices; used when the noise frequencies must be known exactly.
    Band {
        indices: Vec<usize>,
        amplitude: (f64, f64),
    },
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Clean => "clean",
            NoiseKind::Shuffle => "shuffle",
            NoiseKind::Outliers => "outliers",
            NoiseKind::Band { .. } => "band",
        }
    }
}

/// A noise family plus the base seed that fully determines realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRepr", into = "NoiseSpecRepr")]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

/// Config-file shape of [`NoiseSpec`]: a flat table with `indices` and
/// `amplitude` present exactly when `kind = "band"`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSpecRepr {
    kind: String,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    indices: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude: Option<(f64, f64)>,
}

impl TryFrom<NoiseSpecRepr> for NoiseSpec {
    type Error = Error;

    fn try_from(repr: NoiseSpecRepr) -> Result<NoiseSpec> {
        let band_only = |present: bool, field: &str| {
            if present {
                Err(Error::Config(format!(
                    "noise field `{field}` is only valid for kind = \"band\""
                )))
            } else {
                Ok(())
            }
        };
        let kind = match repr.kind.as_str() {
            "clean" => NoiseKind::Clean,
            "shuffle" => NoiseKind::Shuffle,
            "outliers" => NoiseKind::Outliers,
            "band" => NoiseKind::Band {
                indices: repr.indices.clone().ok_or_else(|| {
                    Error::Config("band noise requires `indices`".into())
                })?,
                amplitude: repr.amplitude.ok_or_else(|| {
                    Error::Config("band noise requires `amplitude`".into())
                })?,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown noise kind {other:?} (expected clean, shuffle, outliers, or band)"
                )))
            }
        };
        if !matches!(kind, NoiseKind::Band { .. }) {
            band_only(repr.indices.is_some(), "indices")?;
            band_only(repr.amplitude.is_some(), "amplitude")?;
        }
        Ok(NoiseSpec { kind, seed: repr.seed })
    }
}

impl From<NoiseSpec> for NoiseSpecRepr {
    fn from(spec: NoiseSpec) -> NoiseSpecRepr {
        let (indices, amplitude) = match &spec.kind {
            NoiseKind::Band { indices, amplitude } => (Some(indices.clone()), Some(*amplitude)),
            _ => (None, None),
        };
        NoiseSpecRepr {
            kind: spec.kind.name().to_string(),
            seed: spec.seed,
            indices,
            amplitude,
        }
    }
}

impl NoiseSpec {
    pub fn clean(seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Clean, seed }
    }

    /// Realizes the noise with an explicit seed (callers derive per-epoch
    /// or per-purpose seeds from `self.seed`). `basis` is only needed for
    /// the band kind.
    pub fn realize(
        &self,
        clean: &SignalMatrix,
        basis: Option<&TrigBasis>,
        seed: u64,
    ) -> Result<SignalMatrix> {
        match &self.kind {
            NoiseKind::Clean => Ok(clean.clone()),
            NoiseKind::Shuffle => add_shuffle_noise(clean, seed),
            NoiseKind::Outliers => add_outlier_noise(clean, seed),
            NoiseKind::Band { indices, amplitude } => {
                let basis = basis.ok_or_else(|| {
                    Error::InvalidArgument("band noise needs a basis".into())
                })?;
                add_band_noise(basis, clean, indices, *amplitude, seed)
            }
        }
    }
}

/// Adds a uniformly random row permutation of the dataset to itself.
pub fn add_shuffle_noise(clean: &SignalMatrix, seed: u64) -> Result<SignalMatrix> {
    if clean.rows() == 0 {
        return Err(Error::InvalidArgument("shuffle noise needs at least one row".into()));
    }
    let mut perm: Vec<usize> = (0..clean.rows()).collect();
    perm.shuffle(&mut rng_for(seed, STREAM_SHUFFLE_PERM, 0));
    add_shuffle_noise_with_perm(clean, &perm)
}

pub(crate) fn add_shuffle_noise_with_perm(
    clean: &SignalMatrix,
    perm: &[usize],
) -> Result<SignalMatrix> {
    let values = clean.array();
    let mut out = values.clone();
    for (r, &src) in perm.iter().enumerate() {
        let added = values.row(src);
        let mut row = out.row_mut(r);
        row += &added;
    }
    Ok(SignalMatrix::new_unchecked(out))
}

/// Scales every entry by its own uniform draw from [1, 2). Zero entries stay
/// zero and no entry shrinks or flips sign.
pub fn add_outlier_noise(clean: &SignalMatrix, seed: u64) -> Result<SignalMatrix> {
    let mut out = clean.array().clone();
    for (r, mut row) in out.rows_mut().into_iter().enumerate() {
        let mut rng = rng_for(seed, STREAM_OUTLIER_ROWS, r as u64);
        for v in row.iter_mut() {
            *v *= rng.random_range(1.0..2.0);
        }
    }
    Ok(SignalMatrix::new_unchecked(out))
}

/// Adds per-row basis noise supported on `indices`, with amplitudes drawn
/// uniformly from `amplitude`.
pub fn add_band_noise(
    basis: &TrigBasis,
    clean: &SignalMatrix,
    indices: &[usize],
    amplitude: (f64, f64),
    seed: u64,
) -> Result<SignalMatrix> {
    if clean.cols() != basis.samples() {
        return Err(Error::dims("add_band_noise", basis.samples(), clean.cols()));
    }
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty band-noise index set".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&k| k >= basis.dim()) {
        return Err(Error::InvalidArgument(format!(
            "band-noise index {bad} out of range for {} coefficients",
            basis.dim()
        )));
    }
    let (lo, hi) = amplitude;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "bad amplitude range [{lo}, {hi})"
        )));
    }
    let mut noise_coeffs = Array2::zeros((clean.rows(), basis.dim()));
    for r in 0..clean.rows() {
        let mut rng = rng_for(seed, STREAM_BAND_ROWS, r as u64);
        for &k in indices {
            noise_coeffs[[r, k]] = sample_range(&mut rng, lo, hi);
        }
    }
    let noise = synthesize(basis, &CoefficientMatrix::new_unchecked(noise_coeffs))?;
    Ok(SignalMatrix::new_unchecked(
        clean.array() + noise.array(),
    ))
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Disjoint shuffled row-index sets; the second gets `round(fraction * rows)`.
pub fn split_indices(rows: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let held = ((rows as f64 * fraction).round() as usize).clamp(1, rows.saturating_sub(1));
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut rng_for(seed, STREAM_SPLIT, 0));
    let held_idx = order.split_off(rows - held);
    Ok((order, held_idx))
}

/// 80/20-style shuffled row split into (train, eval) matrices.
pub fn shuffle_split(
    data: &SignalMatrix,
    eval_fraction: f64,
    seed: u64,
) -> Result<(SignalMatrix, SignalMatrix)> {
    if data.rows() < 5 {
        return Err(Error::InvalidArgument(format!(
            "need at least 5 rows to split, got {}",
            data.rows()
        )));
    }
    let (train_idx, eval_idx) = split_indices(data.rows(), eval_fraction, seed)?;
    Ok((
        select_rows(data, &train_idx),
        select_rows(data, &eval_idx),
    ))
}

pub(crate) fn select_rows(data: &SignalMatrix, indices: &[usize]) -> SignalMatrix {
    let values = data.array();
    let mut out = Array2::zeros((indices.len(), data.cols()));
    for (r, &src) in indices.iter().enumerate() {
        out.row_mut(r).assign(&values.row(src));
    }
    SignalMatrix::new_unchecked(out)
}
