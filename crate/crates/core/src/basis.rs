//! Discrete trigonometric orthonormal basis with analysis and synthesis
//! realized as dense matrix products.
//!
//! The basis matrix `phi` has one column per basis function, sampled on the
//! uniform grid `x_j = 2*pi*j/M` and rescaled to unit Euclidean norm.
//! Columns alternate cosine and sine: column `2k` is `cos(k x)` for
//! `k = 0..=N` and column `2k+1` is `sin((k+1) x)`, so the matrix is
//! `M x (2N+2)` with no zero column. Phases are reduced with integer
//! arithmetic (`(k*j) mod M`) before the trig evaluation, which keeps the
//! discrete Gram matrix equal to the identity down to rounding error.

use ndarray::{Array1, Array2};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Which family a basis column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Cosine,
    Sine,
}

/// The sampled trigonometric basis: the synthesis matrix `phi` (`M x D`,
/// `D = 2N+2`), its sample grid, and the index bookkeeping between columns
/// and frequencies.
///
/// Immutable after construction; `analyze` and `synthesize` are pure, so a
/// basis can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct TrigBasis {
    samples_m: usize,
    max_index_n: usize,
    grid_x: Array1<f64>,
    phi: Array2<f64>,
}

impl TrigBasis {
    /// Number of samples `M` (rows of `phi`).
    pub fn samples(&self) -> usize {
        self.samples_m
    }

    /// Largest cosine frequency index `N`.
    pub fn max_index(&self) -> usize {
        self.max_index_n
    }

    /// Number of coefficients `D = 2N+2` (columns of `phi`).
    pub fn dim(&self) -> usize {
        2 * self.max_index_n + 2
    }

    /// Sample positions `x_j = 2*pi*j/M` in radians.
    pub fn grid(&self) -> &Array1<f64> {
        &self.grid_x
    }

    /// The synthesis matrix. Its transpose is the analysis matrix.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.phi
    }

    /// Column index of `cos(k x)`, valid for `k <= N`.
    pub fn cos_column(&self, k: usize) -> usize {
        debug_assert!(k <= self.max_index_n);
        2 * k
    }

    /// Column index of `sin(k x)`, valid for `1 <= k <= N+1`.
    pub fn sin_column(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.max_index_n + 1);
        2 * (k - 1) + 1
    }

    /// Family and frequency of a column.
    pub fn column_frequency(&self, col: usize) -> (ColumnKind, usize) {
        if col % 2 == 0 {
            (ColumnKind::Cosine, col / 2)
        } else {
            (ColumnKind::Sine, col / 2 + 1)
        }
    }
}

/// Builds the basis for `M` samples and maximum cosine index `N`.
///
/// Fails when `M < 4` or `N + 1 > floor((M-1)/2)`; past that limit the
/// highest sine column vanishes or aliases on the grid.
pub fn build_trig_basis(samples_m: usize, max_index_n: usize) -> Result<TrigBasis> {
    if samples_m < 4 {
        return Err(Error::InvalidArgument(format!(
            "basis needs at least 4 samples, got {samples_m}"
        )));
    }
    let limit = (samples_m - 1) / 2;
    if max_index_n + 1 > limit {
        return Err(Error::InvalidArgument(format!(
            "max index {max_index_n} too large for {samples_m} samples: \
             need N+1 <= floor((M-1)/2) = {limit}"
        )));
    }

    let m = samples_m;
    let d = 2 * max_index_n + 2;
    let grid_x = Array1::from_iter((0..m).map(|j| 2.0 * PI * j as f64 / m as f64));

    // One period of samples; every entry of phi is a lookup into these.
    let cos_table: Vec<f64> = (0..m).map(|r| (2.0 * PI * r as f64 / m as f64).cos()).collect();
    let sin_table: Vec<f64> = (0..m).map(|r| (2.0 * PI * r as f64 / m as f64).sin()).collect();

    let mut phi = Array2::<f64>::zeros((m, d));
    for k in 0..=max_index_n {
        for j in 0..m {
            phi[[j, 2 * k]] = cos_table[(k * j) % m];
            phi[[j, 2 * k + 1]] = sin_table[((k + 1) * j) % m];
        }
    }
    for mut col in phi.columns_mut() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        col.mapv_inplace(|v| v / norm);
    }

    Ok(TrigBasis {
        samples_m,
        max_index_n,
        grid_x,
        phi,
    })
}

/// A real `trials x samples` matrix; one row per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix(Array2<f64>);

impl SignalMatrix {
    /// Wraps a matrix, rejecting NaN/Inf entries.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal matrix"));
        }
        Ok(SignalMatrix(values))
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn new_unchecked(values: Array2<f64>) -> Self {
        SignalMatrix(values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SignalMatrix(Array2::zeros((rows, cols)))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }
}

/// Coefficient vectors stacked as rows: `trials x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(Array2<f64>);

impl CoefficientMatrix {
    /// Wraps a matrix of row coefficient vectors, rejecting NaN/Inf entries.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient matrix"));
        }
        Ok(CoefficientMatrix(values))
    }

    pub(crate) fn new_unchecked(values: Array2<f64>) -> Self {
        CoefficientMatrix(values)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }
}

/// Analysis: coefficient row `r` is `phi^T * signal_row_r`.
pub fn analyze(basis: &TrigBasis, signal: &SignalMatrix) -> Result<CoefficientMatrix> {
    if signal.cols() != basis.samples() {
        return Err(Error::dims("analyze", basis.samples(), signal.cols()));
    }
    Ok(CoefficientMatrix::new_unchecked(
        signal.array().dot(basis.matrix()),
    ))
}

/// Synthesis: signal row `r` is `phi * coeff_row_r`.
pub fn synthesize(basis: &TrigBasis, coeffs: &CoefficientMatrix) -> Result<SignalMatrix> {
    if coeffs.dim() != basis.dim() {
        return Err(Error::dims("synthesize", basis.dim(), coeffs.dim()));
    }
    Ok(SignalMatrix::new_unchecked(
        coeffs.array().dot(&basis.matrix().t()),
    ))
}
