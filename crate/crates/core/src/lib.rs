//! Spectral filtering with a trigonometric basis and a learned soft mask.
//!
//! The toolkit decomposes signals over an orthonormal trigonometric basis,
//! filters them by weighting the coefficients, and reconstructs the result.
//! Three filter families are provided:
//!
//! - rule-based projection filters with a hard 0/1 coefficient mask
//!   (threshold or all-pass),
//! - a learned filter whose per-signal soft mask in `[0, 1]` is produced by
//!   a small feed-forward network with a sigmoid head,
//! - a denoising autoencoder baseline with the same training harness.
//!
//! [`basis`] builds the basis matrix and the analyze/synthesize operations,
//! [`filters`] applies masks, [`nn`] holds the network with hand-derived
//! backpropagation, [`data`] covers dataset construction, scaling, splitting
//! and the noise models, [`training`] runs the minibatch loop with per-epoch
//! noise resampling and validation-based selection, and [`eval`] /
//! [`experiment`] produce MSE tables, reports and full experiment runs.

pub mod basis;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod filters;
pub mod io;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
