//! Helpers shared by the integration test targets.

use specmask::nn::{GradientSet, Mlp};

/// Central-difference gradient check over every weight and bias.
///
/// `loss` must recompute the full objective for the perturbed network.
/// Returns the worst relative error, using `max(|analytic|, |numeric|, 1e-6)`
/// as the denominator so that near-zero gradients compare absolutely.
pub fn finite_diff_max_rel_err<F>(mlp: &Mlp, analytic: &GradientSet, loss: F) -> f64
where
    F: Fn(&Mlp) -> f64,
{
    const H: f64 = 1e-5;
    let mut worst = 0.0_f64;
    let mut probe = mlp.clone();
    for layer in 0..mlp.weights().len() {
        let rows = mlp.weights()[layer].nrows();
        let cols = mlp.weights()[layer].ncols();
        for r in 0..rows {
            for c in 0..cols {
                let original = probe.weights()[layer][(r, c)];
                probe.weights_mut()[layer][(r, c)] = original + H;
                let up = loss(&probe);
                probe.weights_mut()[layer][(r, c)] = original - H;
                let down = loss(&probe);
                probe.weights_mut()[layer][(r, c)] = original;
                let numeric = (up - down) / (2.0 * H);
                let a = analytic.weights[layer][(r, c)];
                worst = worst.max(rel_err(a, numeric));
            }
        }
        for i in 0..mlp.biases()[layer].len() {
            let original = probe.biases()[layer][i];
            probe.biases_mut()[layer][i] = original + H;
            let up = loss(&probe);
            probe.biases_mut()[layer][i] = original - H;
            let down = loss(&probe);
            probe.biases_mut()[layer][i] = original;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic.biases[layer][i];
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
