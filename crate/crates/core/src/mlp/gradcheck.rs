//! Central finite-difference check of the backprop gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gradients, loss, MlpModel, PROBABILITY_FLOOR};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    pub params_per_layer: usize,
    /// A gradient counts as resolvable when `|g| * step` exceeds
    /// `resolution * EPSILON * max(|loss|, 1)`, the rounding noise of the
    /// loss difference scaled up by this factor.
    pub resolution: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            params_per_layer: 50,
            resolution: 1e6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: usize,
    pub checked: usize,
    /// Parameters skipped because a perturbation flipped some ReLU, so the
    /// loss is not differentiable within the step.
    pub skipped_kinks: usize,
    /// Parameters whose gradient is too small for a central difference to
    /// resolve, typically behind a saturated softmax.
    pub skipped_unresolved: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
    pub max_relative_error: f64,
}

/// `|a - n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

#[derive(Clone, Copy)]
enum Param {
    Weight(usize, usize),
    Bias(usize),
}

fn param_mut(model: &mut MlpModel, layer: usize, p: Param) -> &mut f64 {
    match p {
        Param::Weight(r, c) => &mut model.layers[layer].weights[[r, c]],
        Param::Bias(r) => &mut model.layers[layer].biases[r],
    }
}

/// Compares analytic gradients of the single-sample loss against central
/// differences on randomly chosen weights and biases of every layer.
pub fn gradient_check(
    model: &MlpModel,
    input: &[f64],
    label: usize,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = gradients(model, &[(input, label)])?.gradients;
    let base_pattern = model.relu_pattern(input)?;
    let base_probs = model.forward(input)?;
    let floor = cfg.resolution * f64::EPSILON * loss(&base_probs, label).max(1.0) / cfg.step;
    let clamped = |p: &[f64]| p[label] <= PROBABILITY_FLOOR;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = model.clone();
    let mut layers = Vec::with_capacity(model.layers.len());

    for l in 0..model.layers.len() {
        let (rows, cols) = model.layers[l].weights.dim();
        let total = rows * cols + rows;
        let order = index::sample(&mut rng, total, total);
        let mut check = LayerCheck {
            layer: l,
            checked: 0,
            skipped_kinks: 0,
            skipped_unresolved: 0,
            max_relative_error: 0.0,
        };
        for flat in order.iter() {
            if check.checked == cfg.params_per_layer {
                break;
            }
            let (param, grad) = if flat < rows * cols {
                let (r, c) = (flat / cols, flat % cols);
                (Param::Weight(r, c), analytic.weights[l][[r, c]])
            } else {
                let r = flat - rows * cols;
                (Param::Bias(r), analytic.biases[l][r])
            };
            let original = *param_mut(&mut probe, l, param);
            *param_mut(&mut probe, l, param) = original + cfg.step;
            let plus_pattern = probe.relu_pattern(input)?;
            let plus_probs = probe.forward(input)?;
            *param_mut(&mut probe, l, param) = original - cfg.step;
            let minus_pattern = probe.relu_pattern(input)?;
            let minus_probs = probe.forward(input)?;
            *param_mut(&mut probe, l, param) = original;

            if plus_pattern != base_pattern
                || minus_pattern != base_pattern
                || clamped(&base_probs)
                || clamped(&plus_probs)
                || clamped(&minus_probs)
            {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (loss(&plus_probs, label) - loss(&minus_probs, label)) / (2.0 * cfg.step);
            if grad.abs().max(numeric.abs()) < floor {
                check.skipped_unresolved += 1;
                continue;
            }
            let err = relative_error(grad, numeric);
            check.max_relative_error = check.max_relative_error.max(err);
            check.checked += 1;
        }
        layers.push(check);
    }
    let max_relative_error = layers
        .iter()
        .map(|c| c.max_relative_error)
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        layers,
        max_relative_error,
    })
}
