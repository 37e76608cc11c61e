//! Finite-difference gradient checking.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Grads, Mode, Model, Targets};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest relative deviation between analytic and numeric gradients.
    pub max_rel: f64,
    /// Number of parameters compared.
    pub checked: usize,
    /// Layer, tensor (0 weights, 1 biases, 2 bn scale, 3 bn shift), entry,
    /// analytic and numeric value of the largest deviation.
    pub worst: Option<(usize, usize, usize, f64, f64)>,
    /// Largest analytic gradient of a bias that batch norm cancels. These
    /// are exactly zero in theory and are not compared against differences,
    /// which only measure roundoff there.
    pub max_inert: f64,
}

fn total_loss(model: &mut Model, net: usize, x: &[f64], n: usize, targets: &Targets) -> f64 {
    let active = model.active[net].clone();
    let outs = model.outputs[net].clone();
    let pass = model.forward(&active, x, n, Mode::Check, &mut idle_rngs(model));
    model.loss(&pass, &outs, targets).0.iter().map(|m| m.cost).sum()
}

/// Check mode draws nothing, but the forward pass wants one stream per layer.
fn idle_rngs(model: &Model) -> Vec<ChaCha8Rng> {
    vec![ChaCha8Rng::seed_from_u64(0); model.ids.len()]
}

fn slot<'a>(model: &'a mut Model, g: usize, which: usize) -> &'a mut Vec<f64> {
    let p = model.params[g].as_mut().expect("weighted layer");
    match which {
        0 => &mut p.w.data,
        1 => &mut p.b.data,
        2 => &mut p.bn.as_mut().expect("bn").gamma.data,
        _ => &mut p.bn.as_mut().expect("bn").beta.data,
    }
}

/// Compares back-propagated gradients of network `net` with central
/// differences of step `h`, for every weight, bias and batch-norm scale and
/// shift, except biases feeding batch norm. The relative deviation is `|a - b| / max(|a|, |b|, floor)`.
/// Tensors longer than `per_tensor` are checked at that many evenly spaced
/// entries.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    model: &mut Model,
    net: usize,
    x: &[f64],
    n: usize,
    targets: &Targets,
    h: f64,
    floor: f64,
    per_tensor: usize,
) -> GradCheck {
    let active = model.active[net].clone();
    let outs = model.outputs[net].clone();
    let pass = model.forward(&active, x, n, Mode::Check, &mut idle_rngs(model));
    let (_, dout) = model.loss(&pass, &outs, targets);
    let grads = model.backward(&pass, &active, &outs, dout);
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let mut worst = None;
    let mut max_inert: f64 = 0.0;
    for (g, lg) in grads.iter().enumerate() {
        let Some(lg) = lg else { continue };
        let Grads { w, b, gamma, beta } = lg;
        for (which, analytic) in [w, b, gamma, beta].into_iter().enumerate() {
            if which == 1 && model.hyper[g].bn && !gamma.is_empty() {
                max_inert = analytic.iter().fold(max_inert, |m, a| m.max(a.abs()));
                continue;
            }
            let stride = analytic.len().div_ceil(per_tensor.max(1)).max(1);
            for (i, &a) in analytic.iter().enumerate().step_by(stride) {
                let orig = slot(model, g, which)[i];
                slot(model, g, which)[i] = orig + h;
                let up = total_loss(model, net, x, n, targets);
                slot(model, g, which)[i] = orig - h;
                let down = total_loss(model, net, x, n, targets);
                slot(model, g, which)[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
                if rel > max_rel || worst.is_none() {
                    max_rel = rel;
                    worst = Some((g, which, i, a, numeric));
                }
                checked += 1;
            }
        }
    }
    GradCheck { max_rel, checked, worst, max_inert }
}
