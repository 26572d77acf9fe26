use super::model::{forward, loss_and_gradient, loss_l2, SampleTensors};
use super::params::{NetworkParams, TensorMut};
use crate::error::Result;

/// Comparison of one scalar parameter's analytic and numeric gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric| / max(|analytic|, |numeric|)`, 0 when both are
    /// below `1e-12`.
    pub relative_error: f64,
    /// The `±h` evaluations landed on different ReLU / max-pool pieces, so
    /// the central difference straddles a kink.
    pub crosses_kink: bool,
}

fn nth_mut(t: TensorMut<'_, f64>, i: usize) -> &mut f64 {
    match t {
        TensorMut::Matrix(m) => m.iter_mut().nth(i).expect("index in range"),
        TensorMut::Vector(v) => &mut v[i],
    }
}

/// Central-difference check of every parameter gradient of the squared
/// loss on one sample.
pub fn check_gradients(params: &NetworkParams<f64>, sample: &SampleTensors<f64>, h: f64) -> Result<Vec<GradientEntry>> {
    let mut grads = params.zeros_like();
    loss_and_gradient(params, sample, 1.0, &mut grads)?;
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.parameter_count());
    for (name, t) in grads.named_tensors() {
        for (index, analytic) in t.values().into_iter().enumerate() {
            let mut eval = |delta: f64| -> Result<(f64, Vec<u64>)> {
                let slot = nth_mut(work.tensor_mut(&name).expect("same layout"), index);
                let orig = *slot;
                *slot = orig + delta;
                let cache = forward(&work, sample);
                *nth_mut(work.tensor_mut(&name).expect("same layout"), index) = orig;
                let cache = cache?;
                Ok((loss_l2(cache.output, sample.target), cache.activation_pattern()))
            };
            let (up, pat_up) = eval(h)?;
            let (down, pat_down) = eval(-h)?;
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic.abs().max(numeric.abs());
            let relative_error = if scale < 1e-12 { 0.0 } else { (analytic - numeric).abs() / scale };
            out.push(GradientEntry {
                tensor: name.clone(),
                index,
                analytic,
                numeric,
                relative_error,
                crosses_kink: pat_up != pat_down,
            });
        }
    }
    Ok(out)
}
