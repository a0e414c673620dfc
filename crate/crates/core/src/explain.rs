//! Grad-CAM heatmaps for the classification branch.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::net::{Fusion, MetaNet};

pub const LABEL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub series_id: String,
    pub method_index: usize,
    /// One value per input time step, in `[0, 1]`.
    pub values: Vec<f64>,
}

fn check_trained(net: &MetaNet) -> Result<()> {
    if net.params().iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(Error::UntrainedModel)
    }
}

/// `label_j = 1` iff the predicted class probability is at least `threshold`.
pub fn predict_labels(net: &MetaNet, input: &[f64], threshold: f64) -> Result<Vec<u8>> {
    check_trained(net)?;
    let out = net.forward(&[input], Fusion::MultiTask)?.remove(0);
    Ok(out.o_cls.iter().map(|&p| u8::from(p >= threshold)).collect())
}

/// Pre-sigmoid classification score of `method`.
pub fn class_logit(net: &MetaNet, input: &[f64], method: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let g = net.forward_tape(&mut tape, &[input], Fusion::MultiTask)?;
    let m = tape.value(g.cls_logits).len();
    if method >= m {
        return Err(Error::InvalidArgument(alloc::format!("method {method} out of {m}")));
    }
    Ok(tape.value(g.cls_logits).data()[method])
}

/// Grad-CAM of the logit for `method` over the last conv block of the
/// classification branch, min-max normalized to `[0, 1]`.
pub fn gradcam(net: &MetaNet, input: &[f64], method: usize) -> Result<Heatmap> {
    check_trained(net)?;
    let mut tape = Tape::new();
    let g = net.forward_tape(&mut tape, &[input], Fusion::MultiTask)?;
    let col = tape.column(g.cls_logits, method)?;
    let score = tape.sum(col);
    let grads = tape.backward(score)?;
    let maps = tape.value(g.cls_maps);
    let (_, len, channels) = maps.dims3("feature maps")?;
    let values = match grads.get(g.cls_maps) {
        None => vec![0.0; len],
        Some(dmaps) => {
            let mut weights = vec![0.0; channels];
            for t in 0..len {
                for (w, d) in weights.iter_mut().zip(&dmaps.data()[t * channels..(t + 1) * channels]) {
                    *w += d / len as f64;
                }
            }
            let raw: Vec<f64> = (0..len)
                .map(|t| {
                    let a = &maps.data()[t * channels..(t + 1) * channels];
                    crate::tensor::dot(&weights, a).max(0.0)
                })
                .collect();
            normalize(&raw)
        }
    };
    debug_assert_eq!(values.len(), net.config().input_len);
    Ok(Heatmap {
        series_id: String::new(),
        method_index: method,
        values,
    })
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let hi = raw.iter().copied().fold(0.0, f64::max);
    if hi <= 0.0 {
        return vec![0.0; raw.len()];
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == lo {
        return vec![1.0; raw.len()];
    }
    raw.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// Indices of the `ceil(fraction·L)` largest (`top = true`) or smallest
/// heatmap values, lowest index first among ties.
pub fn decile_region(values: &[f64], fraction: f64, top: bool) -> Vec<usize> {
    let n = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        if top { ord.reverse() } else { ord }.then(a.cmp(&b))
    });
    idx.truncate(n);
    idx
}
