use crate::{Error, Result};

/// Mean over all `3V` coordinates of the squared difference, and its gradient
/// `2 (p - t) / 3V` with respect to the prediction.
pub fn mse_loss(predicted: &[[f64; 3]], target: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
    if predicted.len() != target.len() {
        return Err(Error::shape(format!(
            "mse: {} predicted vertices vs {} target vertices",
            predicted.len(),
            target.len()
        )));
    }
    if predicted.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = (3 * predicted.len()) as f64;
    let mut sum = 0.0;
    let grad = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let mut g = [0.0; 3];
            for d in 0..3 {
                let diff = p[d] - t[d];
                sum += diff * diff;
                g[d] = 2.0 * diff / n;
            }
            g
        })
        .collect();
    Ok((sum / n, grad))
}
