use ndarray::Array2;

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Masks `upstream` by the positivity of the forward output.
pub fn relu_backward(output: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
    let mut g = upstream.clone();
    g.zip_mut_with(output, |g, &y| {
        if y <= 0.0 {
            *g = 0.0;
        }
    });
    g
}
