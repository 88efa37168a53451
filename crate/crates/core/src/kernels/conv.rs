//! Face convolution over local patches.
//!
//! For a face `f` with patch members `n_1..n_K`:
//!
//! ```text
//! out_f = W0 x_f + W1 sum_n x_n + W2 sum_n |x_f - x_n| + W3 sum_{i<j} |x_i - x_j| + b
//! ```
//!
//! `|.|` is elementwise. Members are always visited in ascending face id, so
//! the result does not depend on the order a patch lists them in.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::patch::Patch;
use super::xavier_uniform;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    /// `W0..W3`, each `fan_out x fan_in`.
    pub w: [Array2<f64>; 4],
    pub bias: Option<Array1<f64>>,
}

impl ConvWeights {
    pub fn zeros(fan_in: usize, fan_out: usize, bias: bool) -> Self {
        ConvWeights {
            w: std::array::from_fn(|_| Array2::zeros((fan_out, fan_in))),
            bias: bias.then(|| Array1::zeros(fan_out)),
        }
    }

    pub fn init<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, bias: bool, gain: f64) -> Self {
        ConvWeights {
            w: std::array::from_fn(|_| xavier_uniform(rng, fan_out, fan_in, gain)),
            bias: bias.then(|| Array1::zeros(fan_out)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out(), self.bias.is_some())
    }

    pub fn fan_in(&self) -> usize {
        self.w[0].ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.w[0].nrows()
    }
}

/// Patch members in ascending id, flattened.
struct Canonical {
    members: Vec<u32>,
    offsets: Vec<usize>,
}

impl Canonical {
    fn new(patches: &[Patch], faces: usize) -> Result<Self> {
        if patches.len() != faces {
            return Err(Error::shape(format!(
                "{} patches for {} faces",
                patches.len(),
                faces
            )));
        }
        let mut members = Vec::with_capacity(patches.len() * 6);
        let mut offsets = Vec::with_capacity(patches.len() + 1);
        offsets.push(0);
        for p in patches {
            let start = members.len();
            members.extend_from_slice(&p.members);
            members[start..].sort_unstable();
            if let Some(&last) = members.last() {
                if last as usize >= faces {
                    return Err(Error::shape(format!("patch member {last} out of range")));
                }
            }
            offsets.push(members.len());
        }
        Ok(Canonical { members, offsets })
    }

    fn of(&self, f: usize) -> &[u32] {
        &self.members[self.offsets[f]..self.offsets[f + 1]]
    }
}

#[inline]
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Values kept from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub input: Array2<f64>,
    /// Neighbor sum, center differences, pairwise differences.
    pub aggregates: [Array2<f64>; 3],
}

/// The three patch sums of the convolution, each `F x C`.
pub fn patch_aggregates(x: &Array2<f64>, patches: &[Patch]) -> Result<[Array2<f64>; 3]> {
    let canon = Canonical::new(patches, x.nrows())?;
    Ok(aggregate(x, &canon))
}

fn aggregate(x: &Array2<f64>, canon: &Canonical) -> [Array2<f64>; 3] {
    let (nf, c) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut s1 = vec![0.0; nf * c];
    let mut s2 = vec![0.0; nf * c];
    let mut s3 = vec![0.0; nf * c];
    for f in 0..nf {
        let m = canon.of(f);
        let xf = &xs[f * c..(f + 1) * c];
        let (o1, o2, o3) = (
            &mut s1[f * c..(f + 1) * c],
            &mut s2[f * c..(f + 1) * c],
            &mut s3[f * c..(f + 1) * c],
        );
        for (i, &ni) in m.iter().enumerate() {
            let xi = &xs[ni as usize * c..(ni as usize + 1) * c];
            for ch in 0..c {
                o1[ch] += xi[ch];
                o2[ch] += (xf[ch] - xi[ch]).abs();
            }
            for &nj in &m[i + 1..] {
                let xj = &xs[nj as usize * c..(nj as usize + 1) * c];
                for ch in 0..c {
                    o3[ch] += (xi[ch] - xj[ch]).abs();
                }
            }
        }
    }
    let shape = (nf, c);
    [
        Array2::from_shape_vec(shape, s1).unwrap(),
        Array2::from_shape_vec(shape, s2).unwrap(),
        Array2::from_shape_vec(shape, s3).unwrap(),
    ]
}

fn check_input(x: &Array2<f64>, weights: &ConvWeights) -> Result<()> {
    if x.ncols() != weights.fan_in() {
        return Err(Error::shape(format!(
            "conv expects {} input channels, got {}",
            weights.fan_in(),
            x.ncols()
        )));
    }
    Ok(())
}

pub fn forward(
    x: &Array2<f64>,
    patches: &[Patch],
    weights: &ConvWeights,
) -> Result<(Array2<f64>, ConvCache)> {
    check_input(x, weights)?;
    let canon = Canonical::new(patches, x.nrows())?;
    let aggregates = aggregate(x, &canon);
    let mut out = Array2::zeros((x.nrows(), weights.fan_out()));
    general_mat_mul(1.0, x, &weights.w[0].t(), 0.0, &mut out);
    for (a, w) in aggregates.iter().zip(&weights.w[1..]) {
        general_mat_mul(1.0, a, &w.t(), 1.0, &mut out);
    }
    if let Some(b) = &weights.bias {
        out += b;
    }
    Ok((
        out,
        ConvCache {
            input: x.clone(),
            aggregates,
        },
    ))
}

/// Forward pass without keeping a cache.
pub fn mesh_conv_forward(
    x: &Array2<f64>,
    patches: &[Patch],
    weights: &ConvWeights,
) -> Result<Array2<f64>> {
    forward(x, patches, weights).map(|(out, _)| out)
}

/// Returns the gradient with respect to the input features and the weight
/// gradients. `|d|` is differentiated as `sign(d)` with 0 at ties.
pub fn backward(
    cache: &ConvCache,
    patches: &[Patch],
    weights: &ConvWeights,
    upstream: &Array2<f64>,
) -> Result<(Array2<f64>, ConvWeights)> {
    let x = &cache.input;
    let (nf, c) = x.dim();
    if upstream.dim() != (nf, weights.fan_out()) {
        return Err(Error::shape(format!(
            "upstream gradient {:?}, expected {:?}",
            upstream.dim(),
            (nf, weights.fan_out())
        )));
    }
    let canon = Canonical::new(patches, nf)?;

    let mut grads = weights.zeros_like();
    let inputs = [x, &cache.aggregates[0], &cache.aggregates[1], &cache.aggregates[2]];
    for (gw, a) in grads.w.iter_mut().zip(inputs) {
        general_mat_mul(1.0, &upstream.t(), a, 0.0, gw);
    }
    if let Some(gb) = &mut grads.bias {
        *gb = upstream.sum_axis(Axis(0));
    }

    // gradients with respect to the center, sum, and difference inputs
    let g: Vec<Array2<f64>> = weights.w.iter().map(|w| upstream.dot(w)).collect();
    let mut gx = g[0].clone();
    {
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().unwrap();
        let g1 = g[1].as_slice().unwrap();
        let g2 = g[2].as_slice().unwrap();
        let g3 = g[3].as_slice().unwrap();
        let gxs = gx.as_slice_mut().unwrap();
        for f in 0..nf {
            let m = canon.of(f);
            let fr = f * c..(f + 1) * c;
            for (i, &ni) in m.iter().enumerate() {
                let ni = ni as usize;
                for ch in 0..c {
                    let s = sign(xs[f * c + ch] - xs[ni * c + ch]);
                    let d2 = g2[fr.start + ch] * s;
                    gxs[ni * c + ch] += g1[fr.start + ch] - d2;
                    gxs[f * c + ch] += d2;
                }
                for &nj in &m[i + 1..] {
                    let nj = nj as usize;
                    for ch in 0..c {
                        let s = sign(xs[ni * c + ch] - xs[nj * c + ch]);
                        let d3 = g3[fr.start + ch] * s;
                        gxs[ni * c + ch] += d3;
                        gxs[nj * c + ch] -= d3;
                    }
                }
            }
        }
    }
    Ok((gx, grads))
}
