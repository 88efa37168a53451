//! Per-face 9D geometric features and vertex reconstruction.
//!
//! Row `f` of a feature matrix holds the coordinates of face `f`'s three
//! vertex slots in face-matrix column order. Reconstruction averages, for
//! each vertex, every slot triple that refers to it.

use ndarray::Array2;

use crate::{Error, Mesh, Result};

pub const GEOM_CHANNELS: usize = 9;

pub fn extract_geom_features(mesh: &Mesh) -> Array2<f64> {
    gather_features(mesh.vertices(), mesh.faces())
}

/// Face rows built from an arbitrary vertex array.
pub fn gather_features(vertices: &[[f64; 3]], faces: &[[u32; 3]]) -> Array2<f64> {
    let mut out = Array2::zeros((faces.len(), GEOM_CHANNELS));
    for (i, f) in faces.iter().enumerate() {
        for (k, &v) in f.iter().enumerate() {
            let p = vertices[v as usize];
            for d in 0..3 {
                out[[i, 3 * k + d]] = p[d];
            }
        }
    }
    out
}

/// Adjoint of [`gather_features`]: scatters row gradients back onto vertices.
pub fn gather_backward(grad: &Array2<f64>, faces: &[[u32; 3]], vertex_count: usize) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; vertex_count];
    for (i, f) in faces.iter().enumerate() {
        for (k, &v) in f.iter().enumerate() {
            for d in 0..3 {
                out[v as usize][d] += grad[[i, 3 * k + d]];
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub vertices: Vec<[f64; 3]>,
    /// Vertices no face refers to; they are left at the origin.
    pub unreferenced: Vec<u32>,
}

fn check(features: &Array2<f64>, faces: &[[u32; 3]], vertex_count: usize) -> Result<()> {
    if features.dim() != (faces.len(), GEOM_CHANNELS) {
        return Err(Error::shape(format!(
            "expected {}x{GEOM_CHANNELS} geometric features, got {:?}",
            faces.len(),
            features.dim()
        )));
    }
    if let Some(&v) = faces.iter().flatten().find(|&&v| v as usize >= vertex_count) {
        return Err(Error::IndexOutOfRange {
            index: v as usize,
            count: vertex_count,
        });
    }
    Ok(())
}

fn reference_counts(faces: &[[u32; 3]], vertex_count: usize) -> Vec<u32> {
    let mut counts = vec![0u32; vertex_count];
    for &v in faces.iter().flatten() {
        counts[v as usize] += 1;
    }
    counts
}

/// Per-vertex mean of all slot triples, accumulated in ascending
/// `(face, slot)` order relative to the first contribution so that identical
/// contributions reproduce their value exactly.
pub fn reconstruct_vertices(
    features: &Array2<f64>,
    faces: &[[u32; 3]],
    vertex_count: usize,
) -> Result<Reconstruction> {
    check(features, faces, vertex_count)?;
    let counts = reference_counts(faces, vertex_count);
    let mut first: Vec<Option<[f64; 3]>> = vec![None; vertex_count];
    let mut acc = vec![[0.0; 3]; vertex_count];
    for (i, f) in faces.iter().enumerate() {
        for (k, &v) in f.iter().enumerate() {
            let p = [
                features[[i, 3 * k]],
                features[[i, 3 * k + 1]],
                features[[i, 3 * k + 2]],
            ];
            let base = *first[v as usize].get_or_insert(p);
            for d in 0..3 {
                acc[v as usize][d] += p[d] - base[d];
            }
        }
    }
    let mut unreferenced = Vec::new();
    let vertices = (0..vertex_count)
        .map(|v| match first[v] {
            Some(b) => {
                let n = counts[v] as f64;
                [b[0] + acc[v][0] / n, b[1] + acc[v][1] / n, b[2] + acc[v][2] / n]
            }
            None => {
                unreferenced.push(v as u32);
                [0.0; 3]
            }
        })
        .collect();
    Ok(Reconstruction {
        vertices,
        unreferenced,
    })
}

/// Gradient of [`reconstruct_vertices`] with respect to its features.
pub fn reconstruct_backward(
    grad_vertices: &[[f64; 3]],
    faces: &[[u32; 3]],
    vertex_count: usize,
) -> Result<Array2<f64>> {
    if grad_vertices.len() != vertex_count {
        return Err(Error::shape(format!(
            "{} vertex gradients for {vertex_count} vertices",
            grad_vertices.len()
        )));
    }
    let counts = reference_counts(faces, vertex_count);
    let mut out = Array2::zeros((faces.len(), GEOM_CHANNELS));
    for (i, f) in faces.iter().enumerate() {
        for (k, &v) in f.iter().enumerate() {
            let inv = 1.0 / counts[v as usize] as f64;
            for d in 0..3 {
                out[[i, 3 * k + d]] = grad_vertices[v as usize][d] * inv;
            }
        }
    }
    Ok(out)
}
