//! Reconstruction quality metrics.
//!
//! - Chamfer distance: `mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2` over
//!   vertex sets.
//! - Normal error: each reconstructed face is matched to the reference face
//!   with the nearest centroid; the score is the mean of `1 - |cos|` between
//!   their unit normals, so winding does not matter.
//! - Curvature preservation: mean absolute difference of the per-vertex
//!   angle deficit (`2pi - sum of angles`, `pi - sum` on the border).

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mesh::edge_key;
use crate::{Error, Mesh, Result};

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

/// Uniform grid over a point set for exact nearest-neighbor queries.
pub struct PointGrid<'a> {
    points: &'a [[f64; 3]],
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    /// Point ids bucketed by cell, `starts` indexes into `ids`.
    starts: Vec<usize>,
    ids: Vec<u32>,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("nearest-neighbor search over an empty point set".into()));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let longest = extent.iter().cloned().fold(0.0, f64::max);
        // about two points per cell on a surface-like set
        let target = (points.len() as f64 / 2.0).max(1.0);
        let mut cell = longest / target.sqrt();
        if !(cell > 0.0 && cell.is_finite()) {
            cell = 1.0;
        }
        let dims_for = |cell: f64| extent.map(|e| (e / cell).floor() as usize + 1);
        let mut dims = dims_for(cell);
        while dims.iter().product::<usize>() > 4 * points.len() + 8 {
            cell *= 1.5;
            dims = dims_for(cell);
        }
        let mut grid = PointGrid {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            ids: Vec::new(),
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncells + 1];
        let keys: Vec<usize> = points.iter().map(|&p| grid.key(grid.cell_of(p))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut ids = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            ids[fill[k]] = i as u32;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.ids = ids;
        Ok(grid)
    }

    fn cell_of(&self, p: [f64; 3]) -> [usize; 3] {
        std::array::from_fn(|d| {
            let c = ((p[d] - self.origin[d]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[d] - 1)
        })
    }

    fn key(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Index and squared distance of the nearest point; ties go to the
    /// lowest index.
    pub fn nearest(&self, q: [f64; 3]) -> (u32, f64) {
        let c = self.cell_of(q);
        let mut best = (u32::MAX, f64::INFINITY);
        let max_ring = self.dims.iter().copied().max().unwrap();
        for r in 0..=max_ring {
            let lo: [usize; 3] = std::array::from_fn(|d| c[d].saturating_sub(r));
            let hi: [usize; 3] = std::array::from_fn(|d| (c[d] + r).min(self.dims[d] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let ring = [x.abs_diff(c[0]), y.abs_diff(c[1]), z.abs_diff(c[2])]
                            .into_iter()
                            .max()
                            .unwrap();
                        if ring != r {
                            continue;
                        }
                        let k = self.key([x, y, z]);
                        for &i in &self.ids[self.starts[k]..self.starts[k + 1]] {
                            let d = dist2(q, self.points[i as usize]);
                            if d < best.1 || (d == best.1 && i < best.0) {
                                best = (i, d);
                            }
                        }
                    }
                }
            }
            // anything outside rings 0..=r lies at least r cells away
            let reach = r as f64 * self.cell;
            if best.1 < reach * reach {
                break;
            }
        }
        best
    }
}

fn mean_nearest(from: &[[f64; 3]], to: &PointGrid) -> f64 {
    from.iter().map(|&p| to.nearest(p).1).sum::<f64>() / from.len() as f64
}

pub fn chamfer_distance(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    let ga = PointGrid::new(a)?;
    let gb = PointGrid::new(b)?;
    Ok(mean_nearest(a, &gb) + mean_nearest(b, &ga))
}

fn face_geometry(mesh: &Mesh) -> Vec<([f64; 3], Option<[f64; 3]>)> {
    mesh.faces()
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| mesh.vertices()[v as usize]);
            let centroid = std::array::from_fn(|d| (a[d] + b[d] + c[d]) / 3.0);
            let n = cross(sub(b, a), sub(c, a));
            let len2 = dot(n, n);
            (centroid, (len2 > 0.0 && len2.is_finite()).then_some(n))
        })
        .collect()
}

pub fn normal_error(reference: &Mesh, reconstruction: &Mesh) -> Result<f64> {
    let refs: Vec<([f64; 3], [f64; 3])> = face_geometry(reference)
        .into_iter()
        .filter_map(|(c, n)| n.map(|n| (c, n)))
        .collect();
    if refs.is_empty() {
        return Err(Error::DegenerateGeometry("reference mesh has no face with positive area".into()));
    }
    let centroids: Vec<[f64; 3]> = refs.iter().map(|r| r.0).collect();
    let grid = PointGrid::new(&centroids)?;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut skipped = 0usize;
    for (c, n) in face_geometry(reconstruction) {
        let Some(n) = n else {
            skipped += 1;
            continue;
        };
        let (i, _) = grid.nearest(c);
        // the angle between the lines, from the unnormalized normals, so
        // parallel normals give exactly zero
        let m = refs[i as usize].1;
        let c = cross(n, m);
        let angle = dot(c, c).sqrt().atan2(dot(n, m).abs());
        total += 1.0 - angle.cos();
        count += 1;
    }
    if skipped > 0 {
        log::warn!("normal error skipped {skipped} zero-area faces");
    }
    if count == 0 {
        return Err(Error::DegenerateGeometry(
            "reconstruction has no face with positive area".into(),
        ));
    }
    Ok(total / count as f64)
}

fn corner_angle(p: [f64; 3], q: [f64; 3], r: [f64; 3]) -> f64 {
    let u = sub(q, p);
    let v = sub(r, p);
    let c = cross(u, v);
    dot(c, c).sqrt().atan2(dot(u, v))
}

/// Angle deficit per vertex; `None` for vertices no face uses.
pub fn angle_deficits(mesh: &Mesh) -> Vec<Option<f64>> {
    let n = mesh.num_vertices();
    let mut sums = vec![0.0; n];
    let mut used = vec![false; n];
    let mut edge_faces: HashMap<(u32, u32), u32> = HashMap::new();
    for t in mesh.faces() {
        let p = t.map(|v| mesh.vertices()[v as usize]);
        for k in 0..3 {
            let (i, j, l) = (k, (k + 1) % 3, (k + 2) % 3);
            sums[t[i] as usize] += corner_angle(p[i], p[j], p[l]);
            used[t[i] as usize] = true;
            *edge_faces.entry(edge_key(t[i], t[j])).or_insert(0) += 1;
        }
    }
    let mut boundary = vec![false; n];
    for (&(a, b), &count) in &edge_faces {
        if count == 1 {
            boundary[a as usize] = true;
            boundary[b as usize] = true;
        }
    }
    (0..n)
        .map(|v| {
            used[v].then(|| if boundary[v] { PI - sums[v] } else { 2.0 * PI - sums[v] })
        })
        .collect()
}

pub fn curvature_preservation(reference: &Mesh, reconstruction: &Mesh) -> Result<f64> {
    if reference.num_vertices() != reconstruction.num_vertices() {
        return Err(Error::shape(format!(
            "curvature comparison needs matching vertices, got {} and {}",
            reference.num_vertices(),
            reconstruction.num_vertices()
        )));
    }
    let a = angle_deficits(reference);
    let b = angle_deficits(reconstruction);
    let diffs: Vec<f64> = a
        .iter()
        .zip(&b)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs()))
        .collect();
    if diffs.is_empty() {
        return Err(Error::Empty("no vertex is used by both meshes".into()));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub cd: f64,
    pub ne: f64,
    pub cp: f64,
}

impl MetricValues {
    pub fn compare(reference: &Mesh, reconstruction: &Mesh) -> Result<Self> {
        Ok(MetricValues {
            cd: chamfer_distance(reference.vertices(), reconstruction.vertices())?,
            ne: normal_error(reference, reconstruction)?,
            cp: curvature_preservation(reference, reconstruction)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshMetrics {
    pub path: String,
    pub cd: f64,
    pub ne: f64,
    pub cp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub meshes: Vec<MeshMetrics>,
    pub mean: MetricValues,
    pub count: usize,
}

impl MetricReport {
    pub fn from_rows(meshes: Vec<MeshMetrics>) -> Self {
        let n = meshes.len().max(1) as f64;
        let sum = |f: fn(&MeshMetrics) -> f64| meshes.iter().map(f).sum::<f64>() / n;
        let mean = MetricValues {
            cd: sum(|m| m.cd),
            ne: sum(|m| m.ne),
            cp: sum(|m| m.cp),
        };
        MetricReport {
            count: meshes.len(),
            meshes,
            mean,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.meshes {
            out.push_str(&format!("{} cd={:.6e} ne={:.6e} cp={:.6e}\n", m.path, m.cd, m.ne, m.cp));
        }
        out.push_str(&format!(
            "mean over {} meshes: cd={:.6e} ne={:.6e} cp={:.6e}\n",
            self.count, self.mean.cd, self.mean.ne, self.mean.cp
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
