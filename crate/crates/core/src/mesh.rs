//! Triangle mesh data model.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An indexed triangle mesh with cached face adjacency.
///
/// There is no manifold or watertight requirement. Edges shared by more than
/// two faces simply give each of those faces several neighbors across that
/// edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
    adjacency: Vec<Vec<u32>>,
}

impl Mesh {
    /// Validates indices and rejects faces with repeated vertices.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let count = vertices.len();
        for (f, tri) in faces.iter().enumerate() {
            for &v in tri {
                if v as usize >= count {
                    return Err(Error::IndexOutOfRange {
                        index: v as usize,
                        count,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateFace {
                    face: f,
                    vertices: *tri,
                });
            }
        }
        let adjacency = build_face_adjacency(&faces);
        Ok(Mesh {
            vertices,
            faces,
            adjacency,
        })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn neighbors(&self, face: usize) -> &[u32] {
        &self.adjacency[face]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Same connectivity, new coordinates. Adjacency is reused.
    pub fn with_vertices(&self, vertices: Vec<[f64; 3]>) -> Result<Mesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::shape(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Mesh {
            vertices,
            faces: self.faces.clone(),
            adjacency: self.adjacency.clone(),
        })
    }

    /// Vertices that appear in at least one face.
    pub fn referenced_vertices(&self) -> Vec<u32> {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.faces {
            for &v in tri {
                used[v as usize] = true;
            }
        }
        (0..self.vertices.len() as u32)
            .filter(|&v| used[v as usize])
            .collect()
    }

    pub fn referenced_vertex_count(&self) -> usize {
        self.referenced_vertices().len()
    }

    /// Number of distinct undirected edges.
    pub fn num_edges(&self) -> usize {
        let mut edges: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|t| face_edges(*t))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }
}

pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn face_edges(t: [u32; 3]) -> [(u32, u32); 3] {
    [
        edge_key(t[0], t[1]),
        edge_key(t[1], t[2]),
        edge_key(t[2], t[0]),
    ]
}

/// For every face, the sorted ids of the faces that share at least one
/// undirected edge with it.
pub fn build_face_adjacency(faces: &[[u32; 3]]) -> Vec<Vec<u32>> {
    let mut by_edge: HashMap<(u32, u32), Vec<u32>> = HashMap::with_capacity(faces.len() * 2);
    for (f, tri) in faces.iter().enumerate() {
        for e in face_edges(*tri) {
            by_edge.entry(e).or_default().push(f as u32);
        }
    }
    let mut adjacency = vec![Vec::new(); faces.len()];
    for sharers in by_edge.values() {
        for &f in sharers {
            for &g in sharers {
                if f != g {
                    adjacency[f as usize].push(g);
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    adjacency
}

/// Mean of a sequence computed as `first + mean(x - first)`, which returns the
/// input exactly when every element is identical.
pub(crate) fn shifted_mean3(points: impl Iterator<Item = [f64; 3]>) -> Option<[f64; 3]> {
    let mut first = None;
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for p in points {
        let f = *first.get_or_insert(p);
        for d in 0..3 {
            acc[d] += p[d] - f[d];
        }
        n += 1;
    }
    first.map(|f| {
        let n = n as f64;
        [f[0] + acc[0] / n, f[1] + acc[1] / n, f[2] + acc[2] / n]
    })
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Centers the vertices at their centroid and scales them so the largest
/// vertex norm is exactly 1.
pub fn normalize_unit_sphere(mesh: &Mesh) -> Result<Mesh> {
    let centroid = shifted_mean3(mesh.vertices.iter().copied())
        .ok_or_else(|| Error::Empty("mesh has no vertices".into()))?;
    let centered: Vec<[f64; 3]> = mesh
        .vertices
        .iter()
        .map(|v| [v[0] - centroid[0], v[1] - centroid[1], v[2] - centroid[2]])
        .collect();
    let radius = centered.iter().map(|v| norm3(*v)).fold(0.0, f64::max);
    if radius.is_nan() || radius <= 1e-300 || radius.is_infinite() {
        return Err(Error::DegenerateGeometry(
            "all vertices coincide, scale is undefined".into(),
        ));
    }
    let vertices = centered
        .into_iter()
        .map(|v| [v[0] / radius, v[1] / radius, v[2] / radius])
        .collect();
    mesh.with_vertices(vertices)
}

/// Ranges used by [`augment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub rotate: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            scale_min: 0.9,
            scale_max: 1.1,
            rotate: true,
        }
    }
}

pub type Rotation = [[f64; 3]; 3];

pub const IDENTITY_ROTATION: Rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Applies `v -> scale * R v` to every vertex.
pub fn apply_similarity(mesh: &Mesh, scale: f64, rotation: &Rotation) -> Mesh {
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            let mut out = [0.0; 3];
            for (r, o) in rotation.iter().zip(out.iter_mut()) {
                *o = scale * (r[0] * v[0] + r[1] * v[1] + r[2] * v[2]);
            }
            out
        })
        .collect();
    Mesh {
        vertices,
        faces: mesh.faces.clone(),
        adjacency: mesh.adjacency.clone(),
    }
}

/// Uniformly distributed rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (q.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if n < 1e-9 {
            continue;
        }
        let [w, x, y, z] = q.map(|c| c / n);
        return [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ];
    }
}

/// Random uniform scaling and random orientation, deterministic in `seed`.
pub fn augment(mesh: &Mesh, seed: u64, config: &AugmentConfig) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if config.scale_max > config.scale_min {
        rng.gen_range(config.scale_min..=config.scale_max)
    } else {
        config.scale_min
    };
    let rotation = if config.rotate {
        random_rotation(&mut rng)
    } else {
        IDENTITY_ROTATION
    };
    apply_similarity(mesh, scale, &rotation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> Mesh {
        Mesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn tetrahedron_adjacency() {
        let m = tetra();
        assert_eq!(m.neighbors(0), &[1, 2, 3]);
        for f in 0..4 {
            assert_eq!(m.neighbors(f).len(), 3);
        }
    }

    #[test]
    fn adjacency_of_pair_and_single() {
        assert_eq!(
            build_face_adjacency(&[[0, 1, 2], [2, 1, 3]]),
            vec![vec![1], vec![0]]
        );
        assert_eq!(build_face_adjacency(&[[0, 1, 2]]), vec![Vec::<u32>::new()]);
    }

    #[test]
    fn non_manifold_edge_lists_every_sharer() {
        let adj = build_face_adjacency(&[[0, 1, 2], [1, 0, 3], [0, 1, 4]]);
        assert_eq!(adj, vec![vec![1, 2], vec![0, 2], vec![0, 1]]);
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![[0.0; 3]; 3];
        assert!(matches!(
            Mesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        assert!(matches!(
            Mesh::new(v, vec![[0, 1, 1]]),
            Err(Error::DegenerateFace { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let m = Mesh::new(vec![[2.0, 0.0, 0.0], [-2.0, 0.0, 0.0]], vec![]).unwrap();
        let n = normalize_unit_sphere(&m).unwrap();
        assert_eq!(n.vertices(), &[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);

        let m = Mesh::new(vec![[0.0, 0.0, 0.0], [0.0, 0.0, 4.0]], vec![]).unwrap();
        let n = normalize_unit_sphere(&m).unwrap();
        assert_eq!(n.vertices(), &[[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn normalize_degenerate() {
        let m = Mesh::new(vec![[0.3, 0.1, 0.7]; 5], vec![]).unwrap();
        assert!(matches!(
            normalize_unit_sphere(&m),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn augment_identity_hook() {
        let m = tetra();
        assert_eq!(apply_similarity(&m, 1.0, &IDENTITY_ROTATION), m);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let r = random_rotation(&mut rng);
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12);
                }
            }
            let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
                - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
                + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
            assert!((det - 1.0).abs() < 1e-12);
        }
    }
}
