//! Procedural meshes: platonic solids, spheres, tori, bordered grids and a few
//! non-manifold configurations. Used by tests and the CLI self-check.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mesh::edge_key;
use crate::Mesh;

fn build(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Mesh {
    Mesh::new(vertices, faces).expect("procedural mesh is valid")
}

pub fn tetrahedron() -> Mesh {
    build(
        vec![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ],
        vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]],
    )
}

pub fn octahedron() -> Mesh {
    build(
        vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ],
        vec![
            [4, 0, 2],
            [4, 2, 1],
            [4, 1, 3],
            [4, 3, 0],
            [5, 2, 0],
            [5, 1, 2],
            [5, 3, 1],
            [5, 0, 3],
        ],
    )
}

pub fn icosahedron() -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let vertices = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    build(vertices, faces)
}

/// Loop-style 1-to-4 subdivision of the icosahedron, projected to the unit
/// sphere. Level `n` has `20 * 4^n` faces.
pub fn icosphere(level: usize) -> Mesh {
    let base = icosahedron();
    let mut vertices: Vec<[f64; 3]> = base.vertices().iter().map(|v| unit(*v)).collect();
    let mut faces = base.faces().to_vec();
    for _ in 0..level {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let mut midpoint = |i: u32, j: u32| -> u32 {
                *mid.entry(edge_key(i, j)).or_insert_with(|| {
                    let p = vertices[i as usize];
                    let q = vertices[j as usize];
                    vertices.push(unit([
                        (p[0] + q[0]) / 2.0,
                        (p[1] + q[1]) / 2.0,
                        (p[2] + q[2]) / 2.0,
                    ]));
                    (vertices.len() - 1) as u32
                })
            };
            let ab = midpoint(a, b);
            let bc = midpoint(b, c);
            let ca = midpoint(c, a);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(vertices, faces)
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Latitude/longitude sphere with poles: `2 + lon * lat` vertices and
/// `2 * lon * lat` faces. `lon = 25, lat = 10` gives the 500-face size.
pub fn uv_sphere(lon: usize, lat: usize) -> Mesh {
    assert!(lon >= 3 && lat >= 1);
    let mut vertices = vec![[0.0, 0.0, 1.0]];
    for r in 0..lat {
        let phi = PI * (r + 1) as f64 / (lat + 1) as f64;
        for j in 0..lon {
            let theta = 2.0 * PI * j as f64 / lon as f64;
            vertices.push([phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()]);
        }
    }
    vertices.push([0.0, 0.0, -1.0]);
    let south = (vertices.len() - 1) as u32;
    let ring = |r: usize, j: usize| (1 + r * lon + j % lon) as u32;
    let mut faces = Vec::with_capacity(2 * lon * lat);
    for j in 0..lon {
        faces.push([0, ring(0, j), ring(0, j + 1)]);
    }
    for r in 0..lat - 1 {
        for j in 0..lon {
            faces.push([ring(r, j), ring(r + 1, j), ring(r + 1, j + 1)]);
            faces.push([ring(r, j), ring(r + 1, j + 1), ring(r, j + 1)]);
        }
    }
    for j in 0..lon {
        faces.push([south, ring(lat - 1, j + 1), ring(lat - 1, j)]);
    }
    build(vertices, faces)
}

/// Genus-one torus with `2 * major * minor` faces.
pub fn torus(major: usize, minor: usize, big_r: f64, small_r: f64) -> Mesh {
    assert!(major >= 3 && minor >= 3);
    let mut vertices = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = 2.0 * PI * i as f64 / major as f64;
        for j in 0..minor {
            let v = 2.0 * PI * j as f64 / minor as f64;
            let r = big_r + small_r * v.cos();
            vertices.push([r * u.cos(), r * u.sin(), small_r * v.sin()]);
        }
    }
    let idx = |i: usize, j: usize| ((i % major) * minor + j % minor) as u32;
    let mut faces = Vec::with_capacity(2 * major * minor);
    for i in 0..major {
        for j in 0..minor {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build(vertices, faces)
}

/// Open height-field patch with a boundary: `(nx+1)(ny+1)` vertices,
/// `2 * nx * ny` faces.
pub fn grid(nx: usize, ny: usize) -> Mesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            let x = i as f64 / nx as f64 - 0.5;
            let y = j as f64 / ny as f64 - 0.5;
            let z = 0.2 * (3.0 * x).sin() * (2.0 * y).cos();
            vertices.push([x, y, z]);
        }
    }
    let idx = |i: usize, j: usize| (i * (ny + 1) + j) as u32;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build(vertices, faces)
}

/// A strip of `2 * quads` triangles whose adjacency is a simple chain
/// `0 - 1 - 2 - ...`.
pub fn strip(quads: usize) -> Mesh {
    let mut vertices = Vec::new();
    for i in 0..=quads {
        vertices.push([i as f64, 1.0, 0.0]);
        vertices.push([i as f64, 0.0, 0.0]);
    }
    let mut faces = Vec::new();
    for i in 0..quads as u32 {
        let (t0, b0, t1, b1) = (2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3);
        faces.push([t0, b0, t1]);
        faces.push([b0, b1, t1]);
    }
    build(vertices, faces)
}

/// `pages` grid sheets hinged on one shared spine, so every spine edge is
/// shared by `pages` faces (non-manifold when `pages > 2`).
pub fn book(pages: usize, along: usize, out: usize) -> Mesh {
    let mut vertices = Vec::new();
    for i in 0..=along {
        vertices.push([i as f64 / along as f64, 0.0, 0.0]);
    }
    let mut faces = Vec::new();
    for p in 0..pages {
        let angle = 2.0 * PI * p as f64 / pages as f64;
        let start = vertices.len() as u32;
        for i in 0..=along {
            for j in 1..=out {
                let r = j as f64 / out as f64 * 0.6;
                vertices.push([i as f64 / along as f64, r * angle.cos(), r * angle.sin()]);
            }
        }
        let idx = |i: usize, j: usize| -> u32 {
            if j == 0 {
                i as u32
            } else {
                start + (i * out + j - 1) as u32
            }
        };
        for i in 0..along {
            for j in 0..out {
                faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
    }
    build(vertices, faces)
}

/// Two meshes sharing a single vertex (a non-manifold pinch point).
pub fn pinched(a: &Mesh, b: &Mesh) -> Mesh {
    let mut vertices = a.vertices().to_vec();
    let offset = vertices.len() as u32 - 1;
    // b's vertex 0 is glued onto a's last vertex
    let anchor = *a.vertices().last().expect("non-empty mesh");
    let shift = {
        let b0 = b.vertices()[0];
        [anchor[0] - b0[0], anchor[1] - b0[1], anchor[2] - b0[2]]
    };
    for v in &b.vertices()[1..] {
        vertices.push([v[0] + shift[0], v[1] + shift[1], v[2] + shift[2]]);
    }
    let map = |v: u32| if v == 0 { offset } else { offset + v };
    let mut faces = a.faces().to_vec();
    faces.extend(b.faces().iter().map(|t| [map(t[0]), map(t[1]), map(t[2])]));
    build(vertices, faces)
}

/// Adds isotropic Gaussian noise of standard deviation `sigma` to every vertex.
pub fn perturb(mesh: &Mesh, sigma: f64, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = mesh
        .vertices()
        .iter()
        .map(|v| {
            let mut out = *v;
            for c in &mut out {
                let n: f64 = rng.sample(StandardNormal);
                *c += sigma * n;
            }
            out
        })
        .collect();
    mesh.with_vertices(vertices).expect("same vertex count")
}

/// Random edge flips on a consistently oriented manifold mesh. Keeps the face
/// count and vertex count, changes connectivity. Flips that would duplicate an
/// edge or drop a vertex below valence 4 are skipped.
pub fn random_flips(mesh: &Mesh, attempts: usize, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut faces = mesh.faces().to_vec();
    let nv = mesh.num_vertices();
    for _ in 0..attempts {
        let f = rng.gen_range(0..faces.len());
        let k = rng.gen_range(0..3);
        let (a, b, c) = (faces[f][k], faces[f][(k + 1) % 3], faces[f][(k + 2) % 3]);
        // find the face holding the directed edge b -> a
        let Some(g) = (0..faces.len()).find(|&g| {
            g != f && (0..3).any(|i| faces[g][i] == b && faces[g][(i + 1) % 3] == a)
        }) else {
            continue;
        };
        let d = *faces[g].iter().find(|&&v| v != a && v != b).unwrap();
        if d == c {
            continue;
        }
        let mut edges: HashSet<(u32, u32)> = HashSet::new();
        let mut valence = vec![0usize; nv];
        for t in &faces {
            for i in 0..3 {
                edges.insert(edge_key(t[i], t[(i + 1) % 3]));
            }
        }
        for &(p, q) in &edges {
            valence[p as usize] += 1;
            valence[q as usize] += 1;
        }
        let sharers = faces
            .iter()
            .filter(|t| t.contains(&a) && t.contains(&b))
            .count();
        if sharers != 2
            || edges.contains(&edge_key(c, d))
            || valence[a as usize] <= 4
            || valence[b as usize] <= 4
        {
            continue;
        }
        faces[f] = [a, d, c];
        faces[g] = [d, b, c];
    }
    build(mesh.vertices().to_vec(), faces)
}
