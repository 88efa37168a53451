#![allow(dead_code)]

pub mod grad;

use meshcodec::kernels::BnMode;
use meshcodec::model::Model;
use meshcodec::pool::PoolRecordStack;
use meshcodec::{shapes, Mesh};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| r.gen_range(-1.0..1.0))
}

pub fn closed_corpus() -> Vec<(String, Mesh)> {
    let mut out = vec![
        ("tetrahedron".to_string(), shapes::tetrahedron()),
        ("octahedron".to_string(), shapes::octahedron()),
        ("icosahedron".to_string(), shapes::icosahedron()),
    ];
    for level in 1..=3 {
        out.push((format!("icosphere{level}"), shapes::icosphere(level)));
    }
    for (lon, lat) in [(6, 4), (10, 6), (16, 8), (25, 10)] {
        out.push((format!("uv{lon}x{lat}"), shapes::uv_sphere(lon, lat)));
    }
    for (a, b) in [(8, 5), (12, 6), (20, 8), (25, 10)] {
        out.push((format!("torus{a}x{b}"), shapes::torus(a, b, 1.0, 0.35)));
    }
    for seed in 0..12 {
        let base = if seed % 2 == 0 { shapes::icosphere(2) } else { shapes::uv_sphere(14, 7) };
        let m = shapes::random_flips(&base, 30 + 10 * seed as usize, seed);
        out.push((format!("flips{seed}"), shapes::perturb(&m, 0.02, seed)));
    }
    out
}

pub fn bordered_corpus() -> Vec<(String, Mesh)> {
    let mut out = Vec::new();
    for (nx, ny) in [(1, 1), (2, 1), (3, 3), (5, 4), (8, 6), (12, 10)] {
        out.push((format!("grid{nx}x{ny}"), shapes::grid(nx, ny)));
    }
    for q in [1, 3, 9, 20] {
        out.push((format!("strip{q}"), shapes::strip(q)));
    }
    out.push(("open_book".to_string(), shapes::book(2, 3, 3)));
    for seed in 0..6 {
        let m = shapes::random_flips(&shapes::grid(9, 7), 25, 100 + seed);
        out.push((format!("gridflips{seed}"), shapes::perturb(&m, 0.03, seed)));
    }
    out
}

pub fn non_manifold_corpus() -> Vec<(String, Mesh)> {
    let mut out = Vec::new();
    for (pages, along, outward) in [(3, 1, 1), (3, 4, 2), (4, 6, 3), (5, 8, 4)] {
        out.push((format!("book{pages}p{along}x{outward}"), shapes::book(pages, along, outward)));
    }
    out.push((
        "pinched_octa".to_string(),
        shapes::pinched(&shapes::octahedron(), &shapes::octahedron()),
    ));
    out.push((
        "pinched_ico_sphere".to_string(),
        shapes::pinched(&shapes::icosphere(2), &shapes::icosahedron()),
    ));
    out.push((
        "pinched_torus_grid".to_string(),
        shapes::pinched(&shapes::torus(12, 6, 1.0, 0.3), &shapes::uv_sphere(8, 5)),
    ));
    out.push((
        "pinched_grid_strip".to_string(),
        shapes::pinched(&shapes::grid(4, 4), &shapes::strip(5)),
    ));
    out
}

pub fn corpus() -> Vec<(String, Mesh)> {
    let mut all = closed_corpus();
    all.extend(bordered_corpus());
    all.extend(non_manifold_corpus());
    all
}

/// Train-mode batch loss of `model`.
pub fn batch_loss(model: &Model, meshes: &[Mesh], frozen: Option<&[PoolRecordStack]>) -> f64 {
    model.forward_batch(meshes, BnMode::Train, frozen).unwrap().loss
}

/// Worst relative error between the analytic model gradient and central
/// differences, probing `per_tensor` random entries of every parameter.
///
/// ReLU and the `|a - b|` patch terms have kinks; a probe whose left and right
/// one-sided slopes disagree straddles one and is skipped. Returns the worst
/// error, where it occurred, and the number of probes skipped.
pub fn model_gradient_error(
    model: &Model,
    meshes: &[Mesh],
    frozen: Option<&[PoolRecordStack]>,
    per_tensor: usize,
    seed: u64,
) -> (f64, String, usize) {
    use meshcodec::kernels::gradcheck::relative_error;
    let (tape, grads) = model.forward_backward(meshes, frozen).unwrap();
    let centre = tape.loss;
    let analytic: Vec<Vec<f64>> = grads.params().iter().map(|(_, p)| p.to_vec()).collect();
    let names: Vec<String> = model.params().iter().map(|(n, _)| n.clone()).collect();
    let mut r = rng(seed);
    let mut worst = (0.0, String::new());
    let mut skipped = 0;
    let h = 1e-6;
    for t in 0..names.len() {
        let len = analytic[t].len();
        for _ in 0..per_tensor.min(len) {
            let i = r.gen_range(0..len);
            let mut probe = model.clone();
            probe.params_mut()[t][i] += h;
            let plus = batch_loss(&probe, meshes, frozen);
            probe.params_mut()[t][i] -= 2.0 * h;
            let minus = batch_loss(&probe, meshes, frozen);
            let (left, right) = ((centre - minus) / h, (plus - centre) / h);
            if relative_error(left, right) > 1e-4 {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[t][i], numeric);
            if err > worst.0 {
                worst = (err, format!("{}[{i}] analytic {} numeric {numeric}", names[t], analytic[t][i]));
            }
        }
    }
    (worst.0, worst.1, skipped)
}
