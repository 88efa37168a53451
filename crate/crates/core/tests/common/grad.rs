//! Finite-difference checks. Each returns the worst relative error between
//! the analytic and central-difference gradients for one seed, with the name
//! of the worst entry.

use meshcodec::kernels::gradcheck::{central_difference, relative_error};
use meshcodec::kernels::{build_patches, conv, mse_loss, BatchNorm, BnMode, ConvWeights, Linear};
use meshcodec::model::{ArchitectureConfig, Model};
use meshcodec::pool::{pool_to_target, replay_pool, unpool, PoolRecordStack, PoolTarget};
use meshcodec::reconstruct::{reconstruct_backward, reconstruct_vertices};
use meshcodec::{shapes, Mesh};
use ndarray::{Array1, Array2};
use rand::Rng;

use super::{random_matrix, rng};

pub const H: f64 = 1e-6;

pub type Worst = (f64, String);

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a * b).sum()
}

fn from_flat(v: &[f64], shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_vec(shape, v.to_vec()).unwrap()
}

fn track(worst: &mut Worst, label: &str, analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len(), "{label}");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = relative_error(a, n);
        if e > worst.0 {
            *worst = (e, format!("{label}[{i}] analytic {a} numeric {n}"));
        }
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().unwrap()
}

pub fn test_mesh(seed: u64) -> Mesh {
    match seed % 3 {
        0 => shapes::perturb(&shapes::icosphere(1), 0.05, seed),
        1 => shapes::perturb(&shapes::grid(4, 3), 0.05, seed),
        _ => shapes::book(3, 2, 2),
    }
}

pub fn face_conv(seed: u64) -> Worst {
    let mesh = test_mesh(seed);
    let patches = build_patches(&mesh, 6);
    let (ci, co) = (4, 3);
    let w = ConvWeights::init(&mut rng(seed), ci, co, true, 1.0);
    let x = random_matrix(mesh.num_faces(), ci, seed + 100);
    let c = random_matrix(mesh.num_faces(), co, seed + 200);
    let (_, cache) = conv::forward(&x, &patches, &w).unwrap();
    let (gx, gw) = conv::backward(&cache, &patches, &w, &c).unwrap();
    let mut worst = (0.0, String::new());

    let f = |v: &[f64]| dot(&conv::forward(&from_flat(v, x.dim()), &patches, &w).unwrap().0, &c);
    track(&mut worst, "x", slice(&gx), &central_difference(f, slice(&x), H));
    for k in 0..4 {
        let f = |v: &[f64]| {
            let mut w2 = w.clone();
            w2.w[k] = from_flat(v, w.w[k].dim());
            dot(&conv::forward(&x, &patches, &w2).unwrap().0, &c)
        };
        track(&mut worst, &format!("w{k}"), slice(&gw.w[k]), &central_difference(f, slice(&w.w[k]), H));
    }
    let bias = w.bias.as_ref().unwrap();
    let f = |v: &[f64]| {
        let mut w2 = w.clone();
        w2.bias = Some(Array1::from(v.to_vec()));
        dot(&conv::forward(&x, &patches, &w2).unwrap().0, &c)
    };
    let num = central_difference(f, bias.as_slice().unwrap(), H);
    track(&mut worst, "bias", gw.bias.as_ref().unwrap().as_slice().unwrap(), &num);
    worst
}

/// The per-face linear head (a face convolution with only the `W0` term).
pub fn w0_conv(seed: u64) -> Worst {
    let lin = Linear::init(&mut rng(seed), 7, 9, true, 1.0);
    let x = random_matrix(13, 7, seed + 1);
    let c = random_matrix(13, 9, seed + 2);
    let (gx, gl) = lin.backward(&x, &c).unwrap();
    let mut worst = (0.0, String::new());
    let f = |v: &[f64]| dot(&lin.forward(&from_flat(v, x.dim())).unwrap(), &c);
    track(&mut worst, "x", slice(&gx), &central_difference(f, slice(&x), H));
    let f = |v: &[f64]| {
        let mut l = lin.clone();
        l.weight = from_flat(v, lin.weight.dim());
        dot(&l.forward(&x).unwrap(), &c)
    };
    track(&mut worst, "weight", slice(&gl.weight), &central_difference(f, slice(&lin.weight), H));
    let f = |v: &[f64]| {
        let mut l = lin.clone();
        l.bias = Some(Array1::from(v.to_vec()));
        dot(&l.forward(&x).unwrap(), &c)
    };
    let num = central_difference(f, lin.bias.as_ref().unwrap().as_slice().unwrap(), H);
    track(&mut worst, "bias", gl.bias.as_ref().unwrap().as_slice().unwrap(), &num);
    worst
}

pub fn batch_norm(seed: u64) -> Worst {
    let mut r = rng(seed);
    let c = 5;
    let mut bn = BatchNorm::new(c, 1e-5, 0.1);
    bn.gamma = Array1::from_shape_fn(c, |_| r.gen_range(0.5..1.5));
    bn.beta = Array1::from_shape_fn(c, |_| r.gen_range(-0.5..0.5));
    bn.running_mean = Array1::from_shape_fn(c, |_| r.gen_range(-0.2..0.2));
    bn.running_var = Array1::from_shape_fn(c, |_| r.gen_range(0.5..2.0));
    let x = random_matrix(11, c, seed + 10);
    let up = random_matrix(11, c, seed + 20);
    let mut worst = (0.0, String::new());
    for mode in [BnMode::Train, BnMode::Eval] {
        let (_, cache) = bn.forward(&x, mode).unwrap();
        let (gx, gg, gb) = bn.backward(&cache, &up).unwrap();
        let f = |v: &[f64]| dot(&bn.forward(&from_flat(v, x.dim()), mode).unwrap().0, &up);
        track(&mut worst, &format!("{mode:?} x"), slice(&gx), &central_difference(f, slice(&x), H));
        let f = |v: &[f64]| {
            let mut b = bn.clone();
            b.gamma = Array1::from(v.to_vec());
            dot(&b.forward(&x, mode).unwrap().0, &up)
        };
        let num = central_difference(f, bn.gamma.as_slice().unwrap(), H);
        track(&mut worst, &format!("{mode:?} gamma"), gg.as_slice().unwrap(), &num);
        let f = |v: &[f64]| {
            let mut b = bn.clone();
            b.beta = Array1::from(v.to_vec());
            dot(&b.forward(&x, mode).unwrap().0, &up)
        };
        let num = central_difference(f, bn.beta.as_slice().unwrap(), H);
        track(&mut worst, &format!("{mode:?} beta"), gb.as_slice().unwrap(), &num);
    }
    worst
}

fn rows3(a: &Array2<f64>) -> Vec<[f64; 3]> {
    a.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect()
}

pub fn mse(seed: u64) -> Worst {
    let n = 5 + seed as usize % 17;
    let p = random_matrix(n, 3, seed);
    let t = random_matrix(n, 3, seed + 50);
    let (loss, g) = mse_loss(&rows3(&p), &rows3(&t)).unwrap();
    let oracle = (&p - &t).mapv(|d| d * d).sum() / (3 * n) as f64;
    let mut worst = (relative_error(loss, oracle), "value".to_string());
    let flat: Vec<f64> = g.iter().flatten().copied().collect();
    let f = |v: &[f64]| mse_loss(&rows3(&from_flat(v, p.dim())), &rows3(&t)).unwrap().0;
    track(&mut worst, "pred", &flat, &central_difference(f, slice(&p), H));
    worst
}

pub fn reconstruction(seed: u64) -> Worst {
    let mesh = test_mesh(seed);
    let v = mesh.num_vertices();
    let x = random_matrix(mesh.num_faces(), 9, seed);
    let c = random_matrix(v, 3, seed + 5);
    let loss = |feat: &Array2<f64>| {
        let rec = reconstruct_vertices(feat, mesh.faces(), v).unwrap();
        rec.vertices
            .iter()
            .enumerate()
            .map(|(i, p)| p[0] * c[[i, 0]] + p[1] * c[[i, 1]] + p[2] * c[[i, 2]])
            .sum::<f64>()
    };
    let g = reconstruct_backward(&rows3(&c), mesh.faces(), v).unwrap();
    let mut worst = (0.0, String::new());
    let num = central_difference(|p| loss(&from_flat(p, x.dim())), slice(&x), H);
    track(&mut worst, "features", slice(&g), &num);
    worst
}

/// Pool (selection replayed) followed by unpool.
pub fn pooled_flow(seed: u64) -> Worst {
    let mesh = if seed.is_multiple_of(2) {
        shapes::random_flips(&shapes::icosphere(2), 20, seed)
    } else {
        shapes::book(3, 4, 3)
    };
    let x = random_matrix(mesh.num_faces(), 4, seed);
    let pooled = pool_to_target(&mesh, &x, PoolTarget::faces(mesh.num_faces() / 2)).unwrap();
    assert!(!pooled.layer.records.is_empty());
    let c = random_matrix(mesh.num_faces(), 4, seed + 9);
    let f = |v: &[f64]| {
        let p = replay_pool(&mesh, &from_flat(v, x.dim()), &pooled.layer).unwrap();
        let u = unpool(&pooled.mesh, &p.features, &pooled.layer).unwrap();
        dot(&u.features, &c)
    };
    let u = unpool(&pooled.mesh, &pooled.features, &pooled.layer).unwrap();
    let g = pooled.map.apply_transpose(&u.map.apply_transpose(&c).unwrap()).unwrap();
    let mut worst = (0.0, String::new());
    // the map is linear, so a wide step has no truncation error and less
    // cancellation than `H`
    track(&mut worst, "features", slice(&g), &central_difference(f, slice(&x), 1e-3));
    worst
}

pub fn small_config(pooling: bool) -> ArchitectureConfig {
    ArchitectureConfig {
        m: 36,
        encoder_widths: vec![4, 5],
        decoder_widths: vec![5, 4],
        pooling,
        ..Default::default()
    }
}

/// Whole model, probing `per_tensor` random entries of every parameter.
/// With `pooling` the selection of the first forward pass is frozen. The
/// last value counts probes skipped at kinks.
pub fn model(seed: u64, pooling: bool, per_tensor: usize) -> (f64, String, usize) {
    let model = Model::new(small_config(pooling), seed).unwrap();
    let meshes = [
        shapes::perturb(&shapes::icosphere(1), 0.05, seed),
        shapes::perturb(&shapes::grid(5, 4), 0.05, seed),
    ];
    let frozen: Option<Vec<PoolRecordStack>> = pooling.then(|| {
        let tape = model.forward_batch(&meshes, BnMode::Train, None).unwrap();
        tape.encoded.iter().map(|e| e.records.clone()).collect()
    });
    if let Some(f) = &frozen {
        assert!(f.iter().all(|s| s.total_records() > 0));
    }
    super::model_gradient_error(&model, &meshes, frozen.as_deref(), per_tensor, seed)
}
