//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p meshcodec --test acceptance`.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{closed_corpus, corpus, grad, random_matrix, rng};
use meshcodec::kernels::{build_patches, conv, ConvWeights};
use meshcodec::mesh::normalize_unit_sphere;
use meshcodec::metrics::{chamfer_distance, MetricValues};
use meshcodec::model::{ArchitectureConfig, Checkpoint, LatentCode, Model};
use meshcodec::pool::{collapse, pool_to_target, PoolTarget};
use meshcodec::reconstruct::{extract_geom_features, reconstruct_vertices};
use meshcodec::trainer::{Sample, TrainConfig, Trainer};
use meshcodec::{shapes, Mesh};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Meshes with exactly 500 faces.
fn five_hundred_face_meshes() -> Vec<(String, Mesh)> {
    let mut out = vec![
        ("uv25x10".to_string(), shapes::uv_sphere(25, 10)),
        ("torus25x10".to_string(), shapes::torus(25, 10, 1.0, 0.4)),
        ("torus50x5".to_string(), shapes::torus(50, 5, 1.0, 0.3)),
        ("grid25x10".to_string(), shapes::grid(25, 10)),
        ("grid50x5".to_string(), shapes::grid(50, 5)),
        ("strip250".to_string(), shapes::strip(250)),
        ("book5p10x5".to_string(), shapes::book(5, 10, 5)),
    ];
    for seed in 0..6 {
        let m = shapes::random_flips(&shapes::uv_sphere(25, 10), 150, seed);
        out.push((format!("uvflips{seed}"), shapes::perturb(&m, 0.01, seed)));
    }
    for (name, m) in &out {
        assert_eq!(m.num_faces(), 500, "{name}");
    }
    out
}

fn c1_connectivity_roundtrip() -> Outcome {
    let meshes = corpus();
    let kinds = (
        closed_corpus().len(),
        common::bordered_corpus().len(),
        common::non_manifold_corpus().len(),
    );
    ensure(meshes.len() >= 50, || format!("corpus has only {} meshes", meshes.len()))?;
    let mut pooled = 0;
    for (i, (name, mesh)) in meshes.iter().enumerate() {
        let v = mesh.referenced_vertex_count();
        let config = ArchitectureConfig {
            m: 3 * (v * 2 / 5).max(4),
            encoder_widths: vec![16, 16, 16],
            decoder_widths: vec![16, 16, 16],
            ..Default::default()
        };
        let model = Model::new(config, 1000 + i as u64).map_err(|e| format!("{name}: {e}"))?;
        let enc = model.encode(mesh).map_err(|e| format!("{name}: {e}"))?;
        if enc.records.total_records() > 0 {
            pooled += 1;
        }
        let dec = model.decode(&enc).map_err(|e| format!("{name}: {e}"))?;
        ensure(dec.faces() == mesh.faces(), || format!("{name}: face matrix differs"))?;
    }
    Ok(format!(
        "{}/{} meshes restored bitwise ({} closed, {} bordered, {} non-manifold; {pooled} pooled)",
        meshes.len(),
        meshes.len(),
        kinds.0,
        kinds.1,
        kinds.2
    ))
}

fn c2_collapse_accounting() -> Outcome {
    let mut collapses = 0usize;
    let mut r = rng(2);
    let pool: Vec<Mesh> = closed_corpus()
        .into_iter()
        .map(|(_, m)| m)
        .filter(|m| m.num_faces() >= 80)
        .collect();
    while collapses < 1000 {
        let mut mesh = pool[r.gen_range(0..pool.len())].clone();
        for _ in 0..40 {
            let x = random_matrix(mesh.num_faces(), 3, r.gen());
            let f = r.gen_range(0..mesh.num_faces());
            let Ok(out) = collapse(&mesh, &x, f).map_err(|e| e.to_string())? else {
                continue;
            };
            let df = out.mesh.num_faces() as i64 - mesh.num_faces() as i64;
            let dv = out.mesh.referenced_vertex_count() as i64 - mesh.referenced_vertex_count() as i64;
            ensure(df == -4 && dv == -2, || format!("collapse gave dF={df} dV={dv}"))?;
            collapses += 1;
            mesh = out.mesh;
        }
    }
    // the same accounting through multi-collapse pooling rounds
    let mut pooled = 0usize;
    for (name, mesh) in closed_corpus() {
        let x = random_matrix(mesh.num_faces(), 3, 5);
        let out = pool_to_target(&mesh, &x, PoolTarget::faces(mesh.num_faces() / 3)).map_err(|e| e.to_string())?;
        let n = out.layer.records.len();
        ensure(
            out.mesh.num_faces() + 4 * n == mesh.num_faces()
                && out.mesh.referenced_vertex_count() + 2 * n == mesh.referenced_vertex_count(),
            || format!("{name}: {n} collapses do not account for the pooled mesh"),
        )?;
        pooled += n;
    }
    Ok(format!("{collapses} single collapses and {pooled} pooled collapses, all dF=-4 dV=-2"))
}

fn c3_latent_budget() -> Outcome {
    let model = Model::new(ArchitectureConfig::default(), 3).map_err(|e| e.to_string())?;
    let mut worst = (0, 0);
    let meshes = five_hundred_face_meshes();
    for (name, mesh) in &meshes {
        let mesh = normalize_unit_sphere(mesh).map_err(|e| e.to_string())?;
        let code = model.encode_latent(&mesh).map_err(|e| format!("{name}: {e}"))?;
        let v = code.base_vertices.len();
        let s = code.latent_scalars();
        ensure(v <= 170 && s <= 512, || format!("{name}: base mesh {v} vertices, {s} scalars"))?;
        worst = (worst.0.max(v), worst.1.max(s));
    }
    Ok(format!(
        "{} meshes of 500 faces, m=512: at most {} base vertices, {} latent scalars",
        meshes.len(),
        worst.0,
        worst.1
    ))
}

fn c4_gradients() -> Outcome {
    type Check = fn(u64) -> grad::Worst;
    let checks: [(&str, Check); 6] = [
        ("conv", grad::face_conv),
        ("W0", grad::w0_conv),
        ("bn", grad::batch_norm),
        ("mse", grad::mse),
        ("reconstruct", grad::reconstruction),
        ("pool/unpool", grad::pooled_flow),
    ];
    let mut summary = Vec::new();
    for (name, f) in checks {
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let (e, at) = f(seed);
            ensure(e <= 1e-4, || format!("{name} seed {seed}: {e:e} at {at}"))?;
            worst = worst.max(e);
        }
        summary.push(format!("{name} {worst:.1e}"));
    }
    for pooling in [false, true] {
        let mut worst: f64 = 0.0;
        let mut skipped = 0;
        for seed in 0..20 {
            let (e, at, s) = grad::model(seed, pooling, 2);
            ensure(e <= 1e-4, || format!("model (pooling {pooling}) seed {seed}: {e:e} at {at}"))?;
            worst = worst.max(e);
            skipped += s;
        }
        let label = if pooling { "model+frozen pool" } else { "model" };
        summary.push(format!("{label} {worst:.1e} ({skipped} probes at kinks skipped)"));
    }
    Ok(format!("20 seeds each, worst relative error: {}", summary.join(", ")))
}

fn c5_permutation_invariance() -> Outcome {
    let meshes = corpus();
    let mut r = rng(5);
    for trial in 0..100 {
        let (name, mesh) = &meshes[r.gen_range(0..meshes.len())];
        let patches = build_patches(mesh, 6);
        let c = r.gen_range(1..6);
        let w = ConvWeights::init(&mut r, c, 4, true, 1.0);
        let x = random_matrix(mesh.num_faces(), c, r.gen());
        let base = conv::forward(&x, &patches, &w).map_err(|e| e.to_string())?.0;
        let mut shuffled = patches.clone();
        for p in &mut shuffled {
            p.members.shuffle(&mut r);
        }
        let out = conv::forward(&x, &shuffled, &w).map_err(|e| e.to_string())?.0;
        let same = base.iter().zip(out.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("trial {trial} on {name}: outputs differ"))?;
    }
    Ok("100 shuffled-patch trials bitwise identical".into())
}

fn c6_reconstruction_identity() -> Outcome {
    let meshes = corpus();
    for (name, mesh) in &meshes {
        let mesh = shapes::perturb(mesh, 0.1, 6);
        let rec = reconstruct_vertices(&extract_geom_features(&mesh), mesh.faces(), mesh.num_vertices())
            .map_err(|e| e.to_string())?;
        for v in mesh.referenced_vertices() {
            let (a, b) = (rec.vertices[v as usize], mesh.vertices()[v as usize]);
            ensure(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()), || {
                format!("{name}: vertex {v} {a:?} != {b:?}")
            })?;
        }
    }
    Ok(format!("{} corpus meshes recovered exactly", meshes.len()))
}

fn c7_overfit() -> Outcome {
    let mesh = normalize_unit_sphere(&shapes::uv_sphere(25, 10)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        batch_size: 1,
        augment: false,
        ..Default::default()
    };
    let mut t = Trainer::new(ArchitectureConfig::default(), cfg).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let targets: Vec<[f64; 3]> = mesh.vertices().to_vec();
    let mut result = None;
    for step in 1..=5000u64 {
        let loss = t.train_step(std::slice::from_ref(&mesh)).map_err(|e| e.to_string())?;
        if step % 25 != 0 || loss >= 1e-3 {
            continue;
        }
        let enc = t.model().encode(&mesh).map_err(|e| e.to_string())?;
        let out = t.model().decode(&enc).map_err(|e| e.to_string())?;
        let mse = out
            .vertices()
            .iter()
            .zip(&targets)
            .map(|(a, b)| (0..3).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (3 * targets.len()) as f64;
        let cd = chamfer_distance(mesh.vertices(), out.vertices()).map_err(|e| e.to_string())?;
        if mse < 1e-3 && cd < 0.01 {
            result = Some((step, loss, mse, cd, enc.base_vertex_ids().len(), enc.records.layers.len()));
            break;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let (step, loss, mse, cd, base, layers) =
        result.ok_or_else(|| format!("no step within 5000 reached MSE < 1e-3 and CD < 0.01 ({secs:.0}s)"))?;
    ensure(layers == 3 && base <= 170, || format!("pipeline used {layers} stages and {base} base vertices"))?;
    Ok(format!(
        "{} faces, 3 stages, {base} base vertices: step {step}, train {loss:.2e}, eval MSE {mse:.2e}, CD {cd:.2e}, {secs:.0}s",
        mesh.num_faces()
    ))
}

fn c8_metric_sanity() -> Outcome {
    for (name, mesh) in corpus() {
        let v = MetricValues::compare(&mesh, &mesh).map_err(|e| e.to_string())?;
        ensure(v.cd == 0.0 && v.ne == 0.0 && v.cp == 0.0, || format!("{name}: {v:?}"))?;
    }
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for pair in 0..100 {
        let spread = 10f64.powf(r.gen_range(-2.0..2.0));
        let mut cloud = |n: usize| -> Vec<[f64; 3]> {
            (0..n).map(|_| [0, 1, 2].map(|_| r.gen_range(-spread..spread))).collect()
        };
        let (na, nb) = (1 + pair * 7 % 500, 1 + pair * 13 % 450);
        let (a, b) = (cloud(na), cloud(nb));
        let fast = chamfer_distance(&a, &b).map_err(|e| e.to_string())?;
        let brute = |x: &[[f64; 3]], y: &[[f64; 3]]| {
            x.iter()
                .map(|p| {
                    y.iter()
                        .map(|q| (0..3).map(|d| (p[d] - q[d]).powi(2)).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / x.len() as f64
        };
        let slow = brute(&a, &b) + brute(&b, &a);
        let err = (fast - slow).abs() / slow.max(1.0);
        ensure(err <= 1e-12, || format!("pair {pair}: grid {fast} brute {slow}"))?;
        worst = worst.max(err);
    }
    Ok(format!("CD=NE=CP=0 on identical pairs; grid CD vs brute force over 100 pairs, worst {worst:.1e}"))
}

fn determinism_samples() -> Vec<Sample> {
    [shapes::icosphere(2), shapes::torus(12, 6, 1.0, 0.3), shapes::grid(6, 5), shapes::book(3, 4, 2)]
        .into_iter()
        .enumerate()
        .map(|(i, mesh)| Sample::Loaded { name: format!("m{i}"), mesh })
        .collect()
}

fn c9_determinism() -> Outcome {
    let arch = ArchitectureConfig {
        m: 60,
        encoder_widths: vec![8, 8],
        decoder_widths: vec![8, 8],
        ..Default::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 2,
        seed: 9,
        ..Default::default()
    };
    let data = determinism_samples();
    let run = |workers: usize| -> Result<Trainer, String> {
        let mut t = Trainer::new(arch.clone(), TrainConfig { workers, ..cfg.clone() }).map_err(|e| e.to_string())?;
        t.train(&data, &[], None).map_err(|e| e.to_string())?;
        Ok(t)
    };
    let (a, b) = (run(1)?, run(4)?);
    let (la, lb) = (a.log().to_csv().map_err(|e| e.to_string())?, b.log().to_csv().map_err(|e| e.to_string())?);
    ensure(la == lb, || "loss logs differ between identical runs".into())?;

    let half = TrainConfig { max_steps: Some(3), ..cfg.clone() };
    let mut first = Trainer::new(arch.clone(), half).map_err(|e| e.to_string())?;
    first.train(&data, &[], None).map_err(|e| e.to_string())?;
    let bytes = first.checkpoint().to_bytes().map_err(|e| e.to_string())?;
    let ckpt = Checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let mut resumed = Trainer::resume(ckpt, cfg.clone()).map_err(|e| e.to_string())?;
    resumed.train(&data, &[], None).map_err(|e| e.to_string())?;
    ensure(resumed.model() == a.model(), || "resumed model differs".into())?;
    let tail = &a.log().rows[3..];
    ensure(resumed.log().rows == tail, || "resumed log differs".into())?;
    Ok(format!("{} steps with 1 and 4 workers bitwise equal; resume from step 3 exact", a.step()))
}

fn c10_latent_files() -> Outcome {
    let model = Model::new(ArchitectureConfig::default(), 10).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let meshes = five_hundred_face_meshes();
    for (i, (name, mesh)) in meshes.iter().enumerate() {
        let mesh = normalize_unit_sphere(mesh).map_err(|e| e.to_string())?;
        let code = model.encode_latent(&mesh).map_err(|e| format!("{name}: {e}"))?;
        // base faces keep the global vertex ids of the input mesh
        let n = code.records.vertex_count;
        ensure(n as usize == mesh.num_vertices(), || format!("{name}: record stack covers {n} vertices"))?;
        let mut seen = HashSet::new();
        for f in &code.base_faces {
            ensure(f.iter().all(|&v| v < n), || format!("{name}: base face {f:?} out of range"))?;
            ensure(f[0] != f[1] && f[1] != f[2] && f[0] != f[2], || format!("{name}: degenerate {f:?}"))?;
            let mut key = *f;
            key.sort_unstable();
            ensure(seen.insert(key), || format!("{name}: duplicate base face {f:?}"))?;
        }
        let used: HashSet<u32> = code.base_faces.iter().flatten().copied().collect();
        ensure(used.len() == code.base_vertices.len(), || {
            format!("{name}: {} stored vertices, faces use {}", code.base_vertices.len(), used.len())
        })?;

        let path = dir.path().join(format!("{i}.lat"));
        code.save(&path).map_err(|e| e.to_string())?;
        let back = LatentCode::load(&path).map_err(|e| e.to_string())?;
        ensure(back == code, || format!("{name}: latent file roundtrip differs"))?;
        let a = model.decode_latent(&code).map_err(|e| e.to_string())?;
        let b = model.decode_latent(&back).map_err(|e| e.to_string())?;
        ensure(a == b && a.faces() == mesh.faces(), || format!("{name}: decoded meshes differ"))?;
    }
    Ok(format!("{} base meshes structurally valid; latent files roundtrip", meshes.len()))
}

fn main() {
    type Criterion = fn() -> Outcome;
    let criteria: [(&str, Criterion); 10] = [
        ("connectivity roundtrip", c1_connectivity_roundtrip),
        ("collapse accounting", c2_collapse_accounting),
        ("latent budget", c3_latent_budget),
        ("gradient correctness", c4_gradients),
        ("permutation invariance", c5_permutation_invariance),
        ("reconstruction identity", c6_reconstruction_identity),
        ("overfit convergence", c7_overfit),
        ("metric sanity", c8_metric_sanity),
        ("determinism", c9_determinism),
        ("latent structure and file roundtrip", c10_latent_files),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
