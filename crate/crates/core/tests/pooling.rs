mod common;

use std::collections::HashSet;

use common::{closed_corpus, corpus, random_matrix};
use meshcodec::model::make_schedule;
use meshcodec::pool::{collapse, pool_to_target, replay_pool, unpool, PoolLayer, PoolRecordStack};
use meshcodec::{shapes, Mesh};
use proptest::prelude::*;

const CHANNELS: usize = 5;

/// Pools through every stage of the schedule and returns the meshes and
/// layers of each level.
fn pool_stages(mesh: &Mesh, m: usize, stages: usize, seed: u64) -> (Vec<Mesh>, Vec<PoolLayer>) {
    let schedule = make_schedule(mesh.num_faces(), mesh.referenced_vertex_count(), m, stages);
    let mut levels = vec![mesh.clone()];
    let mut layers = Vec::new();
    for i in 0..stages {
        let Some(target) = schedule.target(i) else { break };
        let cur = levels.last().unwrap();
        let x = random_matrix(cur.num_faces(), CHANNELS, seed + i as u64);
        let out = pool_to_target(cur, &x, target).unwrap();
        levels.push(out.mesh);
        layers.push(out.layer);
    }
    (levels, layers)
}

fn unpool_all(mut mesh: Mesh, layers: &[PoolLayer], seed: u64) -> Mesh {
    for layer in layers.iter().rev() {
        let x = random_matrix(mesh.num_faces(), CHANNELS, seed);
        mesh = unpool(&mesh, &x, layer).unwrap().mesh;
    }
    mesh
}

fn edge_count(faces: &[[u32; 3]]) -> usize {
    faces
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect::<HashSet<_>>()
        .len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pool_then_unpool_restores_faces(idx in 0usize..1000, seed in any::<u64>(), keep in 3usize..8) {
        let all = corpus();
        let (_, mesh) = &all[idx % all.len()];
        let m = 3 * (mesh.referenced_vertex_count() * keep / 10).max(4);
        let (levels, layers) = pool_stages(mesh, m, 3, seed);
        let restored = unpool_all(levels.last().unwrap().clone(), &layers, seed ^ 1);
        prop_assert_eq!(restored.faces(), mesh.faces());
    }

    #[test]
    fn closed_manifold_collapse_removes_four_faces_two_vertices(
        idx in 0usize..1000,
        face in 0usize..10_000,
        seed in any::<u64>(),
    ) {
        let all = closed_corpus();
        let (_, mesh) = &all[idx % all.len()];
        let f = face % mesh.num_faces();
        let x = random_matrix(mesh.num_faces(), CHANNELS, seed);
        if let Ok(out) = collapse(mesh, &x, f).unwrap() {
            prop_assert_eq!(out.mesh.num_faces() + 4, mesh.num_faces());
            prop_assert_eq!(out.mesh.referenced_vertex_count() + 2, mesh.referenced_vertex_count());
            prop_assert_eq!(edge_count(out.mesh.faces()) + 6, edge_count(mesh.faces()));
            prop_assert_eq!(out.layer.records[0].removed_faces.len(), 4);
        }
    }

    #[test]
    fn pooling_is_deterministic_and_replayable(idx in 0usize..1000, seed in any::<u64>()) {
        let all = corpus();
        let (_, mesh) = &all[idx % all.len()];
        let x = random_matrix(mesh.num_faces(), CHANNELS, seed);
        let target = meshcodec::pool::PoolTarget::faces(mesh.num_faces() / 2);
        let a = pool_to_target(mesh, &x, target).unwrap();
        let b = pool_to_target(mesh, &x, target).unwrap();
        prop_assert_eq!(&a.layer, &b.layer);
        prop_assert_eq!(a.mesh.faces(), b.mesh.faces());
        prop_assert_eq!(&a.features, &b.features);

        let y = random_matrix(mesh.num_faces(), CHANNELS, seed ^ 7);
        let r = replay_pool(mesh, &y, &a.layer).unwrap();
        prop_assert_eq!(r.mesh.faces(), a.mesh.faces());
        prop_assert_eq!(&r.layer, &a.layer);
        prop_assert_eq!(&r.map, &a.map);
    }

    #[test]
    fn feature_flow_is_the_recorded_sparse_map(idx in 0usize..1000, seed in any::<u64>()) {
        let all = corpus();
        let (_, mesh) = &all[idx % all.len()];
        let x = random_matrix(mesh.num_faces(), CHANNELS, seed);
        let p = pool_to_target(mesh, &x, meshcodec::pool::PoolTarget::faces(mesh.num_faces() * 2 / 3)).unwrap();
        let via_map = p.map.apply(&x).unwrap();
        prop_assert!(p.features.iter().zip(via_map.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let u = unpool(&p.mesh, &p.features, &p.layer).unwrap();
        let via_map = u.map.apply(&p.features).unwrap();
        prop_assert!(u.features.iter().zip(via_map.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        prop_assert_eq!(u.features.nrows(), mesh.num_faces());
    }

    #[test]
    fn record_stack_binary_roundtrip(idx in 0usize..1000, seed in any::<u64>()) {
        let all = corpus();
        let (_, mesh) = &all[idx % all.len()];
        let m = 3 * (mesh.referenced_vertex_count() / 2).max(4);
        let (_, layers) = pool_stages(mesh, m, 3, seed);
        let stack = PoolRecordStack { vertex_count: mesh.num_vertices() as u32, layers };
        let bytes = stack.to_bytes().unwrap();
        prop_assert_eq!(PoolRecordStack::from_bytes(&bytes).unwrap(), stack);
        if bytes.len() > 12 {
            prop_assert!(PoolRecordStack::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }
}

#[test]
fn untouched_faces_keep_their_rows() {
    let mesh = shapes::icosphere(2);
    let x = random_matrix(mesh.num_faces(), CHANNELS, 4);
    let out = collapse(&mesh, &x, 17).unwrap().unwrap();
    let rec = &out.layer.records[0];
    let touched: HashSet<u32> = rec
        .removed_faces
        .iter()
        .map(|r| r.face)
        .chain(rec.modified_faces.iter().map(|m| m.face))
        .collect();
    let survivors: Vec<usize> = (0..mesh.num_faces()).filter(|&f| !rec.removed_faces.iter().any(|r| r.face as usize == f)).collect();
    for (row, &f) in survivors.iter().enumerate() {
        if !touched.contains(&(f as u32)) {
            assert_eq!(out.features.row(row), x.row(f));
        }
    }
}

#[test]
fn pooling_reaches_the_vertex_floor_on_large_closed_meshes() {
    for mesh in [shapes::uv_sphere(25, 10), shapes::icosphere(3), shapes::torus(25, 10, 1.0, 0.4)] {
        let (levels, _) = pool_stages(&mesh, 512, 3, 11);
        assert!(levels.last().unwrap().referenced_vertex_count() <= 170);
    }
}
