//! Feature-driven face-collapse pooling and its exact inverse.
//!
//! A collapse takes a face `(a, b, c)` with `a` its smallest vertex id and
//! merges `b` and `c` into `a`. Faces holding two of the three vertices become
//! degenerate and are removed (four on a closed manifold, fewer on a border,
//! more across non-manifold edges); faces holding `b` or `c` are rewritten.
//! Coordinates are never touched.
//!
//! Pooling proceeds in rounds. Each round scores every face by the summed L2
//! distance between its features and those of its edge neighbors, then
//! greedily claims the lowest-scoring faces whose collapse footprints are
//! pairwise disjoint and applies them in claim order. Rewritten faces take the
//! mean of their own and their neighbors' pre-collapse features.
//!
//! Unpooling replays a layer's records backwards. Each re-inserted face gets
//! the mean of its edge neighbors' features.

mod records;
mod work;

use ndarray::Array2;

pub use records::{CollapseRecord, ModifiedFace, PoolLayer, PoolRecordStack, RemovedFace};
pub(crate) use records::{put_u32, Reader};
pub use work::Rejection;
use work::WorkMesh;

use crate::sparse::{mean_of_rows, SparseMap, SparseRow};
use crate::{Error, Mesh, Result};

fn l2(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `w_f`: sum of L2 distances from the face's features to each edge
/// neighbor's. Isolated faces score 0.
pub fn face_weight(features: &Array2<f64>, mesh: &Mesh, face: usize) -> f64 {
    mesh.neighbors(face)
        .iter()
        .map(|&n| l2(features.row(face), features.row(n as usize)))
        .sum()
}

/// When to stop pooling: at or below `max_faces` faces, or at or below
/// `min_vertices` referenced vertices, whichever comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolTarget {
    pub max_faces: usize,
    pub min_vertices: usize,
}

impl PoolTarget {
    pub fn faces(max_faces: usize) -> Self {
        PoolTarget {
            max_faces,
            min_vertices: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoolOutput {
    pub mesh: Mesh,
    pub features: Array2<f64>,
    pub layer: PoolLayer,
    /// Post-pool features as a function of pre-pool features, with the
    /// collapse selection held fixed.
    pub map: SparseMap,
    pub target_reached: bool,
}

#[derive(Debug, Clone)]
pub struct UnpoolOutput {
    pub mesh: Mesh,
    pub features: Array2<f64>,
    pub map: SparseMap,
}

/// Pooling state: the working mesh plus, for every face slot, its current
/// features as a sparse combination of the input rows.
struct Pooler {
    work: WorkMesh,
    rows: Vec<SparseRow>,
    records: Vec<CollapseRecord>,
}

impl Pooler {
    fn new(mesh: &Mesh) -> Result<Self> {
        Ok(Pooler {
            work: WorkMesh::from_faces(mesh.faces(), mesh.num_vertices())?,
            rows: (0..mesh.num_faces() as u32).map(|i| vec![(i, 1.0)]).collect(),
            records: Vec::new(),
        })
    }

    fn apply(&mut self, record: CollapseRecord) -> Result<()> {
        let updated: Vec<(u32, SparseRow)> = record
            .modified_faces
            .iter()
            .map(|m| {
                let mut members = vec![m.face];
                members.extend(self.work.neighbors(m.face));
                (m.face, mean_of_rows(members.iter().map(|&g| &self.rows[g as usize])))
            })
            .collect();
        self.work.apply(&record)?;
        for (f, row) in updated {
            self.rows[f as usize] = row;
        }
        for r in &record.removed_faces {
            self.rows[r.face as usize] = Vec::new();
        }
        self.records.push(record);
        Ok(())
    }

    fn current_features(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), x.ncols()));
        for (r, row) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(r);
            for &(j, w) in row {
                o.scaled_add(w, &x.row(j as usize));
            }
        }
        out
    }

    fn reached(&self, target: &PoolTarget) -> bool {
        self.work.alive_faces() <= target.max_faces || self.work.alive_vertices() <= target.min_vertices
    }

    fn finish(self, mesh: &Mesh, x: &Array2<f64>, target_reached: bool) -> Result<PoolOutput> {
        let live: Vec<u32> = self.work.live_ids().collect();
        let faces = self.work.live_faces();
        let rows: Vec<SparseRow> = live.iter().map(|&f| self.rows[f as usize].clone()).collect();
        let map = SparseMap::from_rows(rows, mesh.num_faces());
        let features = map.apply(x)?;
        Ok(PoolOutput {
            mesh: Mesh::new(mesh.vertices().to_vec(), faces)?,
            features,
            layer: PoolLayer {
                pre_faces: mesh.num_faces() as u32,
                post_faces: live.len() as u32,
                records: self.records,
            },
            map,
            target_reached,
        })
    }
}

fn check_rows(mesh: &Mesh, features: &Array2<f64>) -> Result<()> {
    if features.nrows() != mesh.num_faces() {
        return Err(Error::shape(format!(
            "{} feature rows for {} faces",
            features.nrows(),
            mesh.num_faces()
        )));
    }
    Ok(())
}

/// Collapses faces until `target` is met or no legal collapse is left
/// (`target_reached == false` in that case).
pub fn pool_to_target(mesh: &Mesh, features: &Array2<f64>, target: PoolTarget) -> Result<PoolOutput> {
    check_rows(mesh, features)?;
    let mut pooler = Pooler::new(mesh)?;
    loop {
        if pooler.reached(&target) {
            return pooler.finish(mesh, features, true);
        }
        let current = pooler.current_features(features);
        let mut scored: Vec<(f64, u32)> = pooler
            .work
            .live_ids()
            .map(|f| {
                let w: f64 = pooler
                    .work
                    .neighbors(f)
                    .iter()
                    .map(|&n| l2(current.row(f as usize), current.row(n as usize)))
                    .sum();
                (w, f)
            })
            .collect();
        scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

        let mut claimed = vec![false; pooler.work.slots()];
        let mut round = Vec::new();
        for &(_, f) in &scored {
            let Ok(plan) = pooler.work.plan_collapse(f) else {
                continue;
            };
            if plan.footprint.iter().any(|&g| claimed[g as usize]) {
                continue;
            }
            for &g in &plan.footprint {
                claimed[g as usize] = true;
            }
            round.push(plan.record);
        }
        if round.is_empty() {
            return pooler.finish(mesh, features, false);
        }
        let mut applied = 0;
        for record in round {
            if pooler.reached(&target) {
                break;
            }
            // an earlier collapse this round may have touched faces around
            // the kept vertex, so the plan is re-checked before applying
            let central = record.central_face().expect("planned records keep their central face");
            if let Ok(plan) = pooler.work.plan_collapse(central) {
                pooler.apply(plan.record)?;
                applied += 1;
            }
        }
        if applied == 0 {
            return pooler.finish(mesh, features, false);
        }
    }
}

/// Re-applies recorded collapses to `mesh`, validating each record against the
/// current connectivity. This is pooling with the selection frozen.
pub fn replay_pool(mesh: &Mesh, features: &Array2<f64>, layer: &PoolLayer) -> Result<PoolOutput> {
    check_rows(mesh, features)?;
    if layer.pre_faces as usize != mesh.num_faces() {
        return Err(Error::Records(format!(
            "layer was pooled from {} faces, mesh has {}",
            layer.pre_faces,
            mesh.num_faces()
        )));
    }
    let mut pooler = Pooler::new(mesh)?;
    for (i, record) in layer.records.iter().enumerate() {
        let central = record
            .central_face()
            .ok_or_else(|| Error::Records(format!("record {i} has no central face")))?;
        let plan = pooler
            .work
            .plan_collapse(central)
            .map_err(|r| Error::Records(format!("record {i} cannot be replayed: {r:?}")))?;
        if plan.record != *record {
            return Err(Error::Records(format!(
                "record {i} does not match the mesh connectivity"
            )));
        }
        pooler.apply(plan.record)?;
    }
    let out = pooler.finish(mesh, features, true)?;
    if out.layer.post_faces != layer.post_faces {
        return Err(Error::Records(format!(
            "replay produced {} faces, layer records {}",
            out.layer.post_faces, layer.post_faces
        )));
    }
    Ok(out)
}

/// A single collapse. Returns the rejection reason when the collapse would
/// corrupt the topology.
pub fn collapse(
    mesh: &Mesh,
    features: &Array2<f64>,
    face: usize,
) -> Result<std::result::Result<PoolOutput, Rejection>> {
    check_rows(mesh, features)?;
    let mut pooler = Pooler::new(mesh)?;
    match pooler.work.plan_collapse(face as u32) {
        Ok(plan) => {
            pooler.apply(plan.record)?;
            Ok(Ok(pooler.finish(mesh, features, true)?))
        }
        Err(r) => Ok(Err(r)),
    }
}

/// Restores the connectivity a layer removed. Returns the pre-pool face
/// matrix and the feature map from post-pool rows to pre-pool rows.
pub fn unpool_topology(
    post_faces: &[[u32; 3]],
    vertex_count: usize,
    layer: &PoolLayer,
) -> Result<(Vec<[u32; 3]>, SparseMap)> {
    let pre = layer.pre_faces as usize;
    if post_faces.len() != layer.post_faces as usize {
        return Err(Error::Records(format!(
            "layer expects {} pooled faces, mesh has {}",
            layer.post_faces,
            post_faces.len()
        )));
    }
    let mut removed = vec![false; pre];
    for r in layer.records.iter().flat_map(|r| r.removed_faces.iter()) {
        let slot = removed
            .get_mut(r.face as usize)
            .ok_or_else(|| Error::Records(format!("removed face id {} out of range", r.face)))?;
        if *slot {
            return Err(Error::Records(format!("face {} removed twice", r.face)));
        }
        *slot = true;
    }
    let survivors: Vec<usize> = (0..pre).filter(|&f| !removed[f]).collect();
    if survivors.len() != post_faces.len() {
        return Err(Error::Records(format!(
            "records leave {} faces, pooled mesh has {}",
            survivors.len(),
            post_faces.len()
        )));
    }
    let mut slots = vec![None; pre];
    let mut rows: Vec<Option<SparseRow>> = vec![None; pre];
    for (k, &f) in survivors.iter().enumerate() {
        slots[f] = Some(post_faces[k]);
        rows[f] = Some(vec![(k as u32, 1.0)]);
    }
    let mut work = WorkMesh::new(slots, vertex_count)?;

    for record in layer.records.iter().rev() {
        work.undo(record)?;
        let restored: Vec<u32> = record.removed_faces.iter().map(|r| r.face).collect();
        let mut pending = Vec::new();
        // first pass: faces with at least one neighbor that was already present
        for &f in &restored {
            let known: Vec<&SparseRow> = work
                .neighbors(f)
                .into_iter()
                .filter(|g| !restored.contains(g))
                .filter_map(|g| rows[g as usize].as_ref())
                .collect();
            if known.is_empty() {
                pending.push(f);
            } else {
                rows[f as usize] = Some(mean_of_rows(known));
            }
        }
        // second pass: faces surrounded by restored faces only
        for f in pending {
            let known: Vec<SparseRow> = work
                .neighbors(f)
                .into_iter()
                .filter_map(|g| rows[g as usize].clone())
                .collect();
            rows[f as usize] = Some(mean_of_rows(known.iter()));
        }
    }

    let mut faces = Vec::with_capacity(pre);
    for f in 0..pre as u32 {
        faces.push(
            work.face(f)
                .ok_or_else(|| Error::Records(format!("face {f} was never restored")))?,
        );
    }
    let rows = rows.into_iter().map(|r| r.unwrap_or_default()).collect();
    Ok((faces, SparseMap::from_rows(rows, post_faces.len())))
}

pub fn unpool(mesh: &Mesh, features: &Array2<f64>, layer: &PoolLayer) -> Result<UnpoolOutput> {
    check_rows(mesh, features)?;
    let (faces, map) = unpool_topology(mesh.faces(), mesh.num_vertices(), layer)?;
    let features = map.apply(features)?;
    Ok(UnpoolOutput {
        mesh: Mesh::new(mesh.vertices().to_vec(), faces)?,
        features,
        map,
    })
}
