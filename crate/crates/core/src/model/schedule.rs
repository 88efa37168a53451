use crate::pool::PoolTarget;

/// Per-stage pooling targets for one mesh.
///
/// The total removal is `T = (V - v_min) * 2` faces, from the closed-mesh
/// relation of two faces lost per vertex. Every stage but the last removes
/// `ceil(T / n)` faces rounded up to a multiple of 4; the last pools until the
/// vertex floor `v_min` is reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolingSchedule {
    pub v_min: usize,
    pub total_removal: usize,
    pub per_stage: usize,
    /// One face target per stage, strictly decreasing unless clamped at 4.
    pub face_targets: Vec<usize>,
}

pub fn make_schedule(faces: usize, vertices: usize, m: usize, stages: usize) -> PoolingSchedule {
    let v_min = m / 3;
    if vertices <= v_min || stages == 0 {
        return PoolingSchedule {
            v_min,
            total_removal: 0,
            per_stage: 0,
            face_targets: Vec::new(),
        };
    }
    let total = (vertices - v_min) * 2;
    let per_stage = total.div_ceil(stages).div_ceil(4) * 4;
    let floor = faces.saturating_sub(total).max(4);
    let face_targets = (1..=stages)
        .map(|i| faces.saturating_sub(i * per_stage).max(floor))
        .collect();
    PoolingSchedule {
        v_min,
        total_removal: total,
        per_stage,
        face_targets,
    }
}

impl PoolingSchedule {
    pub fn is_empty(&self) -> bool {
        self.face_targets.is_empty()
    }

    /// Pool target for stage `i`; `None` when the mesh already fits.
    pub fn target(&self, i: usize) -> Option<PoolTarget> {
        let last = self.face_targets.len().checked_sub(1)?;
        match i.cmp(&last) {
            std::cmp::Ordering::Less => Some(PoolTarget {
                max_faces: self.face_targets[i],
                min_vertices: self.v_min,
            }),
            std::cmp::Ordering::Equal => Some(PoolTarget {
                max_faces: 0,
                min_vertices: self.v_min,
            }),
            std::cmp::Ordering::Greater => None,
        }
    }
}
