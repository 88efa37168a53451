use crate::Mesh;

/// A face and up to `K` surrounding faces gathered breadth-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub center: u32,
    pub members: Vec<u32>,
}

/// Rings are expanded outward from `face`; each ring is taken in ascending face
/// id and the result is truncated to `k` members.
pub fn build_patch(mesh: &Mesh, face: usize, k: usize) -> Patch {
    let adjacency = mesh.adjacency();
    let mut visited = vec![false; mesh.num_faces()];
    visited[face] = true;
    let mut members = Vec::with_capacity(k);
    let mut ring = vec![face as u32];
    while members.len() < k && !ring.is_empty() {
        let mut next: Vec<u32> = ring
            .iter()
            .flat_map(|&f| adjacency[f as usize].iter().copied())
            .filter(|&g| !visited[g as usize])
            .collect();
        next.sort_unstable();
        next.dedup();
        for &g in &next {
            visited[g as usize] = true;
        }
        let take = (k - members.len()).min(next.len());
        members.extend_from_slice(&next[..take]);
        ring = next;
    }
    Patch {
        center: face as u32,
        members,
    }
}

pub fn build_patches(mesh: &Mesh, k: usize) -> Vec<Patch> {
    (0..mesh.num_faces()).map(|f| build_patch(mesh, f, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn tetrahedron_patches() {
        let t = shapes::tetrahedron();
        assert_eq!(build_patch(&t, 0, 3).members, vec![1, 2, 3]);
        assert_eq!(build_patch(&t, 0, 6).members, vec![1, 2, 3]);
    }

    #[test]
    fn strip_rings() {
        // adjacency of the strip is the chain 0-1-2-3-4-5
        let s = shapes::strip(3);
        assert_eq!(build_patch(&s, 2, 5).members, vec![1, 3, 0, 4, 5]);
        assert_eq!(build_patch(&s, 2, 3).members, vec![1, 3, 0]);
        assert_eq!(build_patch(&s, 0, 2).members, vec![1, 2]);
    }

    #[test]
    fn members_exclude_center_and_are_distinct() {
        let m = shapes::icosphere(1);
        for f in 0..m.num_faces() {
            let p = build_patch(&m, f, 9);
            assert_eq!(p.members.len(), 9);
            let mut s = p.members.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 9);
            assert!(!s.contains(&(f as u32)));
            // the first three are the direct neighbors
            let mut direct = p.members[..3].to_vec();
            direct.sort_unstable();
            assert_eq!(direct, m.neighbors(f));
        }
    }
}
