//! Mutable face soup used while pooling and unpooling. Face ids are stable
//! slots; vertex ids are global.

use std::collections::BTreeMap;

use super::records::{CollapseRecord, ModifiedFace, RemovedFace};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct WorkMesh {
    faces: Vec<Option<[u32; 3]>>,
    /// Sorted ids of the live faces touching each vertex.
    incidence: Vec<Vec<u32>>,
    alive_faces: usize,
    alive_vertices: usize,
}

/// Why a collapse was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// The face slot is empty.
    Missing,
    /// Two surviving faces would share the same vertex set.
    DuplicateFace,
    /// An edge would gain more than two faces where none of the merged edges
    /// had that many before.
    NonManifoldEdge,
    /// Nothing would remain around the kept vertex.
    Vanishing,
    /// The record would not fit its binary encoding.
    TooLarge,
}

#[derive(Debug, Clone)]
pub(crate) struct CollapsePlan {
    pub record: CollapseRecord,
    /// Removed and modified face ids, ascending.
    pub footprint: Vec<u32>,
}

fn sorted3(mut t: [u32; 3]) -> [u32; 3] {
    t.sort_unstable();
    t
}

fn insert_sorted(list: &mut Vec<u32>, v: u32) {
    if let Err(pos) = list.binary_search(&v) {
        list.insert(pos, v);
    }
}

fn remove_sorted(list: &mut Vec<u32>, v: u32) {
    if let Ok(pos) = list.binary_search(&v) {
        list.remove(pos);
    }
}

impl WorkMesh {
    pub fn new(slots: Vec<Option<[u32; 3]>>, vertex_count: usize) -> Result<Self> {
        let mut w = WorkMesh {
            faces: vec![None; slots.len()],
            incidence: vec![Vec::new(); vertex_count],
            alive_faces: 0,
            alive_vertices: 0,
        };
        for (f, tri) in slots.into_iter().enumerate() {
            if let Some(t) = tri {
                w.insert(f as u32, t)?;
            }
        }
        Ok(w)
    }

    pub fn from_faces(faces: &[[u32; 3]], vertex_count: usize) -> Result<Self> {
        Self::new(faces.iter().map(|&t| Some(t)).collect(), vertex_count)
    }

    pub fn slots(&self) -> usize {
        self.faces.len()
    }

    pub fn face(&self, f: u32) -> Option<[u32; 3]> {
        self.faces.get(f as usize).copied().flatten()
    }

    pub fn alive_faces(&self) -> usize {
        self.alive_faces
    }

    pub fn alive_vertices(&self) -> usize {
        self.alive_vertices
    }

    pub fn live_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.faces
            .iter()
            .enumerate()
            .filter_map(|(f, t)| t.map(|_| f as u32))
    }

    pub fn live_faces(&self) -> Vec<[u32; 3]> {
        self.faces.iter().filter_map(|t| *t).collect()
    }

    pub fn insert(&mut self, f: u32, t: [u32; 3]) -> Result<()> {
        let slot = self
            .faces
            .get_mut(f as usize)
            .ok_or_else(|| Error::Records(format!("face id {f} out of range")))?;
        if slot.is_some() {
            return Err(Error::Records(format!("face id collision at {f}")));
        }
        if let Some(&v) = t.iter().find(|&&v| v as usize >= self.incidence.len()) {
            return Err(Error::Records(format!("vertex id {v} out of range")));
        }
        *slot = Some(t);
        self.alive_faces += 1;
        for v in t {
            let list = &mut self.incidence[v as usize];
            if list.is_empty() {
                self.alive_vertices += 1;
            }
            insert_sorted(list, f);
        }
        Ok(())
    }

    pub fn remove(&mut self, f: u32) -> Option<[u32; 3]> {
        let t = self.faces.get_mut(f as usize)?.take()?;
        self.alive_faces -= 1;
        for v in t {
            let list = &mut self.incidence[v as usize];
            remove_sorted(list, f);
            if list.is_empty() {
                self.alive_vertices -= 1;
            }
        }
        Some(t)
    }

    pub fn rewrite(&mut self, f: u32, t: [u32; 3]) -> Result<()> {
        self.remove(f)
            .ok_or_else(|| Error::Records(format!("rewrite of missing face {f}")))?;
        self.insert(f, t)
    }

    /// Live faces sharing an edge with `f`, ascending.
    pub fn neighbors(&self, f: u32) -> Vec<u32> {
        let Some(t) = self.face(f) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let (la, lb) = (&self.incidence[a as usize], &self.incidence[b as usize]);
            let (mut i, mut j) = (0, 0);
            while i < la.len() && j < lb.len() {
                match la[i].cmp(&lb[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        if la[i] != f {
                            out.push(la[i]);
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Works out the collapse of face `f` (vertices `b`, `c` merged into the
    /// smallest id `a`) without mutating anything.
    pub fn plan_collapse(&self, f: u32) -> Result<CollapsePlan, Rejection> {
        let tri = self.face(f).ok_or(Rejection::Missing)?;
        let s = sorted3(tri);
        let (a, b, c) = (s[0], s[1], s[2]);
        let trio = [a, b, c];

        let mut affected: Vec<u32> = [a, b, c]
            .iter()
            .flat_map(|&v| self.incidence[v as usize].iter().copied())
            .collect();
        affected.sort_unstable();
        affected.dedup();

        let mut removed = Vec::new();
        let mut modified = Vec::new();
        let mut survivors: Vec<[u32; 3]> = Vec::new();
        let mut rewritten_sets: Vec<[u32; 3]> = Vec::new();
        let mut unchanged_sets: Vec<[u32; 3]> = Vec::new();
        for &g in &affected {
            let t = self.faces[g as usize].expect("incidence lists only live faces");
            let hits = t.iter().filter(|v| trio.contains(v)).count();
            if hits >= 2 {
                removed.push(RemovedFace { face: g, vertices: t });
            } else if t.contains(&b) || t.contains(&c) {
                let r = t.map(|v| if v == b || v == c { a } else { v });
                modified.push(ModifiedFace {
                    face: g,
                    original: t,
                    rewritten: r,
                });
                survivors.push(r);
                rewritten_sets.push(sorted3(r));
            } else {
                survivors.push(t);
                unchanged_sets.push(sorted3(t));
            }
        }
        if survivors.is_empty() {
            return Err(Rejection::Vanishing);
        }
        if removed.len() > u8::MAX as usize || modified.len() > u16::MAX as usize {
            return Err(Rejection::TooLarge);
        }

        // every duplicate involves at least one rewritten face
        for (i, r) in rewritten_sets.iter().enumerate() {
            if rewritten_sets[i + 1..].contains(r) || unchanged_sets.contains(r) {
                return Err(Rejection::DuplicateFace);
            }
        }

        // edge valence around the kept vertex before and after
        let count_edge = |p: u32, q: u32| -> usize {
            affected
                .iter()
                .filter(|&&g| {
                    let t = self.faces[g as usize].unwrap();
                    t.contains(&p) && t.contains(&q)
                })
                .count()
        };
        let mut after: BTreeMap<u32, usize> = BTreeMap::new();
        for t in &survivors {
            for &v in t {
                if v != a {
                    *after.entry(v).or_insert(0) += 1;
                }
            }
        }
        for (&d, &n) in &after {
            if n > 2 {
                let before = count_edge(a, d).max(count_edge(b, d)).max(count_edge(c, d));
                if n > before {
                    return Err(Rejection::NonManifoldEdge);
                }
            }
        }

        let mut footprint: Vec<u32> = removed
            .iter()
            .map(|r| r.face)
            .chain(modified.iter().map(|m| m.face))
            .collect();
        footprint.sort_unstable();
        Ok(CollapsePlan {
            record: CollapseRecord {
                kept_vertex: a,
                removed_vertices: [b, c],
                removed_faces: removed,
                modified_faces: modified,
            },
            footprint,
        })
    }

    /// Applies a plan made against the current state.
    pub fn apply(&mut self, record: &CollapseRecord) -> Result<()> {
        for r in &record.removed_faces {
            self.remove(r.face)
                .ok_or_else(|| Error::Records(format!("removed face {} missing", r.face)))?;
        }
        for m in &record.modified_faces {
            self.rewrite(m.face, m.rewritten)?;
        }
        Ok(())
    }

    /// Reverses [`WorkMesh::apply`], checking that the current state matches.
    pub fn undo(&mut self, record: &CollapseRecord) -> Result<()> {
        for m in &record.modified_faces {
            match self.face(m.face) {
                Some(t) if t == m.rewritten => self.rewrite(m.face, m.original)?,
                other => {
                    return Err(Error::Records(format!(
                        "face {} is {:?}, record expects {:?}",
                        m.face, other, m.rewritten
                    )))
                }
            }
        }
        for r in &record.removed_faces {
            self.insert(r.face, r.vertices)?;
        }
        Ok(())
    }
}
