//! Collapse records and their little-endian binary encoding.
//!
//! ```text
//! stack  := "PRS1" vertex_count:u32 layer_count:u32 layer*
//! layer  := pre_faces:u32 post_faces:u32 record_count:u32 record*
//! record := kept:u32 removed:u32 u32
//!           n_removed:u8  (face:u32 v:u32 v:u32 v:u32)*
//!           n_modified:u16 (face:u32 orig:3*u32 rewritten:3*u32)*
//! ```
//!
//! Face ids are those of the mesh the layer was pooled from. Vertex ids are
//! global: pooling never renumbers vertices.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemovedFace {
    pub face: u32,
    pub vertices: [u32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModifiedFace {
    pub face: u32,
    pub original: [u32; 3],
    pub rewritten: [u32; 3],
}

/// Everything needed to undo one face collapse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollapseRecord {
    pub kept_vertex: u32,
    pub removed_vertices: [u32; 2],
    pub removed_faces: Vec<RemovedFace>,
    pub modified_faces: Vec<ModifiedFace>,
}

impl CollapseRecord {
    /// The collapsed face: the removed face holding all three vertices.
    pub fn central_face(&self) -> Option<u32> {
        let [b, c] = self.removed_vertices;
        self.removed_faces
            .iter()
            .find(|r| {
                r.vertices.contains(&self.kept_vertex)
                    && r.vertices.contains(&b)
                    && r.vertices.contains(&c)
            })
            .map(|r| r.face)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PoolLayer {
    pub pre_faces: u32,
    pub post_faces: u32,
    pub records: Vec<CollapseRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PoolRecordStack {
    pub vertex_count: u32,
    pub layers: Vec<PoolLayer>,
}

const MAGIC: &[u8; 4] = b"PRS1";

impl PoolRecordStack {
    pub fn total_records(&self) -> usize {
        self.layers.iter().map(|l| l.records.len()).sum()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<()> {
        out.extend_from_slice(MAGIC);
        put_u32(out, self.vertex_count);
        put_u32(out, self.layers.len() as u32);
        for layer in &self.layers {
            put_u32(out, layer.pre_faces);
            put_u32(out, layer.post_faces);
            put_u32(out, layer.records.len() as u32);
            for r in &layer.records {
                put_u32(out, r.kept_vertex);
                put_u32(out, r.removed_vertices[0]);
                put_u32(out, r.removed_vertices[1]);
                let n_removed = u8::try_from(r.removed_faces.len())
                    .map_err(|_| Error::Records("more than 255 removed faces in one record".into()))?;
                out.push(n_removed);
                for f in &r.removed_faces {
                    put_u32(out, f.face);
                    f.vertices.iter().for_each(|&v| put_u32(out, v));
                }
                let n_modified = u16::try_from(r.modified_faces.len())
                    .map_err(|_| Error::Records("more than 65535 modified faces in one record".into()))?;
                out.extend_from_slice(&n_modified.to_le_bytes());
                for f in &r.modified_faces {
                    put_u32(out, f.face);
                    f.original.iter().for_each(|&v| put_u32(out, v));
                    f.rewritten.iter().for_each(|&v| put_u32(out, v));
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let stack = Self::read_from(&mut r)?;
        if !r.is_empty() {
            return Err(Error::Records(format!("{} trailing bytes", r.remaining())));
        }
        Ok(stack)
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        if r.take(4)? != MAGIC {
            return Err(Error::Records("bad magic, expected PRS1".into()));
        }
        let vertex_count = r.u32()?;
        let layer_count = r.u32()?;
        let mut layers = Vec::new();
        for _ in 0..layer_count {
            let pre_faces = r.u32()?;
            let post_faces = r.u32()?;
            let count = r.u32()?;
            let mut records = Vec::new();
            for _ in 0..count {
                let kept_vertex = r.u32()?;
                let removed_vertices = [r.u32()?, r.u32()?];
                let n_removed = r.u8()?;
                let mut removed_faces = Vec::with_capacity(n_removed as usize);
                for _ in 0..n_removed {
                    removed_faces.push(RemovedFace {
                        face: r.u32()?,
                        vertices: r.triple()?,
                    });
                }
                let n_modified = r.u16()?;
                let mut modified_faces = Vec::with_capacity(n_modified as usize);
                for _ in 0..n_modified {
                    modified_faces.push(ModifiedFace {
                        face: r.u32()?,
                        original: r.triple()?,
                        rewritten: r.triple()?,
                    });
                }
                records.push(CollapseRecord {
                    kept_vertex,
                    removed_vertices,
                    removed_faces,
                    modified_faces,
                });
            }
            layers.push(PoolLayer {
                pre_faces,
                post_faces,
                records,
            });
        }
        Ok(PoolRecordStack {
            vertex_count,
            layers,
        })
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Records(format!(
                "truncated input at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn triple(&mut self) -> Result<[u32; 3]> {
        Ok([self.u32()?, self.u32()?, self.u32()?])
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.remaining() == 0
    }
}
