//! Latent code files.
//!
//! Little-endian layout:
//!
//! ```text
//! "MAE1"  config hash u64
//! u32 base vertex count, then f32 x y z per vertex (ascending global id)
//! u32 base face count, then u32 a b c per face (global vertex ids)
//! pool record stack
//! ```

use std::path::Path;

use super::network::{referenced, Encoded, Model};
use crate::pool::{put_u32, PoolRecordStack, Reader};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MAE1";

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub config_hash: u64,
    /// The latent itself: base-mesh vertex coordinates.
    pub base_vertices: Vec<[f32; 3]>,
    pub base_faces: Vec<[u32; 3]>,
    /// Connectivity side channel.
    pub records: PoolRecordStack,
}

impl LatentCode {
    pub fn from_encoded(encoded: &Encoded, config_hash: u64) -> Self {
        let base_vertices = encoded
            .base_vertex_ids()
            .iter()
            .map(|&v| encoded.base_vertices[v as usize].map(|c| c as f32))
            .collect();
        LatentCode {
            config_hash,
            base_vertices,
            base_faces: encoded.base_faces.clone(),
            records: encoded.records.clone(),
        }
    }

    /// Scalars in the latent proper, excluding the side channel.
    pub fn latent_scalars(&self) -> usize {
        3 * self.base_vertices.len()
    }

    pub fn record_bytes(&self) -> Result<usize> {
        Ok(self.records.to_bytes()?.len())
    }

    /// Expands the stored vertices back to global ids.
    pub fn to_encoded(&self) -> Result<Encoded> {
        let n = self.records.vertex_count as usize;
        if let Some(&v) = self.base_faces.iter().flatten().find(|&&v| v as usize >= n) {
            return Err(Error::Format(format!(
                "base face uses vertex {v}, code covers {n} vertices"
            )));
        }
        let ids = referenced(&self.base_faces, n);
        if ids.len() != self.base_vertices.len() {
            return Err(Error::Format(format!(
                "base faces reference {} vertices, code stores {}",
                ids.len(),
                self.base_vertices.len()
            )));
        }
        let mut base_vertices = vec![[0.0; 3]; n];
        for (&v, p) in ids.iter().zip(&self.base_vertices) {
            base_vertices[v as usize] = p.map(f64::from);
        }
        Ok(Encoded {
            base_faces: self.base_faces.clone(),
            base_vertices,
            records: self.records.clone(),
            targets_met: true,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        put_u32(&mut out, self.base_vertices.len() as u32);
        for p in &self.base_vertices {
            for c in p {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        put_u32(&mut out, self.base_faces.len() as u32);
        for f in &self.base_faces {
            f.iter().for_each(|&v| put_u32(&mut out, v));
        }
        self.records.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |e: Error| Error::Format(format!("latent file: {e}"));
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(fmt)? != MAGIC {
            return Err(Error::Format("not a latent file (bad magic)".into()));
        }
        let config_hash = r.u64().map_err(fmt)?;
        let nv = r.u32().map_err(fmt)? as usize;
        let mut base_vertices = Vec::with_capacity(nv.min(r.remaining() / 12));
        for _ in 0..nv {
            base_vertices.push([r.f32().map_err(fmt)?, r.f32().map_err(fmt)?, r.f32().map_err(fmt)?]);
        }
        let nf = r.u32().map_err(fmt)? as usize;
        let mut base_faces = Vec::with_capacity(nf.min(r.remaining() / 12));
        for _ in 0..nf {
            base_faces.push(r.triple().map_err(fmt)?);
        }
        let records = PoolRecordStack::read_from(&mut r).map_err(fmt)?;
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes in latent file", r.remaining())));
        }
        Ok(LatentCode {
            config_hash,
            base_vertices,
            base_faces,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

impl Model {
    pub fn encode_latent(&self, mesh: &crate::Mesh) -> Result<LatentCode> {
        Ok(LatentCode::from_encoded(&self.encode(mesh)?, self.config.config_hash()))
    }

    /// Fails with [`Error::VersionMismatch`] when the code was produced under
    /// a different architecture.
    pub fn decode_latent(&self, code: &LatentCode) -> Result<crate::Mesh> {
        let expected = self.config.config_hash();
        if code.config_hash != expected {
            return Err(Error::VersionMismatch(format!(
                "latent was encoded with config {:016x}, checkpoint has {:016x}",
                code.config_hash, expected
            )));
        }
        self.decode(&code.to_encoded()?)
    }
}
