use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    /// Latent budget in scalars; the base mesh keeps at most `m / 3` vertices.
    pub m: usize,
    /// Patch size of every face convolution.
    pub k: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub conv_bias: bool,
    /// With pooling off the encoder keeps the input connectivity.
    pub pooling: bool,
    pub init_gain: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            m: 512,
            k: 6,
            encoder_widths: vec![32, 64, 128],
            decoder_widths: vec![128, 64, 32],
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            conv_bias: true,
            pooling: true,
            init_gain: 1.0,
        }
    }
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m < 12 {
            return fail(format!("m must be at least 12, got {}", self.m));
        }
        if self.k == 0 {
            return fail("k must be positive".into());
        }
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return fail("encoder and decoder widths must be non-empty".into());
        }
        if self.encoder_widths.len() != self.decoder_widths.len() {
            return fail(format!(
                "encoder depth {} differs from decoder depth {}",
                self.encoder_widths.len(),
                self.decoder_widths.len()
            ));
        }
        if self.encoder_widths.iter().chain(&self.decoder_widths).any(|&w| w == 0) {
            return fail("layer widths must be positive".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return fail(format!("bn_momentum must be in (0, 1], got {}", self.bn_momentum));
        }
        if !(self.bn_eps > 0.0 && self.bn_eps.is_finite()) {
            return fail(format!("bn_eps must be positive, got {}", self.bn_eps));
        }
        if !(self.init_gain > 0.0 && self.init_gain.is_finite()) {
            return fail(format!("init_gain must be positive, got {}", self.init_gain));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.encoder_widths.len()
    }

    pub fn vertex_budget(&self) -> usize {
        self.m / 3
    }

    /// Stable fingerprint of the configuration, stored in latent files and
    /// checkpoints to catch mismatched pairs.
    pub fn config_hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}
