//! Checkpoint files: a text manifest followed by a raw payload.
//!
//! ```text
//! meshcodec-checkpoint 1
//! dtype f64le
//! step 1200
//! config {"m":512,...}
//! optimizer {"lr":0.001,...} 1200
//! tensor enc.0.conv.w0 32x9 0 288
//! ...
//! end
//! <payload>
//! ```
//!
//! Tensor lines give name, shape, element offset and element count into the
//! payload. The optimizer line and the `adam.m.*` / `adam.v.*` tensors are
//! present only when optimizer state was saved.

use std::collections::HashMap;
use std::path::Path;

use super::config::ArchitectureConfig;
use super::network::{ConvBlock, Model};
use crate::kernels::{Adam, AdamConfig, Linear};
use crate::{Error, Result};

const HEADER: &str = "meshcodec-checkpoint 1";
const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub step: u64,
    pub optimizer: Option<Adam>,
}

fn block_shapes(prefix: &str, b: &ConvBlock, out: &mut Vec<(String, Vec<usize>)>) {
    for i in 0..4 {
        out.push((format!("{prefix}.conv.w{i}"), b.conv.w[i].shape().to_vec()));
    }
    if let Some(bias) = &b.conv.bias {
        out.push((format!("{prefix}.conv.bias"), vec![bias.len()]));
    }
    out.push((format!("{prefix}.bn.gamma"), vec![b.bn.channels()]));
    out.push((format!("{prefix}.bn.beta"), vec![b.bn.channels()]));
}

fn head_shapes(prefix: &str, l: &Linear, out: &mut Vec<(String, Vec<usize>)>) {
    out.push((format!("{prefix}.weight"), l.weight.shape().to_vec()));
    if let Some(b) = &l.bias {
        out.push((format!("{prefix}.bias"), vec![b.len()]));
    }
}

/// Shapes of [`Model::params`], in the same order.
pub fn param_shapes(model: &Model) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (i, b) in model.encoder.iter().enumerate() {
        block_shapes(&format!("enc.{i}"), b, &mut out);
    }
    head_shapes("enc.head", &model.encoder_head, &mut out);
    for (i, b) in model.decoder.iter().enumerate() {
        block_shapes(&format!("dec.{i}"), b, &mut out);
    }
    head_shapes("dec.head", &model.decoder_head, &mut out);
    out
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint {
            model,
            step: 0,
            optimizer: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries: Vec<(String, String, &[f64])> = Vec::new();
        let shapes = param_shapes(&self.model);
        for ((name, data), (_, shape)) in self.model.params().into_iter().zip(&shapes) {
            entries.push((name, shape_str(shape), data));
        }
        for (name, data) in self.model.buffers() {
            entries.push((name, data.len().to_string(), data));
        }
        if let Some(adam) = &self.optimizer {
            if adam.m.len() != shapes.len() {
                return Err(Error::Format("optimizer state does not match the model".into()));
            }
            for (kind, moments) in [("m", &adam.m), ("v", &adam.v)] {
                for ((name, shape), data) in shapes.iter().zip(moments.iter()) {
                    entries.push((format!("adam.{kind}.{name}"), shape_str(shape), data));
                }
            }
        }

        let mut manifest = format!("{HEADER}\ndtype {DTYPE}\nstep {}\n", self.step);
        manifest.push_str(&format!(
            "config {}\n",
            serde_json::to_string(&self.model.config).map_err(|e| Error::Format(e.to_string()))?
        ));
        if let Some(adam) = &self.optimizer {
            manifest.push_str(&format!(
                "optimizer {} {}\n",
                serde_json::to_string(&adam.config).map_err(|e| Error::Format(e.to_string()))?,
                adam.step
            ));
        }
        let mut offset = 0;
        for (name, shape, data) in &entries {
            manifest.push_str(&format!("tensor {name} {shape} {offset} {}\n", data.len()));
            offset += data.len();
        }
        manifest.push_str("end\n");
        let mut out = manifest.into_bytes();
        out.reserve(offset * 8);
        for (_, _, data) in &entries {
            for v in *data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: String| Error::Format(format!("checkpoint: {m}"));
        if !bytes.starts_with(HEADER.as_bytes()) {
            return Err(Error::VersionMismatch("not a version 1 checkpoint".into()));
        }
        let end = bytes
            .windows(5)
            .position(|w| w == b"\nend\n")
            .ok_or_else(|| fmt("manifest has no end line".into()))?;
        let manifest = std::str::from_utf8(&bytes[..end]).map_err(|_| fmt("manifest is not UTF-8".into()))?;
        let payload = &bytes[end + 5..];
        if !payload.len().is_multiple_of(8) {
            return Err(fmt("payload length is not a multiple of 8".into()));
        }
        let mut lines = manifest.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::VersionMismatch("not a version 1 checkpoint".into()));
        }
        let mut step = None;
        let mut config = None;
        let mut optimizer = None;
        let mut tensors: HashMap<&str, (&str, usize, usize)> = HashMap::new();
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "dtype" if rest == DTYPE => {}
                "dtype" => return Err(fmt(format!("unsupported dtype {rest}"))),
                "step" => step = Some(rest.parse::<u64>().map_err(|e| fmt(e.to_string()))?),
                "config" => {
                    config = Some(
                        serde_json::from_str::<ArchitectureConfig>(rest)
                            .map_err(|e| Error::VersionMismatch(format!("checkpoint config: {e}")))?,
                    )
                }
                "optimizer" => {
                    let (json, adam_step) =
                        rest.rsplit_once(' ').ok_or_else(|| fmt("bad optimizer line".into()))?;
                    let cfg: AdamConfig = serde_json::from_str(json).map_err(|e| fmt(e.to_string()))?;
                    optimizer = Some((cfg, adam_step.parse::<u64>().map_err(|e| fmt(e.to_string()))?));
                }
                "tensor" => {
                    let parts: Vec<&str> = rest.split(' ').collect();
                    let [name, shape, off, len] = parts[..] else {
                        return Err(fmt(format!("bad tensor line '{line}'")));
                    };
                    let off = off.parse().map_err(|_| fmt(format!("bad offset in '{line}'")))?;
                    let len = len.parse().map_err(|_| fmt(format!("bad length in '{line}'")))?;
                    if tensors.insert(name, (shape, off, len)).is_some() {
                        return Err(fmt(format!("duplicate tensor {name}")));
                    }
                }
                other => return Err(fmt(format!("unknown manifest key '{other}'"))),
            }
        }
        let config = config.ok_or_else(|| fmt("missing config".into()))?;
        let step = step.ok_or_else(|| fmt("missing step".into()))?;
        let mut model = Model::new(config, 0)?;
        let value_count = payload.len() / 8;

        let read = |name: &str, shape: &str, len: usize| -> Result<Vec<f64>> {
            let &(s, off, n) = tensors.get(name).ok_or_else(|| fmt(format!("missing tensor {name}")))?;
            if s != shape || n != len {
                return Err(Error::VersionMismatch(format!(
                    "tensor {name} is {s} ({n} values), model expects {shape} ({len} values)"
                )));
            }
            if off + n > value_count {
                return Err(fmt(format!("tensor {name} runs past the payload")));
            }
            Ok(payload[off * 8..(off + n) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };

        let shapes = param_shapes(&model);
        let values: Vec<Vec<f64>> = shapes
            .iter()
            .map(|(name, shape)| read(name, &shape_str(shape), shape.iter().product()))
            .collect::<Result<_>>()?;
        for (dst, src) in model.params_mut().into_iter().zip(values) {
            dst.copy_from_slice(&src);
        }
        let buffers: Vec<Vec<f64>> = model
            .buffers()
            .iter()
            .map(|(name, data)| read(name, &data.len().to_string(), data.len()))
            .collect::<Result<_>>()?;
        for (dst, src) in model.buffers_mut().into_iter().zip(buffers) {
            dst.copy_from_slice(&src);
        }
        let optimizer = match optimizer {
            None => None,
            Some((cfg, adam_step)) => {
                let moment = |kind: &str| -> Result<Vec<Vec<f64>>> {
                    shapes
                        .iter()
                        .map(|(name, shape)| {
                            read(&format!("adam.{kind}.{name}"), &shape_str(shape), shape.iter().product())
                        })
                        .collect()
                };
                Some(Adam {
                    config: cfg,
                    step: adam_step,
                    m: moment("m")?,
                    v: moment("v")?,
                })
            }
        };
        Ok(Checkpoint {
            model,
            step,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
