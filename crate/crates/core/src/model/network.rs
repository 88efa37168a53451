//! Encoder/decoder assembly with an explicit tape for the backward pass.
//!
//! Meshes in a batch keep their own graphs, but batch norm normalizes the
//! stacked face rows of the whole batch at each block, so the forward and
//! backward passes step through the batch one block at a time.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ArchitectureConfig;
use super::schedule::make_schedule;
use crate::kernels::conv::{self, ConvCache};
use crate::kernels::{
    build_patches, mse_loss, relu, relu_backward, BatchNorm, BatchNormCache, BnMode, ConvWeights,
    Linear, Patch,
};
use crate::pool::{self, PoolLayer, PoolRecordStack};
use crate::reconstruct::{
    extract_geom_features, gather_backward, gather_features, reconstruct_backward,
    reconstruct_vertices, GEOM_CHANNELS,
};
use crate::sparse::SparseMap;
use crate::{Error, Mesh, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv: ConvWeights,
    pub bn: BatchNorm,
}

impl ConvBlock {
    fn zeros_like(&self) -> Self {
        ConvBlock {
            conv: self.conv.zeros_like(),
            bn: BatchNorm {
                gamma: ndarray::Array1::zeros(self.bn.channels()),
                beta: ndarray::Array1::zeros(self.bn.channels()),
                ..self.bn.clone()
            },
        }
    }
}

/// All learnable parameters and batch-norm statistics. A gradient has the
/// same type; its running statistics are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ArchitectureConfig,
    pub encoder: Vec<ConvBlock>,
    pub encoder_head: Linear,
    pub decoder: Vec<ConvBlock>,
    pub decoder_head: Linear,
}

fn block_params<'a>(prefix: &str, b: &'a ConvBlock, out: &mut Vec<(String, &'a [f64])>) {
    for (i, w) in b.conv.w.iter().enumerate() {
        out.push((format!("{prefix}.conv.w{i}"), w.as_slice().unwrap()));
    }
    if let Some(bias) = &b.conv.bias {
        out.push((format!("{prefix}.conv.bias"), bias.as_slice().unwrap()));
    }
    out.push((format!("{prefix}.bn.gamma"), b.bn.gamma.as_slice().unwrap()));
    out.push((format!("{prefix}.bn.beta"), b.bn.beta.as_slice().unwrap()));
}

fn block_params_mut<'a>(b: &'a mut ConvBlock, out: &mut Vec<&'a mut [f64]>) {
    for w in b.conv.w.iter_mut() {
        out.push(w.as_slice_mut().unwrap());
    }
    if let Some(bias) = &mut b.conv.bias {
        out.push(bias.as_slice_mut().unwrap());
    }
    out.push(b.bn.gamma.as_slice_mut().unwrap());
    out.push(b.bn.beta.as_slice_mut().unwrap());
}

fn head_params<'a>(prefix: &str, l: &'a Linear, out: &mut Vec<(String, &'a [f64])>) {
    out.push((format!("{prefix}.weight"), l.weight.as_slice().unwrap()));
    if let Some(b) = &l.bias {
        out.push((format!("{prefix}.bias"), b.as_slice().unwrap()));
    }
}

fn head_params_mut<'a>(l: &'a mut Linear, out: &mut Vec<&'a mut [f64]>) {
    out.push(l.weight.as_slice_mut().unwrap());
    if let Some(b) = &mut l.bias {
        out.push(b.as_slice_mut().unwrap());
    }
}

impl Model {
    /// Randomly initialized model, reproducible from `seed`.
    pub fn new(config: ArchitectureConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = config.init_gain;
        let bias = config.conv_bias;
        let blocks = |widths: &[usize], rng: &mut ChaCha8Rng| -> Vec<ConvBlock> {
            let mut fan_in = GEOM_CHANNELS;
            widths
                .iter()
                .map(|&w| {
                    let b = ConvBlock {
                        conv: ConvWeights::init(rng, fan_in, w, bias, gain),
                        bn: BatchNorm::new(w, config.bn_eps, config.bn_momentum),
                    };
                    fan_in = w;
                    b
                })
                .collect()
        };
        let encoder = blocks(&config.encoder_widths, &mut rng);
        let encoder_head = Linear::init(&mut rng, *config.encoder_widths.last().unwrap(), GEOM_CHANNELS, bias, gain);
        let decoder = blocks(&config.decoder_widths, &mut rng);
        let decoder_head = Linear::init(&mut rng, *config.decoder_widths.last().unwrap(), GEOM_CHANNELS, bias, gain);
        Ok(Model {
            config,
            encoder,
            encoder_head,
            decoder,
            decoder_head,
        })
    }

    /// A model whose encoder and decoder both pass vertex coordinates
    /// through unchanged: every block maps its input to `[x, -x]`, so ReLU
    /// keeps both signs, and the heads recombine them. Needs every width to
    /// be at least 18; combined with `pooling: false` it reproduces the
    /// input mesh exactly.
    pub fn identity(config: ArchitectureConfig) -> Result<Self> {
        config.validate()?;
        if config
            .encoder_widths
            .iter()
            .chain(&config.decoder_widths)
            .any(|&w| w < 2 * GEOM_CHANNELS)
        {
            return Err(Error::Config(format!(
                "identity model needs widths of at least {}",
                2 * GEOM_CHANNELS
            )));
        }
        let mut model = Model::new(config, 0)?;
        let eps = model.config.bn_eps;
        // running variance such that var + eps is exactly one
        let mut var = 1.0 - eps;
        while var + eps > 1.0 {
            var = f64::from_bits(var.to_bits() - 1);
        }
        while var + eps < 1.0 {
            var = f64::from_bits(var.to_bits() + 1);
        }
        let set_block = |b: &mut ConvBlock, fan_in: usize| {
            let out = b.conv.fan_out();
            let mut z = ConvWeights::zeros(fan_in, out, b.conv.bias.is_some());
            for r in 0..GEOM_CHANNELS {
                z.w[0][[r, r]] = 1.0;
                z.w[0][[r + GEOM_CHANNELS, r]] = -1.0;
                if fan_in >= 2 * GEOM_CHANNELS {
                    z.w[0][[r, r + GEOM_CHANNELS]] = -1.0;
                    z.w[0][[r + GEOM_CHANNELS, r + GEOM_CHANNELS]] = 1.0;
                }
            }
            b.conv = z;
            b.bn.gamma.fill(1.0);
            b.bn.beta.fill(0.0);
            b.bn.running_mean.fill(0.0);
            b.bn.running_var.fill(var);
        };
        for blocks in [&mut model.encoder, &mut model.decoder] {
            let mut fan_in = GEOM_CHANNELS;
            for b in blocks.iter_mut() {
                set_block(b, fan_in);
                fan_in = b.conv.fan_out();
            }
        }
        for head in [&mut model.encoder_head, &mut model.decoder_head] {
            let mut l = Linear::zeros(head.fan_in(), GEOM_CHANNELS, head.bias.is_some());
            for r in 0..GEOM_CHANNELS {
                l.weight[[r, r]] = 1.0;
                l.weight[[r, r + GEOM_CHANNELS]] = -1.0;
            }
            *head = l;
        }
        Ok(model)
    }

    /// Same shapes, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        Model {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(ConvBlock::zeros_like).collect(),
            encoder_head: self.encoder_head.zeros_like(),
            decoder: self.decoder.iter().map(ConvBlock::zeros_like).collect(),
            decoder_head: self.decoder_head.zeros_like(),
        }
    }

    /// Learnable tensors in a fixed order, with stable names.
    pub fn params(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, b) in self.encoder.iter().enumerate() {
            block_params(&format!("enc.{i}"), b, &mut out);
        }
        head_params("enc.head", &self.encoder_head, &mut out);
        for (i, b) in self.decoder.iter().enumerate() {
            block_params(&format!("dec.{i}"), b, &mut out);
        }
        head_params("dec.head", &self.decoder_head, &mut out);
        out
    }

    /// Mutable view in the same order as [`Model::params`].
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for b in self.encoder.iter_mut() {
            block_params_mut(b, &mut out);
        }
        head_params_mut(&mut self.encoder_head, &mut out);
        for b in self.decoder.iter_mut() {
            block_params_mut(b, &mut out);
        }
        head_params_mut(&mut self.decoder_head, &mut out);
        out
    }

    /// Batch-norm running statistics, named like the parameters.
    pub fn buffers(&self) -> Vec<(String, &[f64])> {
        let blocks = self.encoder.iter().map(|b| ("enc", b)).enumerate();
        let dec = self.decoder.iter().map(|b| ("dec", b)).enumerate();
        blocks
            .chain(dec)
            .flat_map(|(i, (side, b))| {
                [
                    (format!("{side}.{i}.bn.running_mean"), b.bn.running_mean.as_slice().unwrap()),
                    (format!("{side}.{i}.bn.running_var"), b.bn.running_var.as_slice().unwrap()),
                ]
            })
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|b| {
                [
                    b.bn.running_mean.as_slice_mut().unwrap(),
                    b.bn.running_var.as_slice_mut().unwrap(),
                ]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    /// `self += other`, parameter by parameter.
    pub fn accumulate(&mut self, other: &Model) {
        let theirs: Vec<Vec<f64>> = other.params().into_iter().map(|(_, p)| p.to_vec()).collect();
        for (mine, theirs) in self.params_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }

    /// Applies the batch statistics a train-mode pass recorded.
    pub fn update_running_stats(&mut self, tape: &BatchTape) {
        if tape.mode != BnMode::Train {
            return;
        }
        for (b, n) in self.encoder.iter_mut().zip(&tape.encoder_norms) {
            b.bn.update_running(&n.cache.batch_mean, &n.cache.batch_var);
        }
        for (b, n) in self.decoder.iter_mut().zip(&tape.decoder_norms) {
            b.bn.update_running(&n.cache.batch_mean, &n.cache.batch_var);
        }
    }
}

/// One conv block applied to one mesh level.
#[derive(Debug, Clone)]
struct BlockTape {
    patches: Vec<Patch>,
    conv: ConvCache,
    activation: Array2<f64>,
}

#[derive(Debug, Clone)]
struct BlockNorm {
    cache: BatchNormCache,
    /// Row offsets of each mesh in the stacked matrix, length `batch + 1`.
    offsets: Vec<usize>,
}

fn split_rows(x: &Array2<f64>, offsets: &[usize]) -> Vec<Array2<f64>> {
    offsets
        .windows(2)
        .map(|w| x.slice(s![w[0]..w[1], ..]).to_owned())
        .collect()
}

fn stack(parts: &[Array2<f64>]) -> Result<Array2<f64>> {
    let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
}

fn offsets(parts: &[Array2<f64>]) -> Vec<usize> {
    let mut o = vec![0];
    for p in parts {
        o.push(o.last().unwrap() + p.nrows());
    }
    o
}

fn run_block(
    block: &ConvBlock,
    k: usize,
    meshes: &[&Mesh],
    inputs: Vec<Array2<f64>>,
    mode: BnMode,
) -> Result<(Vec<BlockTape>, BlockNorm)> {
    let convs: Vec<(Vec<Patch>, Array2<f64>, ConvCache)> = meshes
        .par_iter()
        .zip(inputs.into_par_iter())
        .map(|(mesh, x)| {
            let patches = build_patches(mesh, k);
            let (out, cache) = conv::forward(&x, &patches, &block.conv)?;
            Ok((patches, out, cache))
        })
        .collect::<Result<_>>()?;
    let outs: Vec<Array2<f64>> = convs.iter().map(|c| c.1.clone()).collect();
    let offs = offsets(&outs);
    let (normed, cache) = block.bn.forward(&stack(&outs)?, mode)?;
    let tapes = convs
        .into_iter()
        .zip(split_rows(&normed, &offs))
        .map(|((patches, _, conv), y)| BlockTape {
            patches,
            conv,
            activation: relu(&y),
        })
        .collect();
    Ok((tapes, BlockNorm { cache, offsets: offs }))
}

/// Returns the gradient with respect to each mesh's block input.
fn block_backward(
    block: &ConvBlock,
    tapes: &[BlockTape],
    norm: &BlockNorm,
    upstream: Vec<Array2<f64>>,
    grads: &mut ConvBlock,
) -> Result<Vec<Array2<f64>>> {
    let pre: Vec<Array2<f64>> = tapes
        .iter()
        .zip(&upstream)
        .map(|(t, g)| relu_backward(&t.activation, g))
        .collect();
    let (g_conv, g_gamma, g_beta) = block.bn.backward(&norm.cache, &stack(&pre)?)?;
    grads.bn.gamma += &g_gamma;
    grads.bn.beta += &g_beta;
    let parts = split_rows(&g_conv, &norm.offsets);
    let results: Vec<(Array2<f64>, ConvWeights)> = tapes
        .par_iter()
        .zip(parts.into_par_iter())
        .map(|(t, g)| conv::backward(&t.conv, &t.patches, &block.conv, &g))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(results.len());
    for (gx, gw) in results {
        for (a, b) in grads.conv.w.iter_mut().zip(&gw.w) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (&mut grads.conv.bias, &gw.bias) {
            *a += b;
        }
        out.push(gx);
    }
    Ok(out)
}

fn accumulate_linear(into: &mut Linear, g: &Linear) {
    into.weight += &g.weight;
    if let (Some(a), Some(b)) = (&mut into.bias, &g.bias) {
        *a += b;
    }
}

/// Encoder output for one mesh, in full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub base_faces: Vec<[u32; 3]>,
    /// Indexed by global vertex id; vertices the base mesh does not use are
    /// zero.
    pub base_vertices: Vec<[f64; 3]>,
    pub records: PoolRecordStack,
    /// False when some stage could not reach its pooling target.
    pub targets_met: bool,
}

impl Encoded {
    /// Latent vertex ids, ascending.
    pub fn base_vertex_ids(&self) -> Vec<u32> {
        referenced(&self.base_faces, self.base_vertices.len())
    }
}

pub(crate) fn referenced(faces: &[[u32; 3]], vertex_count: usize) -> Vec<u32> {
    let mut used = vec![false; vertex_count];
    for &v in faces.iter().flatten() {
        used[v as usize] = true;
    }
    (0..vertex_count as u32).filter(|&v| used[v as usize]).collect()
}

#[derive(Debug, Clone)]
struct EncoderTape {
    blocks: Vec<BlockTape>,
    pool_maps: Vec<SparseMap>,
    head_input: Array2<f64>,
}

#[derive(Debug, Clone)]
struct DecoderTape {
    unpool_maps: Vec<SparseMap>,
    blocks: Vec<BlockTape>,
    head_input: Array2<f64>,
    faces: Vec<[u32; 3]>,
}

type VertexSet = Vec<[f64; 3]>;

/// Everything a forward pass over a batch produced.
#[derive(Debug, Clone)]
pub struct BatchTape {
    pub mode: BnMode,
    /// Mean of the per-mesh losses.
    pub loss: f64,
    pub losses: Vec<f64>,
    pub encoded: Vec<Encoded>,
    pub outputs: Vec<Vec<[f64; 3]>>,
    targets: Vec<Vec<[f64; 3]>>,
    encoder_tapes: Vec<EncoderTape>,
    encoder_norms: Vec<BlockNorm>,
    decoder_tapes: Vec<DecoderTape>,
    decoder_norms: Vec<BlockNorm>,
}

impl Model {
    fn check_batch<T>(&self, items: &[T]) -> Result<()> {
        if items.is_empty() {
            return Err(Error::Empty("batch has no meshes".into()));
        }
        Ok(())
    }

    fn encode_batch(
        &self,
        meshes: &[Mesh],
        mode: BnMode,
        frozen: Option<&[PoolRecordStack]>,
    ) -> Result<(Vec<Encoded>, Vec<EncoderTape>, Vec<BlockNorm>)> {
        self.check_batch(meshes)?;
        if let Some(f) = frozen {
            if f.len() != meshes.len() {
                return Err(Error::Records(format!(
                    "{} record stacks for {} meshes",
                    f.len(),
                    meshes.len()
                )));
            }
            if f.iter().any(|s| s.layers.len() != self.encoder.len()) {
                return Err(Error::Records("record stack depth differs from the encoder".into()));
            }
        }
        let n = meshes.len();
        let stages = self.encoder.len();
        let schedules: Vec<_> = meshes
            .iter()
            .map(|m| make_schedule(m.num_faces(), m.referenced_vertex_count(), self.config.m, stages))
            .collect();
        let mut levels: Vec<Mesh> = meshes.to_vec();
        let mut feats: Vec<Array2<f64>> = meshes.par_iter().map(extract_geom_features).collect();
        let mut tapes: Vec<EncoderTape> = (0..n)
            .map(|_| EncoderTape {
                blocks: Vec::new(),
                pool_maps: Vec::new(),
                head_input: Array2::zeros((0, 0)),
            })
            .collect();
        let mut layers: Vec<Vec<PoolLayer>> = vec![Vec::new(); n];
        let mut met = vec![true; n];
        let mut norms = Vec::with_capacity(stages);

        for (i, block) in self.encoder.iter().enumerate() {
            let refs: Vec<&Mesh> = levels.iter().collect();
            let (blocks, norm) = run_block(block, self.config.k, &refs, feats, mode)?;
            norms.push(norm);
            let pooled: Vec<(Mesh, Array2<f64>, PoolLayer, SparseMap, bool)> = levels
                .par_iter()
                .zip(blocks.par_iter())
                .enumerate()
                .map(|(j, (mesh, tape))| {
                    let x = &tape.activation;
                    let target = schedules[j].target(i);
                    let out = match (self.config.pooling, frozen, target) {
                        (true, Some(f), _) => pool::replay_pool(mesh, x, &f[j].layers[i])?,
                        (true, None, Some(t)) => {
                            let mut out = pool::pool_to_target(mesh, x, t)?;
                            if i + 1 == stages {
                                out.target_reached =
                                    out.mesh.referenced_vertex_count() <= t.min_vertices;
                            }
                            out
                        }
                        _ => {
                            let f = mesh.num_faces();
                            return Ok((
                                mesh.clone(),
                                x.clone(),
                                PoolLayer {
                                    pre_faces: f as u32,
                                    post_faces: f as u32,
                                    records: Vec::new(),
                                },
                                SparseMap::identity(f),
                                true,
                            ));
                        }
                    };
                    Ok((out.mesh, out.features, out.layer, out.map, out.target_reached))
                })
                .collect::<Result<_>>()?;
            let mut next_levels = Vec::with_capacity(n);
            let mut next_feats = Vec::with_capacity(n);
            for (j, ((mesh, x, layer, map, ok), block_tape)) in pooled.into_iter().zip(blocks).enumerate() {
                if !ok {
                    log::warn!("mesh {j}: pooling stage {i} stopped short of its target");
                }
                met[j] &= ok;
                layers[j].push(layer);
                tapes[j].pool_maps.push(map);
                tapes[j].blocks.push(block_tape);
                next_levels.push(mesh);
                next_feats.push(x);
            }
            levels = next_levels;
            feats = next_feats;
        }

        let encoded: Vec<Encoded> = levels
            .par_iter()
            .zip(feats.par_iter())
            .zip(meshes.par_iter())
            .map(|((base, x), mesh)| {
                let head = self.encoder_head.forward(x)?;
                let rec = reconstruct_vertices(&head, base.faces(), mesh.num_vertices())?;
                Ok(Encoded {
                    base_faces: base.faces().to_vec(),
                    base_vertices: rec.vertices,
                    records: PoolRecordStack {
                        vertex_count: mesh.num_vertices() as u32,
                        layers: Vec::new(),
                    },
                    targets_met: true,
                })
            })
            .collect::<Result<_>>()?;
        let encoded = encoded
            .into_iter()
            .zip(layers)
            .zip(met)
            .map(|((mut e, l), ok)| {
                e.records.layers = l;
                e.targets_met = ok;
                e
            })
            .collect();
        for (t, x) in tapes.iter_mut().zip(feats) {
            t.head_input = x;
        }
        Ok((encoded, tapes, norms))
    }

    fn decode_batch(
        &self,
        encoded: &[Encoded],
        mode: BnMode,
    ) -> Result<(Vec<VertexSet>, Vec<DecoderTape>, Vec<BlockNorm>)> {
        self.check_batch(encoded)?;
        let stages = self.decoder.len();
        for e in encoded {
            if e.records.layers.len() != stages {
                return Err(Error::Records(format!(
                    "record stack has {} layers, decoder has {stages}",
                    e.records.layers.len()
                )));
            }
            if e.records.vertex_count as usize != e.base_vertices.len() {
                return Err(Error::Records(format!(
                    "records describe {} vertices, latent has {}",
                    e.records.vertex_count,
                    e.base_vertices.len()
                )));
            }
        }
        let mut levels: Vec<Mesh> = encoded
            .iter()
            .map(|e| Mesh::new(e.base_vertices.clone(), e.base_faces.clone()))
            .collect::<Result<_>>()?;
        let mut feats: Vec<Array2<f64>> = encoded
            .iter()
            .map(|e| gather_features(&e.base_vertices, &e.base_faces))
            .collect();
        let mut tapes: Vec<DecoderTape> = encoded
            .iter()
            .map(|_| DecoderTape {
                unpool_maps: Vec::new(),
                blocks: Vec::new(),
                head_input: Array2::zeros((0, 0)),
                faces: Vec::new(),
            })
            .collect();
        let mut norms = Vec::with_capacity(stages);
        for (j, block) in self.decoder.iter().enumerate() {
            let layer_index = stages - 1 - j;
            let unpooled: Vec<pool::UnpoolOutput> = levels
                .par_iter()
                .zip(feats.par_iter())
                .zip(encoded.par_iter())
                .map(|((mesh, x), e)| pool::unpool(mesh, x, &e.records.layers[layer_index]))
                .collect::<Result<_>>()?;
            let mut inputs = Vec::with_capacity(unpooled.len());
            levels = Vec::with_capacity(unpooled.len());
            for (t, u) in tapes.iter_mut().zip(unpooled) {
                t.unpool_maps.push(u.map);
                inputs.push(u.features);
                levels.push(u.mesh);
            }
            let refs: Vec<&Mesh> = levels.iter().collect();
            let (blocks, norm) = run_block(block, self.config.k, &refs, inputs, mode)?;
            norms.push(norm);
            feats = Vec::with_capacity(blocks.len());
            for (t, b) in tapes.iter_mut().zip(blocks) {
                feats.push(b.activation.clone());
                t.blocks.push(b);
            }
        }
        let outputs: Vec<Vec<[f64; 3]>> = levels
            .par_iter()
            .zip(feats.par_iter())
            .map(|(mesh, x)| {
                let head = self.decoder_head.forward(x)?;
                let rec = reconstruct_vertices(&head, mesh.faces(), mesh.num_vertices())?;
                if !rec.unreferenced.is_empty() {
                    log::warn!(
                        "{} unreferenced vertices reconstructed at the origin",
                        rec.unreferenced.len()
                    );
                }
                Ok(rec.vertices)
            })
            .collect::<Result<_>>()?;
        for ((t, x), mesh) in tapes.iter_mut().zip(feats).zip(&levels) {
            t.head_input = x;
            t.faces = mesh.faces().to_vec();
        }
        Ok((outputs, tapes, norms))
    }

    /// Encodes and decodes a batch, keeping what the backward pass needs.
    /// With `frozen` the pooling selection is replayed from the given
    /// records instead of being chosen from the features.
    pub fn forward_batch(
        &self,
        meshes: &[Mesh],
        mode: BnMode,
        frozen: Option<&[PoolRecordStack]>,
    ) -> Result<BatchTape> {
        let (encoded, encoder_tapes, encoder_norms) = self.encode_batch(meshes, mode, frozen)?;
        let (outputs, decoder_tapes, decoder_norms) = self.decode_batch(&encoded, mode)?;
        let targets: Vec<Vec<[f64; 3]>> = meshes
            .iter()
            .map(|m| {
                m.referenced_vertices()
                    .iter()
                    .map(|&v| m.vertices()[v as usize])
                    .collect()
            })
            .collect();
        let losses: Vec<f64> = outputs
            .iter()
            .zip(meshes)
            .zip(&targets)
            .map(|((out, m), t)| {
                let pred: Vec<[f64; 3]> = m
                    .referenced_vertices()
                    .iter()
                    .map(|&v| out[v as usize])
                    .collect();
                mse_loss(&pred, t).map(|(l, _)| l)
            })
            .collect::<Result<_>>()?;
        let loss = losses.iter().sum::<f64>() / losses.len() as f64;
        Ok(BatchTape {
            mode,
            loss,
            losses,
            encoded,
            outputs,
            targets,
            encoder_tapes,
            encoder_norms,
            decoder_tapes,
            decoder_norms,
        })
    }

    /// Gradient of `tape.loss` with respect to every parameter.
    pub fn backward_batch(&self, meshes: &[Mesh], tape: &BatchTape) -> Result<Model> {
        let n = meshes.len();
        if n != tape.outputs.len() {
            return Err(Error::shape("tape was recorded for a different batch"));
        }
        let mut grads = self.zeros_like();
        let scale = 1.0 / n as f64;

        // loss -> decoder head
        let mut g: Vec<Array2<f64>> = Vec::with_capacity(n);
        for (j, m) in meshes.iter().enumerate() {
            let ids = m.referenced_vertices();
            let pred: Vec<[f64; 3]> = ids.iter().map(|&v| tape.outputs[j][v as usize]).collect();
            let (_, gp) = mse_loss(&pred, &tape.targets[j])?;
            let mut gv = vec![[0.0; 3]; m.num_vertices()];
            for (&v, d) in ids.iter().zip(gp) {
                gv[v as usize] = d.map(|x| x * scale);
            }
            let t = &tape.decoder_tapes[j];
            let gh = reconstruct_backward(&gv, &t.faces, m.num_vertices())?;
            let (gx, gl) = self.decoder_head.backward(&t.head_input, &gh)?;
            accumulate_linear(&mut grads.decoder_head, &gl);
            g.push(gx);
        }

        for (j, block) in self.decoder.iter().enumerate().rev() {
            let tapes: Vec<BlockTape> = tape.decoder_tapes.iter().map(|t| t.blocks[j].clone()).collect();
            let gx = block_backward(block, &tapes, &tape.decoder_norms[j], g, &mut grads.decoder[j])?;
            g = gx
                .into_iter()
                .zip(&tape.decoder_tapes)
                .map(|(gx, t)| t.unpool_maps[j].apply_transpose(&gx))
                .collect::<Result<_>>()?;
        }

        // base-mesh vertices -> encoder head
        let mut next = Vec::with_capacity(n);
        for (j, gj) in g.into_iter().enumerate() {
            let e = &tape.encoded[j];
            let v = e.base_vertices.len();
            let gv = gather_backward(&gj, &e.base_faces, v);
            let gh = reconstruct_backward(&gv, &e.base_faces, v)?;
            let t = &tape.encoder_tapes[j];
            let (gx, gl) = self.encoder_head.backward(&t.head_input, &gh)?;
            accumulate_linear(&mut grads.encoder_head, &gl);
            next.push(gx);
        }
        let mut g = next;

        for (i, block) in self.encoder.iter().enumerate().rev() {
            let pre: Vec<Array2<f64>> = g
                .into_iter()
                .zip(&tape.encoder_tapes)
                .map(|(gj, t)| t.pool_maps[i].apply_transpose(&gj))
                .collect::<Result<_>>()?;
            let tapes: Vec<BlockTape> = tape.encoder_tapes.iter().map(|t| t.blocks[i].clone()).collect();
            g = block_backward(block, &tapes, &tape.encoder_norms[i], pre, &mut grads.encoder[i])?;
        }
        Ok(grads)
    }

    /// Batch loss and its gradient.
    pub fn forward_backward(
        &self,
        meshes: &[Mesh],
        frozen: Option<&[PoolRecordStack]>,
    ) -> Result<(BatchTape, Model)> {
        let tape = self.forward_batch(meshes, BnMode::Train, frozen)?;
        let grads = self.backward_batch(meshes, &tape)?;
        Ok((tape, grads))
    }

    /// Eval-mode encoding of one mesh.
    pub fn encode(&self, mesh: &Mesh) -> Result<Encoded> {
        let (mut e, _, _) = self.encode_batch(std::slice::from_ref(mesh), BnMode::Eval, None)?;
        Ok(e.pop().unwrap())
    }

    /// Eval-mode decoding; the result carries the original face matrix.
    pub fn decode(&self, encoded: &Encoded) -> Result<Mesh> {
        let (mut out, tapes, _) = self.decode_batch(std::slice::from_ref(encoded), BnMode::Eval)?;
        Mesh::new(out.pop().unwrap(), tapes[0].faces.clone())
    }
}
