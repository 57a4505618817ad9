//! A small deterministic transformer-style visual encoder.
//!
//! Weights are random (seeded, scaled by `1/sqrt(fan_in)`); nothing is
//! trained. The encoder exposes its per-layer mean-pooled states so that
//! layer saturation can drive early exits: after layer `l >= 2` the cosine
//! similarity between the pooled states of layers `l - 1` and `l` is compared
//! against a threshold, and the sample exits at the first layer where it is
//! strictly greater.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ViewImage;
use crate::math::{cosine_similarity, Embedding};
use crate::rng::{Seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub layers: usize,
    pub image_side: usize,
    pub patch: usize,
    pub hidden: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    /// Multiplier on both residual branches of the first layer.
    pub residual_scale: f32,
    /// Layer `l` (0-based) scales its branches by
    /// `residual_scale * (l + 1)^-residual_decay`.
    pub residual_decay: f32,
    pub seed: Seed,
}

impl EncoderConfig {
    /// Executable default: 12 layers, 32x32 input, 8x8 patches (17 tokens).
    pub fn desk(seed: Seed) -> Self {
        Self {
            layers: 12,
            image_side: 32,
            patch: 8,
            hidden: 64,
            heads: 4,
            mlp_dim: 256,
            residual_scale: 0.3,
            residual_decay: 1.0,
            seed,
        }
    }

    /// ViT-B/16 shape. Only ever costed, never executed.
    pub fn vit_b16() -> Self {
        Self {
            layers: 12,
            image_side: 224,
            patch: 16,
            hidden: 768,
            heads: 12,
            mlp_dim: 3072,
            residual_scale: 1.0,
            residual_decay: 0.0,
            seed: Seed(0),
        }
    }

    /// Token count including the class token.
    pub fn tokens(&self) -> usize {
        let per_side = self.image_side / self.patch.max(1);
        per_side * per_side + 1
    }

    pub fn patch_dim(&self) -> usize {
        ViewImage::CHANNELS * self.patch * self.patch
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidEncoderConfig(msg.into()));
        if self.layers < 2 {
            return bad("at least two layers are required");
        }
        if self.patch == 0 || self.image_side == 0 || !self.image_side.is_multiple_of(self.patch) {
            return Err(Error::InvalidEncoderConfig(format!(
                "image side {} is not a positive multiple of patch {}",
                self.image_side, self.patch
            )));
        }
        if self.hidden == 0 || self.mlp_dim == 0 || self.heads == 0 {
            return bad("hidden, mlp_dim and heads must be positive");
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad("hidden must be divisible by heads");
        }
        if !(self.residual_scale.is_finite() && self.residual_scale > 0.0) {
            return bad("residual_scale must be positive");
        }
        if !(self.residual_decay.is_finite() && self.residual_decay >= 0.0) {
            return bad("residual_decay must be nonnegative");
        }
        Ok(())
    }
}

/// Pooled state after every executed layer plus the consecutive-layer
/// similarities (`pooled.len() - 1` of them).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub pooled: Vec<Embedding>,
    pub similarities: Vec<f64>,
}

impl LayerTrace {
    /// The record [`Encoder::encode_mue`] would return for this input.
    pub fn exit(&self, threshold: f64) -> Result<ExitRecord> {
        check_threshold(threshold)?;
        let layers = self.pooled.len();
        let exit_layer = (2..=layers)
            .find(|&l| self.similarities[l - 2] > threshold)
            .unwrap_or(layers);
        Ok(ExitRecord {
            exit_layer,
            threshold,
            embedding: self.pooled[exit_layer - 1].clone(),
        })
    }

    pub fn full(&self) -> &Embedding {
        self.pooled.last().expect("a trace covers at least two layers")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitRecord {
    /// 1-based layer whose pooled state was returned.
    pub exit_layer: usize,
    pub threshold: f64,
    pub embedding: Embedding,
}

/// Layer executions actually spent by a budgeted batch, against its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetUsage {
    pub executed: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub records: Vec<ExitRecord>,
    pub usage: BudgetUsage,
}

#[derive(Debug, Clone)]
struct Layer {
    wq: Vec<f32>,
    wk: Vec<f32>,
    wv: Vec<f32>,
    wo: Vec<f32>,
    w1: Vec<f32>,
    b1: Vec<f32>,
    w2: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    patch_w: Vec<f32>,
    cls: Vec<f32>,
    pos: Vec<f32>,
    layers: Vec<Layer>,
}

struct Scratch {
    x: Vec<f32>,
    q: Vec<f32>,
    k: Vec<f32>,
    v: Vec<f32>,
    ctx: Vec<f32>,
    o: Vec<f32>,
    m: Vec<f32>,
    scores: Vec<f32>,
}

impl Scratch {
    fn new(cfg: &EncoderConfig) -> Self {
        let nd = cfg.tokens() * cfg.hidden;
        Self {
            x: vec![0.0; nd],
            q: vec![0.0; nd],
            k: vec![0.0; nd],
            v: vec![0.0; nd],
            ctx: vec![0.0; nd],
            o: vec![0.0; nd],
            m: vec![0.0; cfg.tokens() * cfg.mlp_dim],
            scores: vec![0.0; cfg.tokens()],
        }
    }
}

/// One sample's progress through the stack.
struct SampleState {
    hidden: Vec<f32>,
    pooled: Embedding,
    layer: usize,
}

fn gaussian(stream: &mut Stream, len: usize, scale: f64) -> Vec<f32> {
    (0..len).map(|_| (stream.normal() * scale) as f32).collect()
}

/// `y = x · w`, `x` is `rows`×`inner`, `w` is `inner`×`out` row-major.
fn matmul(x: &[f32], rows: usize, inner: usize, w: &[f32], out: usize, y: &mut [f32]) {
    y[..rows * out].fill(0.0);
    for r in 0..rows {
        let xr = &x[r * inner..(r + 1) * inner];
        let yr = &mut y[r * out..(r + 1) * out];
        for (i, &a) in xr.iter().enumerate() {
            let wi = &w[i * out..(i + 1) * out];
            for (yj, &wj) in yr.iter_mut().zip(wi) {
                *yj += a * wj;
            }
        }
    }
}

fn layer_norm(h: &[f32], d: usize, out: &mut [f32]) {
    for (src, dst) in h.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let mean = src.iter().sum::<f32>() / d as f32;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let inv = 1.0 / libm::sqrtf(var + 1e-5);
        for (o, &v) in dst.iter_mut().zip(src) {
            *o = (v - mean) * inv;
        }
    }
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let root = Stream::new(cfg.seed).fork("encoder");
        let (d, n, m) = (cfg.hidden, cfg.tokens(), cfg.mlp_dim);
        let mut s = root.fork("embed");
        let patch_w = gaussian(&mut s, cfg.patch_dim() * d, 1.0 / libm::sqrt(cfg.patch_dim() as f64));
        let cls = gaussian(&mut s, d, 1.0);
        let pos = gaussian(&mut s, n * d, 0.5);
        let inv_d = 1.0 / libm::sqrt(d as f64);
        let inv_m = 1.0 / libm::sqrt(m as f64);
        let layers = (0..cfg.layers)
            .map(|l| {
                let mut s = root.fork_indexed("layer", l as u64);
                Layer {
                    wq: gaussian(&mut s, d * d, inv_d),
                    wk: gaussian(&mut s, d * d, inv_d),
                    wv: gaussian(&mut s, d * d, inv_d),
                    wo: gaussian(&mut s, d * d, inv_d),
                    w1: gaussian(&mut s, d * m, inv_d),
                    b1: gaussian(&mut s, m, 0.1),
                    w2: gaussian(&mut s, m * d, inv_m),
                }
            })
            .collect();
        Ok(Self {
            cfg,
            patch_w,
            cls,
            pos,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn layer_count(&self) -> usize {
        self.cfg.layers
    }

    pub fn embedding_len(&self) -> usize {
        self.cfg.hidden
    }

    fn check_shape(&self, img: &ViewImage) -> Result<()> {
        let side = self.cfg.image_side;
        if img.height() != side || img.width() != side {
            return Err(Error::Shape {
                expected_height: side,
                expected_width: side,
                height: img.height(),
                width: img.width(),
            });
        }
        Ok(())
    }

    fn embed(&self, img: &ViewImage) -> Vec<f32> {
        let (d, p, side) = (self.cfg.hidden, self.cfg.patch, self.cfg.image_side);
        let per_side = side / p;
        let n = self.cfg.tokens();
        let mut tokens = vec![0.0f32; n * d];
        tokens[..d].copy_from_slice(&self.cls);
        let mut patch = vec![0.0f32; self.cfg.patch_dim()];
        for py in 0..per_side {
            for px in 0..per_side {
                let mut idx = 0;
                for c in 0..ViewImage::CHANNELS {
                    for dy in 0..p {
                        for dx in 0..p {
                            patch[idx] = img.get(c, py * p + dy, px * p + dx) - 0.5;
                            idx += 1;
                        }
                    }
                }
                let t = 1 + py * per_side + px;
                matmul(
                    &patch,
                    1,
                    patch.len(),
                    &self.patch_w,
                    d,
                    &mut tokens[t * d..(t + 1) * d],
                );
            }
        }
        for (t, p) in tokens.iter_mut().zip(&self.pos) {
            *t += p;
        }
        tokens
    }

    fn run_layer(&self, l: usize, h: &mut [f32], s: &mut Scratch) {
        let cfg = &self.cfg;
        let (n, d, m) = (cfg.tokens(), cfg.hidden, cfg.mlp_dim);
        let layer = &self.layers[l];
        let alpha = cfg.residual_scale * libm::powf((l + 1) as f32, -cfg.residual_decay);
        let dh = d / cfg.heads;
        let scale = 1.0 / libm::sqrtf(dh as f32);

        layer_norm(h, d, &mut s.x);
        matmul(&s.x, n, d, &layer.wq, d, &mut s.q);
        matmul(&s.x, n, d, &layer.wk, d, &mut s.k);
        matmul(&s.x, n, d, &layer.wv, d, &mut s.v);
        s.ctx.fill(0.0);
        for head in 0..cfg.heads {
            let off = head * dh;
            for i in 0..n {
                let qi = &s.q[i * d + off..i * d + off + dh];
                let mut max = f32::NEG_INFINITY;
                for j in 0..n {
                    let kj = &s.k[j * d + off..j * d + off + dh];
                    let dot: f32 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                    s.scores[j] = dot * scale;
                    max = max.max(s.scores[j]);
                }
                let mut total = 0.0f32;
                for sc in s.scores.iter_mut() {
                    *sc = libm::expf(*sc - max);
                    total += *sc;
                }
                let ctx = &mut s.ctx[i * d + off..i * d + off + dh];
                for j in 0..n {
                    let p = s.scores[j] / total;
                    let vj = &s.v[j * d + off..j * d + off + dh];
                    for (c, &v) in ctx.iter_mut().zip(vj) {
                        *c += p * v;
                    }
                }
            }
        }
        matmul(&s.ctx, n, d, &layer.wo, d, &mut s.o);
        for (hv, &o) in h.iter_mut().zip(&s.o) {
            *hv += alpha * o;
        }

        layer_norm(h, d, &mut s.x);
        matmul(&s.x, n, d, &layer.w1, m, &mut s.m);
        for row in s.m.chunks_exact_mut(m) {
            for (v, &b) in row.iter_mut().zip(&layer.b1) {
                *v = (*v + b).max(0.0);
            }
        }
        matmul(&s.m, n, m, &layer.w2, d, &mut s.o);
        for (hv, &o) in h.iter_mut().zip(&s.o) {
            *hv += alpha * o;
        }
    }

    fn pool(&self, h: &[f32]) -> Embedding {
        let d = self.cfg.hidden;
        let n = self.cfg.tokens();
        let mut out = vec![0.0f32; d];
        for tok in h.chunks_exact(d) {
            for (o, &v) in out.iter_mut().zip(tok) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n as f32;
        }
        Embedding::new(out)
    }

    fn start(&self, img: &ViewImage, s: &mut Scratch) -> Result<SampleState> {
        self.check_shape(img)?;
        let mut hidden = self.embed(img);
        self.run_layer(0, &mut hidden, s);
        let pooled = self.pool(&hidden);
        Ok(SampleState {
            hidden,
            pooled,
            layer: 1,
        })
    }

    /// Runs the next layer; returns the similarity between the previous and
    /// the new pooled state.
    fn advance(&self, state: &mut SampleState, s: &mut Scratch) -> Result<f64> {
        self.run_layer(state.layer, &mut state.hidden, s);
        state.layer += 1;
        let pooled = self.pool(&state.hidden);
        let sim = cosine_similarity(state.pooled.values(), pooled.values())?;
        state.pooled = pooled;
        Ok(sim)
    }

    /// Runs all layers; the embedding is the pooled output of the last layer.
    pub fn encode_full(&self, img: &ViewImage) -> Result<(Embedding, LayerTrace)> {
        let mut scratch = Scratch::new(&self.cfg);
        let mut state = self.start(img, &mut scratch)?;
        let mut pooled = vec![state.pooled.clone()];
        let mut similarities = Vec::with_capacity(self.cfg.layers - 1);
        while state.layer < self.cfg.layers {
            similarities.push(self.advance(&mut state, &mut scratch)?);
            pooled.push(state.pooled.clone());
        }
        Ok((state.pooled, LayerTrace { pooled, similarities }))
    }

    /// Exits at the first layer `l >= 2` whose pooled state has cosine
    /// similarity strictly greater than `threshold` with layer `l - 1`.
    pub fn encode_mue(&self, img: &ViewImage, threshold: f64) -> Result<ExitRecord> {
        check_threshold(threshold)?;
        let mut scratch = Scratch::new(&self.cfg);
        let mut state = self.start(img, &mut scratch)?;
        loop {
            let sim = self.advance(&mut state, &mut scratch)?;
            if sim > threshold || state.layer == self.cfg.layers {
                return Ok(ExitRecord {
                    exit_layer: state.layer,
                    threshold,
                    embedding: state.pooled,
                });
            }
        }
    }

    /// Layer-major batch execution where every sample exits at its own layer.
    ///
    /// The budget is the worst case, `images.len() * layers` layer executions.
    pub fn encode_batch_budgeted(&self, images: &[ViewImage], thresholds: &[f64]) -> Result<BatchOutcome> {
        if images.len() != thresholds.len() {
            return Err(Error::BatchShape {
                images: images.len(),
                thresholds: thresholds.len(),
            });
        }
        for &t in thresholds {
            check_threshold(t)?;
        }
        let budget = images.len() * self.cfg.layers;
        let mut scratch = Scratch::new(&self.cfg);
        let mut states = images
            .iter()
            .map(|img| self.start(img, &mut scratch))
            .collect::<Result<Vec<_>>>()?;
        let mut executed = images.len();
        let mut records: Vec<Option<ExitRecord>> = vec![None; images.len()];
        let mut active: Vec<usize> = (0..images.len()).collect();
        while !active.is_empty() {
            let mut still = Vec::with_capacity(active.len());
            for &i in &active {
                let sim = self.advance(&mut states[i], &mut scratch)?;
                executed += 1;
                if sim > thresholds[i] || states[i].layer == self.cfg.layers {
                    let pooled = core::mem::replace(&mut states[i].pooled, Embedding::masked(0));
                    records[i] = Some(ExitRecord {
                        exit_layer: states[i].layer,
                        threshold: thresholds[i],
                        embedding: pooled,
                    });
                } else {
                    still.push(i);
                }
            }
            active = still;
        }
        if executed > budget {
            return Err(Error::BudgetExceeded { used: executed, budget });
        }
        Ok(BatchOutcome {
            records: records.into_iter().flatten().collect(),
            usage: BudgetUsage { executed, budget },
        })
    }

    /// Mean consecutive-layer similarity over a sample, one value per layer
    /// transition.
    pub fn saturation_curve(&self, images: &[ViewImage]) -> Result<Vec<f64>> {
        if images.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut sums = vec![0.0f64; self.cfg.layers - 1];
        for img in images {
            let (_, trace) = self.encode_full(img)?;
            for (s, v) in sums.iter_mut().zip(&trace.similarities) {
                *s += v;
            }
        }
        Ok(sums.into_iter().map(|s| s / images.len() as f64).collect())
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(t))
    }
}
