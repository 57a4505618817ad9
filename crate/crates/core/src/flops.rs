//! Analytical compute cost model and the per-component ledger.
//!
//! Costs are multiply-accumulate counts. Reports label them "GFLOPs"
//! (1 GFLOP = 1e9 MACs), following the convention of MAC-counting
//! profilers; see [`COST_CONVENTION`].

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::image::ViewImage;
use crate::pipeline::Disposition;
use crate::spatial::{SelectionPlan, ViewClass};
use crate::view::VIEW_COUNT;

pub const COST_CONVENTION: &str =
    "GFLOPs count multiply-accumulates: 1 GFLOP = 1e9 MACs (analytical model, not measured)";

/// Share of a full-panorama step spent outside the visual encoder by the
/// cross-modal policy and the history encoder, relative to the encoder's
/// share: (0.39% + 0.07%) / 99.50%.
pub const POLICY_TO_ENCODER_RATIO: f64 = (0.0039 + 0.0007) / 0.9950;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub layers: u64,
    pub tokens: u64,
    pub hidden: u64,
    pub mlp_dim: u64,
    pub patch: u64,
    pub image_side: u64,
}

impl CostModel {
    pub fn from_config(cfg: &EncoderConfig) -> Self {
        Self {
            layers: cfg.layers as u64,
            tokens: cfg.tokens() as u64,
            hidden: cfg.hidden as u64,
            mlp_dim: cfg.mlp_dim as u64,
            patch: cfg.patch as u64,
            image_side: cfg.image_side as u64,
        }
    }

    /// QKV and output projections, the two attention matmuls, and the MLP.
    pub fn layer_macs(&self) -> u64 {
        let (n, d, m) = (self.tokens, self.hidden, self.mlp_dim);
        4 * n * d * d + 2 * n * n * d + 2 * n * d * m
    }

    pub fn patch_embed_macs(&self) -> u64 {
        (self.tokens - 1) * self.hidden * (ViewImage::CHANNELS as u64 * self.patch * self.patch)
    }

    pub fn full_view_macs(&self) -> u64 {
        self.patch_embed_macs() + self.layers * self.layer_macs()
    }

    pub fn exit_macs(&self, exit_layer: usize) -> Result<u64> {
        if exit_layer == 0 || exit_layer as u64 > self.layers {
            return Err(Error::Range {
                exit_layer,
                layers: self.layers as usize,
            });
        }
        Ok(self.patch_embed_macs() + exit_layer as u64 * self.layer_macs())
    }

    pub fn flattened_view_len(&self) -> u64 {
        ViewImage::CHANNELS as u64 * self.image_side * self.image_side
    }

    /// One SimHash key: `n` dot products over the flattened view.
    pub fn hash_macs(&self, hyperplanes: usize) -> u64 {
        hyperplanes as u64 * self.flattened_view_len()
    }

    /// One raw-view cosine comparison (dot product and two norms).
    pub fn comparison_macs(&self) -> u64 {
        3 * self.flattened_view_len()
    }

    /// Per-step policy cost, calibrated against a full-panorama step.
    pub fn policy_step_macs(&self) -> u64 {
        libm::round(VIEW_COUNT as f64 * self.full_view_macs() as f64 * POLICY_TO_ENCODER_RATIO) as u64
    }

    pub fn full_view_gflops(&self) -> f64 {
        gflops(self.full_view_macs())
    }

    pub fn exit_gflops(&self, exit_layer: usize) -> Result<f64> {
        self.exit_macs(exit_layer).map(gflops)
    }
}

pub fn cost_full_view(cfg: &EncoderConfig) -> f64 {
    CostModel::from_config(cfg).full_view_gflops()
}

pub fn cost_exit(cfg: &EncoderConfig, exit_layer: usize) -> Result<f64> {
    CostModel::from_config(cfg).exit_gflops(exit_layer)
}

pub fn gflops(macs: u64) -> f64 {
    macs as f64 / 1e9
}

/// Per-component cost of one step, in MACs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCost {
    pub encoder: u64,
    pub policy: u64,
    pub hash: u64,
    pub subgoal: u64,
}

impl StepCost {
    pub fn total(&self) -> u64 {
        self.encoder + self.policy + self.hash + self.subgoal
    }

    pub fn add(&mut self, other: &StepCost) {
        self.encoder += other.encoder;
        self.policy += other.policy;
        self.hash += other.hash;
        self.subgoal += other.subgoal;
    }

    pub fn breakdown(&self) -> GflopsBreakdown {
        GflopsBreakdown {
            encoder_gflops: gflops(self.encoder),
            policy_gflops: gflops(self.policy),
            hash_gflops: gflops(self.hash),
            subgoal_gflops: gflops(self.subgoal),
            total_gflops: gflops(self.total()),
        }
    }

    /// Encoder share of the total, in `[0, 1]`.
    pub fn encoder_share(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.encoder as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GflopsBreakdown {
    pub encoder_gflops: f64,
    pub policy_gflops: f64,
    pub hash_gflops: f64,
    pub subgoal_gflops: f64,
    pub total_gflops: f64,
}

/// Cache work done in one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheEvents {
    pub hashes: usize,
    pub comparisons: usize,
    pub hyperplanes: usize,
}

/// Cost of one panorama step: navigable views at full cost, extended misses
/// at their exit cost, masked and cached views free.
pub fn ledger_step(
    cost: &CostModel,
    plan: &SelectionPlan,
    dispositions: &[Disposition],
    cache: CacheEvents,
    subgoal_macs: u64,
) -> Result<StepCost> {
    let mut encoder = 0u64;
    for ((_, class), disposition) in plan.iter().zip(dispositions) {
        encoder += match (class, disposition) {
            (ViewClass::Navigable, Disposition::Full) => cost.full_view_macs(),
            (ViewClass::Extended { .. }, Disposition::Exited { layer }) => cost.exit_macs(*layer)?,
            (ViewClass::Extended { .. }, Disposition::Cached) => 0,
            (ViewClass::Masked, Disposition::Masked) => 0,
            _ => {
                return Err(Error::InvalidPanorama(
                    "disposition disagrees with the selection plan".into(),
                ))
            }
        };
    }
    Ok(StepCost {
        encoder,
        policy: cost.policy_step_macs(),
        hash: cache.hashes as u64 * cost.hash_macs(cache.hyperplanes)
            + cache.comparisons as u64 * cost.comparison_macs(),
        subgoal: subgoal_macs,
    })
}

/// Running per-episode totals. Steps are stored so that the episode total is
/// exactly their sum.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    steps: Vec<StepCost>,
    total: StepCost,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: StepCost) {
        self.total.add(&step);
        self.steps.push(step);
    }

    pub fn steps(&self) -> &[StepCost] {
        &self.steps
    }

    pub fn total(&self) -> StepCost {
        self.total
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for s in &other.steps {
            self.record(*s);
        }
    }
}
