//! Input-adaptive inference for panoramic navigation agents.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece of
//! the pipeline:
//!
//! - [`spatial`]: k-extension view selection and view ranks.
//! - [`threshold`]: rank-decayed early-exit thresholds.
//! - [`encoder`]: a small deterministic transformer encoder with
//!   layer-saturation exits and budgeted-batch execution.
//! - [`lsh`]: a SimHash cache of (view, embedding) pairs.
//! - [`flops`]: the analytical cost model and per-component ledger.
//! - [`pipeline`]: per-step panorama processing and episode execution.
//! - [`subgoal`]: scan-only subgoal prediction and the Sinkhorn evaluator.
//! - [`simenv`]: procedural environments, corruptions, the greedy agent
//!   policy and navigation metrics.
//!
//! File formats, reports and the command-line front end live in the
//! `adaptnav` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod encoder;
pub mod error;
pub mod flops;
pub mod image;
pub mod lsh;
pub mod math;
pub mod pipeline;
pub mod rng;
pub mod simenv;
pub mod spatial;
pub mod subgoal;
pub mod threshold;
pub mod view;

pub use encoder::{Encoder, EncoderConfig, ExitRecord, LayerTrace};
pub use error::{Error, Result};
pub use flops::{CostLedger, CostModel, StepCost};
pub use image::{median_filter, ViewImage};
pub use lsh::{CacheConfig, CacheTable, HashFamily, HashKey};
pub use math::{cosine_similarity, Embedding};
pub use pipeline::{AdaptiveConfig, AgentConfig, Disposition, Episode, StepOutput};
pub use rng::{Seed, Stream};
pub use spatial::{SelectionPlan, Topology, ViewClass};
pub use threshold::ThresholdPolicy;
pub use view::{Panorama, ViewSet, VIEW_COUNT};
