//! Rank-decayed early-exit thresholds: `T = T0 * exp(-A * R)`, rounded to a
//! fixed number of decimals, with anything at or above the full-compute
//! cutoff promoted to 1.0 (no early exit).

use alloc::collections::BTreeMap;
use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::SelectionPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdPolicy {
    pub t0: f64,
    /// Aggressiveness `A`, in absolute units.
    pub aggressiveness: f64,
    pub round_decimals: u32,
    pub full_compute_cutoff: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            t0: 1.0,
            aggressiveness: 9e-4,
            round_decimals: 3,
            full_compute_cutoff: 0.998,
        }
    }
}

impl ThresholdPolicy {
    pub fn with_aggressiveness(aggressiveness: f64) -> Self {
        Self {
            aggressiveness,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0 <= 1.0) {
            return Err(Error::InvalidPolicy(format!("t0 {} outside (0, 1]", self.t0)));
        }
        if !(self.aggressiveness >= 0.0 && self.aggressiveness.is_finite()) {
            return Err(Error::InvalidPolicy(format!(
                "aggressiveness {} must be >= 0",
                self.aggressiveness
            )));
        }
        if !(self.full_compute_cutoff > 0.0 && self.full_compute_cutoff <= 1.0) {
            return Err(Error::InvalidPolicy(format!(
                "cutoff {} outside (0, 1]",
                self.full_compute_cutoff
            )));
        }
        if self.round_decimals > 12 {
            return Err(Error::InvalidPolicy("round_decimals above 12".into()));
        }
        Ok(())
    }

    /// Unrounded `T0 * exp(-A * R)`.
    pub fn raw_threshold(&self, rank: usize) -> f64 {
        self.t0 * libm::exp(-self.aggressiveness * rank as f64)
    }

    pub fn threshold_for_rank(&self, rank: usize) -> Result<f64> {
        if rank == 0 {
            return Err(Error::NavigableNeedsNoThreshold);
        }
        self.validate()?;
        let scale = libm::pow(10.0, f64::from(self.round_decimals));
        // libm::round is half-away-from-zero.
        let rounded = libm::round(self.raw_threshold(rank) * scale) / scale;
        Ok(if rounded >= self.full_compute_cutoff {
            1.0
        } else {
            rounded
        })
    }

    /// Thresholds for exactly the extended views of `plan`, keyed by view
    /// index.
    pub fn schedule_for_plan(&self, plan: &SelectionPlan) -> Result<BTreeMap<usize, f64>> {
        plan.extended()
            .map(|(j, rank)| Ok((j, self.threshold_for_rank(rank)?)))
            .collect()
    }
}
