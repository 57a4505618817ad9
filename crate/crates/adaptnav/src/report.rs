//! Run reports: canonical JSON plus an aligned text summary.

use adaptnav_core::flops::{gflops, GflopsBreakdown};
use adaptnav_core::lsh::CacheStats;
use adaptnav_core::simenv::{compute_metrics, EpisodeMetrics};
use adaptnav_core::StepCost;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::runner::{DispositionHistogram, EpisodeRecord};
use crate::table::Table;

pub const REPORT_SCHEMA: &str = "adaptnav-report/1";
pub const COST_CONVENTION: &str = "GFLOPs = multiply-accumulates / 1e9";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentInfo {
    /// `generated` or `file`.
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheSummary {
    pub stats: CacheStats,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub steps: usize,
    pub metrics: EpisodeMetrics,
    pub forced_stops: usize,
    pub empty_predictions: usize,
    /// Mean per episode.
    pub gflops_per_episode: GflopsBreakdown,
    pub gflops_per_step: f64,
    pub total_gflops: f64,
    pub encoder_share: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cache: Option<CacheSummary>,
    pub dispositions: DispositionHistogram,
}

impl Summary {
    pub fn of(records: &[EpisodeRecord]) -> Self {
        let metrics: Vec<EpisodeMetrics> = records.iter().map(|r| r.metrics).collect();
        let mut cost = StepCost::default();
        let mut cache: Option<CacheStats> = None;
        let mut dispositions = DispositionHistogram::default();
        for r in records {
            cost.add(&r.cost);
            if let Some(c) = &r.cache {
                cache.get_or_insert_with(CacheStats::default).merge(c);
            }
            dispositions.merge(&r.dispositions);
        }
        let n = records.len().max(1) as f64;
        let steps: usize = records.iter().map(|r| r.steps).sum();
        let total = cost.breakdown();
        Self {
            episodes: records.len(),
            steps,
            metrics: compute_metrics(&metrics).mean,
            forced_stops: records.iter().filter(|r| r.forced_stop).count(),
            empty_predictions: records.iter().map(|r| r.empty_predictions).sum(),
            gflops_per_episode: GflopsBreakdown {
                encoder_gflops: total.encoder_gflops / n,
                policy_gflops: total.policy_gflops / n,
                hash_gflops: total.hash_gflops / n,
                subgoal_gflops: total.subgoal_gflops / n,
                total_gflops: total.total_gflops / n,
            },
            gflops_per_step: if steps == 0 {
                0.0
            } else {
                gflops(cost.total()) / steps as f64
            },
            total_gflops: total.total_gflops,
            encoder_share: cost.encoder_share(),
            cache: cache.map(|stats| CacheSummary {
                hit_rate: stats.hit_rate(),
                stats,
            }),
            dispositions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub version: String,
    pub cost_convention: String,
    pub config: RunConfig,
    pub environment: EnvironmentInfo,
    pub summary: Summary,
    pub episodes: Vec<EpisodeRecord>,
    /// Seconds since the Unix epoch; the only field that differs between
    /// identical runs. `SOURCE_DATE_EPOCH` pins it.
    pub generated_at: u64,
}

impl RunReport {
    pub fn new(config: RunConfig, environment: EnvironmentInfo, episodes: Vec<EpisodeRecord>) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            cost_convention: COST_CONVENTION.to_string(),
            config,
            environment,
            summary: Summary::of(&episodes),
            episodes,
            generated_at: timestamp(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return v;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "episodes",
    "sr",
    "osr",
    "spl",
    "tl",
    "gp",
    "gflops_ep",
    "gflops_step",
    "enc_share",
    "hit_rate",
    "forced",
];

pub fn summary_cells(s: &Summary) -> Vec<String> {
    vec![
        s.episodes.to_string(),
        format!("{:.3}", s.metrics.sr),
        format!("{:.3}", s.metrics.osr),
        format!("{:.3}", s.metrics.spl),
        format!("{:.2}", s.metrics.tl),
        format!("{:.2}", s.metrics.gp),
        format!("{:.1}", s.gflops_per_episode.total_gflops),
        format!("{:.2}", s.gflops_per_step),
        format!("{:.4}", s.encoder_share),
        s.cache.as_ref().map_or("-".into(), |c| format!("{:.3}", c.hit_rate)),
        s.forced_stops.to_string(),
    ]
}

/// One row per report; with several reports, GFLOPs relative to the first.
pub fn comparison_table(reports: &[(String, RunReport)]) -> Table {
    let mut header = vec!["report"];
    header.extend(SUMMARY_COLUMNS);
    header.push("gflops_ratio");
    let mut t = Table::new(header);
    let base = reports.first().map(|(_, r)| r.summary.total_gflops);
    for (name, r) in reports {
        let mut row = vec![name.clone()];
        row.extend(summary_cells(&r.summary));
        row.push(match base {
            Some(b) if b > 0.0 => format!("{:.3}", r.summary.total_gflops / b),
            _ => "-".into(),
        });
        t.push(row);
    }
    t
}
