//! Episode specs and navigation metrics (TL, OSR, SR, SPL, GP).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::simenv::graph::EnvGraph;

pub const DEFAULT_SUCCESS_RADIUS: f64 = 3.0;
pub const DEFAULT_STEP_LIMIT: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub start: usize,
    pub goal: usize,
    /// Geodesic start-goal distance in meters.
    pub shortest_path_length: f64,
    pub success_radius: f64,
    pub step_limit: usize,
}

impl EpisodeSpec {
    pub fn new(env: &EnvGraph, start: usize, goal: usize) -> Result<Self> {
        if start >= env.node_count() || goal >= env.node_count() {
            return Err(Error::InvalidEpisode("start or goal outside the graph".into()));
        }
        Ok(Self {
            start,
            goal,
            shortest_path_length: env.distance(start, goal),
            success_radius: DEFAULT_SUCCESS_RADIUS,
            step_limit: DEFAULT_STEP_LIMIT,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteParams {
    pub episodes: usize,
    pub success_radius: f64,
    pub step_limit: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            episodes: 50,
            success_radius: DEFAULT_SUCCESS_RADIUS,
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }
}

/// Draws start/goal pairs whose goal lies outside the success radius.
pub fn sample_episodes(env: &EnvGraph, suite: &SuiteParams, stream: &mut Stream) -> Result<Vec<EpisodeSpec>> {
    let n = env.node_count();
    let eligible = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .any(|(a, b)| env.distance(a, b) > suite.success_radius);
    if suite.episodes > 0 && !eligible {
        return Err(Error::InvalidEpisode(
            "no start/goal pair lies beyond the success radius".into(),
        ));
    }
    let mut out = Vec::with_capacity(suite.episodes);
    while out.len() < suite.episodes {
        let start = stream.below(n);
        let goal = stream.below(n);
        if env.distance(start, goal) <= suite.success_radius {
            continue;
        }
        out.push(EpisodeSpec {
            start,
            goal,
            shortest_path_length: env.distance(start, goal),
            success_radius: suite.success_radius,
            step_limit: suite.step_limit,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub tl: f64,
    pub osr: f64,
    pub sr: f64,
    pub spl: f64,
    pub gp: f64,
}

impl EpisodeMetrics {
    /// `stopped` is false when the step limit ended the episode.
    pub fn from_trajectory(env: &EnvGraph, spec: &EpisodeSpec, trajectory: &[usize], stopped: bool) -> Result<Self> {
        let (&first, rest) = trajectory
            .split_first()
            .ok_or_else(|| Error::InvalidEpisode("empty trajectory".into()))?;
        if first != spec.start {
            return Err(Error::InvalidEpisode(
                "trajectory does not begin at the start node".into(),
            ));
        }
        let mut tl = 0.0;
        let mut prev = first;
        for &u in rest {
            tl += env
                .edge_length(prev, u)
                .ok_or_else(|| Error::InvalidEpisode("trajectory jumps between non-adjacent nodes".into()))?;
            prev = u;
        }
        let within = |u: usize| env.distance(u, spec.goal) <= spec.success_radius;
        let osr = if trajectory.iter().any(|&u| within(u)) {
            1.0
        } else {
            0.0
        };
        let sr = if stopped && within(prev) { 1.0 } else { 0.0 };
        let shortest = spec.shortest_path_length;
        let spl = if sr > 0.0 {
            let denom = tl.max(shortest);
            if denom > 0.0 {
                sr * shortest / denom
            } else {
                sr
            }
        } else {
            0.0
        };
        let gp = env.distance(spec.start, spec.goal) - env.distance(prev, spec.goal);
        Ok(Self { tl, osr, sr, spl, gp })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub mean: EpisodeMetrics,
}

pub fn compute_metrics(episodes: &[EpisodeMetrics]) -> MetricsReport {
    let mut mean = EpisodeMetrics::default();
    if !episodes.is_empty() {
        let n = episodes.len() as f64;
        for e in episodes {
            mean.tl += e.tl / n;
            mean.osr += e.osr / n;
            mean.sr += e.sr / n;
            mean.spl += e.spl / n;
            mean.gp += e.gp / n;
        }
    }
    MetricsReport {
        episodes: episodes.to_vec(),
        mean,
    }
}
