//! Runs episode suites, in parallel, with results in seed then episode
//! order.

use std::sync::{Arc, Mutex};

use adaptnav_core::flops::{CostModel, GflopsBreakdown};
use adaptnav_core::lsh::CacheStats;
use adaptnav_core::pipeline::{run_episode, Episode, EpisodeContext, ObservationTraces};
use adaptnav_core::simenv::{
    generate_env, sample_episodes, EnvGraph, EpisodeMetrics, EpisodeSpec, Renderer, SuiteParams,
};
use adaptnav_core::{AgentConfig, Disposition, Encoder, Seed, StepCost, Stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;

/// Per-episode stream; the pipeline derives hash, corruption and step
/// streams from it.
pub fn episode_stream(seed: u64, index: usize) -> Stream {
    Stream::new(Seed(seed)).fork_indexed("episode", index as u64)
}

pub fn episode_specs(env: &EnvGraph, suite: &SuiteParams, seed: u64) -> Result<Vec<EpisodeSpec>> {
    Ok(sample_episodes(
        env,
        suite,
        &mut Stream::new(Seed(seed)).fork("episodes"),
    )?)
}

/// Encoder, renderer and cost model shared by every run of a config.
pub struct Workbench {
    pub encoder: Encoder,
    pub renderer: Renderer,
    pub cost: CostModel,
}

impl Workbench {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let enc = cfg.encoder.encoder_config();
        Ok(Self {
            renderer: Renderer::new(enc.image_side, cfg.env.latent_dim)?,
            encoder: Encoder::new(enc)?,
            cost: CostModel::from_config(&cfg.encoder.cost_config()),
        })
    }

    pub fn prepare(&self, seed: u64, env: EnvGraph) -> PreparedEnv {
        PreparedEnv::new(seed, Arc::new(SharedEnv::new(env)))
    }

    /// Generates (in parallel) the environment of every seed of `cfg`.
    pub fn generate(&self, cfg: &RunConfig) -> Result<Vec<PreparedEnv>> {
        cfg.suite
            .seeds
            .par_iter()
            .map(|&s| Ok(self.prepare(s, generate_env(&cfg.env_for_seed(s))?)))
            .collect()
    }

    /// Runs the suite of `agent` on every prepared environment.
    pub fn run(&self, envs: &[PreparedEnv], agent: &AgentConfig, suite: &SuiteParams) -> Result<Vec<EpisodeRecord>> {
        let mut jobs = Vec::new();
        for (k, p) in envs.iter().enumerate() {
            for (i, spec) in episode_specs(p.env(), suite, p.seed)?.into_iter().enumerate() {
                jobs.push((k, i, spec));
            }
        }
        let traces: Vec<Option<Arc<ObservationTraces>>> = envs
            .par_iter()
            .map(|p| p.shared.traces_for(self, agent))
            .collect::<Result<_>>()?;
        jobs.par_iter()
            .map(|&(k, i, ref spec)| {
                let p = &envs[k];
                let ctx = EpisodeContext {
                    env: p.env(),
                    encoder: &self.encoder,
                    renderer: &self.renderer,
                    cost: &self.cost,
                    traces: traces[k].as_deref(),
                };
                let ep = run_episode(&ctx, spec, agent, &episode_stream(p.seed, i))?;
                EpisodeRecord::new(p.env(), p.seed, i, &ep, self.encoder.layer_count())
            })
            .collect()
    }
}

/// An environment plus lazily built observation traces, shared by every
/// agent run on it.
pub struct SharedEnv {
    pub env: EnvGraph,
    traces: Mutex<Vec<Arc<ObservationTraces>>>,
}

impl SharedEnv {
    pub fn new(env: EnvGraph) -> Self {
        Self {
            env,
            traces: Mutex::new(Vec::new()),
        }
    }

    /// Traces usable by `agent`, built on first use. Corrupted agents get
    /// none.
    pub fn traces_for(&self, bench: &Workbench, agent: &AgentConfig) -> Result<Option<Arc<ObservationTraces>>> {
        if agent.corruption.is_some() {
            return Ok(None);
        }
        let mut guard = self.traces.lock().expect("trace table lock");
        if let Some(t) = guard.iter().find(|t| t.denoise_kernel() == agent.denoise_kernel) {
            return Ok(Some(Arc::clone(t)));
        }
        let t = Arc::new(ObservationTraces::build(
            &self.env,
            &bench.encoder,
            &bench.renderer,
            agent.denoise_kernel,
        )?);
        guard.push(Arc::clone(&t));
        Ok(Some(t))
    }
}

/// A suite seed and the environment its episodes run in.
#[derive(Clone)]
pub struct PreparedEnv {
    pub seed: u64,
    pub shared: Arc<SharedEnv>,
}

impl PreparedEnv {
    pub fn new(seed: u64, shared: Arc<SharedEnv>) -> Self {
        Self { seed, shared }
    }

    pub fn env(&self) -> &EnvGraph {
        &self.shared.env
    }
}

/// View counts by disposition; `exited[l - 1]` counts exits at layer `l`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DispositionHistogram {
    pub full: u64,
    pub exited: Vec<u64>,
    pub cached: u64,
    pub masked: u64,
}

impl DispositionHistogram {
    pub fn new(layers: usize) -> Self {
        Self {
            exited: vec![0; layers],
            ..Self::default()
        }
    }

    pub fn add(&mut self, d: &Disposition) {
        match d {
            Disposition::Full => self.full += 1,
            Disposition::Exited { layer } => self.exited[layer - 1] += 1,
            Disposition::Cached => self.cached += 1,
            Disposition::Masked => self.masked += 1,
        }
    }

    pub fn merge(&mut self, other: &DispositionHistogram) {
        self.full += other.full;
        self.cached += other.cached;
        self.masked += other.masked;
        if self.exited.len() < other.exited.len() {
            self.exited.resize(other.exited.len(), 0);
        }
        for (a, b) in self.exited.iter_mut().zip(&other.exited) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.full + self.cached + self.masked + self.exited.iter().sum::<u64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub index: usize,
    pub start: usize,
    pub goal: usize,
    pub shortest_path_length: f64,
    pub metrics: EpisodeMetrics,
    pub trajectory: Vec<usize>,
    pub steps: usize,
    pub forced_stop: bool,
    pub empty_predictions: usize,
    /// MAC totals by component.
    pub cost: StepCost,
    pub gflops: GflopsBreakdown,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cache: Option<CacheStats>,
    pub dispositions: DispositionHistogram,
}

impl EpisodeRecord {
    pub fn new(env: &EnvGraph, seed: u64, index: usize, ep: &Episode, layers: usize) -> Result<Self> {
        let metrics = EpisodeMetrics::from_trajectory(env, &ep.spec, &ep.trajectory, !ep.forced_stop)?;
        let mut dispositions = DispositionHistogram::new(layers);
        for step in &ep.steps {
            for d in &step.dispositions {
                dispositions.add(d);
            }
        }
        let cost = ep.ledger.total();
        Ok(Self {
            seed,
            index,
            start: ep.spec.start,
            goal: ep.spec.goal,
            shortest_path_length: ep.spec.shortest_path_length,
            metrics,
            trajectory: ep.trajectory.clone(),
            steps: ep.steps.len(),
            forced_stop: ep.forced_stop,
            empty_predictions: ep.steps.iter().filter(|s| s.empty_prediction).count(),
            cost,
            gflops: cost.breakdown(),
            cache: ep.cache,
            dispositions,
        })
    }
}
