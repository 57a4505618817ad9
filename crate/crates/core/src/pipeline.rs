//! Per-step panorama processing and episode execution.
//!
//! Each step classifies the 36 views with the k-extension plan. Navigable
//! views are fully encoded. Extended views are looked up in the episode's
//! SimHash cache; misses get a rank-derived exit threshold and are encoded
//! together as one budgeted batch, then inserted. Masked views get the zero
//! embedding.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, LayerTrace};
use crate::error::{Error, Result};
use crate::flops::{ledger_step, CacheEvents, CostLedger, CostModel, StepCost};
use crate::image::{median_filter, ViewImage};
use crate::lsh::{CacheConfig, CacheStats, CacheTable, HashFamily, HashKey, ViewComparator};
use crate::math::Embedding;
use crate::rng::Stream;
use crate::simenv::corrupt::{corrupt, CorruptionSpec};
use crate::simenv::graph::EnvGraph;
use crate::simenv::metrics::EpisodeSpec;
use crate::simenv::policy::{greedy_policy, Action};
use crate::simenv::render::Renderer;
use crate::spatial::{build_plan_with, SelectionPlan, Topology};
use crate::subgoal::{scan_to_subgoals, SubgoalConfig};
use crate::threshold::ThresholdPolicy;
use crate::view::{Panorama, ViewSet, VIEW_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disposition {
    Full,
    Exited { layer: usize },
    Cached,
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub k: usize,
    pub topology: Topology,
    /// `None` disables early exits (every extended view runs all layers).
    pub early_exit: Option<ThresholdPolicy>,
}

impl AdaptiveConfig {
    /// Every view processed at full depth.
    pub fn baseline() -> Self {
        Self {
            k: VIEW_COUNT,
            topology: Topology::Linear,
            early_exit: None,
        }
    }

    pub fn k_only(k: usize) -> Self {
        Self { k, ..Self::baseline() }
    }

    pub fn adaptive(k: usize, policy: ThresholdPolicy) -> Self {
        Self {
            k,
            topology: Topology::Linear,
            early_exit: Some(policy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitRecord {
    pub view: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// One embedding per view; masked views hold the zero vector.
    pub embeddings: Vec<Embedding>,
    pub dispositions: Vec<Disposition>,
    pub plan: SelectionPlan,
    pub cost: StepCost,
    pub lookups: usize,
    pub hits: Vec<HitRecord>,
    pub layer_executions: usize,
}

impl StepOutput {
    pub fn count(&self, pred: impl Fn(&Disposition) -> bool) -> usize {
        self.dispositions.iter().filter(|d| pred(d)).count()
    }
}

struct PendingMiss {
    view: usize,
    key: Option<HashKey>,
    threshold: f64,
    /// Whether the cache will accept this pair (size cap).
    storable: bool,
}

enum HitSource {
    Table(usize),
    Pending(usize),
}

/// Processes one panorama.
///
/// Lookups, encodes and inserts behave exactly as a view-by-view pass in
/// index order: a miss that is inserted later in the same step is visible
/// to subsequent lookups of that step.
pub fn process_panorama<C: ViewComparator>(
    panorama: &Panorama,
    encoder: &Encoder,
    cfg: &AdaptiveConfig,
    mut cache: Option<&mut CacheTable<C>>,
    cost: &CostModel,
    subgoal_macs: u64,
    traces: Option<&[LayerTrace]>,
) -> Result<StepOutput> {
    if traces.is_some_and(|t| t.len() != VIEW_COUNT) {
        return Err(Error::InvalidPanorama("one trace per view is required".into()));
    }
    let navigable = panorama.navigable();
    let plan = build_plan_with(navigable, cfg.k, cfg.topology)?;
    let emb_len = encoder.embedding_len();
    let mut embeddings = vec![Embedding::masked(emb_len); VIEW_COUNT];
    let mut dispositions = vec![Disposition::Masked; VIEW_COUNT];
    let mut layer_executions = 0;

    for j in navigable.iter() {
        embeddings[j - 1] = match traces {
            Some(t) => t[j - 1].full().clone(),
            None => encoder.encode_full(panorama.view(j))?.0,
        };
        dispositions[j - 1] = Disposition::Full;
        layer_executions += encoder.layer_count();
    }

    let mut pending: Vec<PendingMiss> = Vec::new();
    let mut deferred: Vec<(usize, usize)> = Vec::new();
    let mut hits = Vec::new();
    let mut events = CacheEvents::default();
    let mut lookups = 0;
    if let Some(table) = cache.as_deref() {
        events.hyperplanes = table.family().bits();
    }

    for (j, rank) in plan.extended() {
        let threshold = match &cfg.early_exit {
            Some(policy) => policy.threshold_for_rank(rank)?,
            None => 1.0,
        };
        let view = panorama.view(j);
        let Some(table) = cache.as_deref_mut() else {
            pending.push(PendingMiss {
                view: j,
                key: None,
                threshold,
                storable: false,
            });
            continue;
        };
        let key = table.hash(view)?;
        events.hashes += 1;
        lookups += 1;
        let mut best: Option<(HitSource, f64)> = None;
        let mut comparisons = 0;
        if let Some(m) = table.best_in_bucket(key, view)? {
            comparisons += m.comparisons;
            best = Some((HitSource::Table(m.position), m.similarity));
        }
        for (idx, p) in pending.iter().enumerate() {
            if p.key != Some(key) || !p.storable {
                continue;
            }
            let s = table.comparator().similarity(view, panorama.view(p.view))?;
            comparisons += 1;
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((HitSource::Pending(idx), s));
            }
        }
        events.comparisons += comparisons;
        match best {
            Some((source, similarity)) if similarity > table.similarity_threshold() => {
                table.record_lookup(true, comparisons);
                match source {
                    HitSource::Table(pos) => {
                        embeddings[j - 1] = table.bucket(key)[pos].embedding.clone();
                    }
                    HitSource::Pending(idx) => deferred.push((j, idx)),
                }
                dispositions[j - 1] = Disposition::Cached;
                hits.push(HitRecord { view: j, similarity });
            }
            _ => {
                table.record_lookup(false, comparisons);
                let stored_so_far = pending.iter().filter(|p| p.storable).count();
                pending.push(PendingMiss {
                    view: j,
                    key: Some(key),
                    threshold,
                    storable: table.has_room_for(stored_so_far + 1),
                });
            }
        }
    }

    if !pending.is_empty() {
        let images: Vec<ViewImage> = pending.iter().map(|p| panorama.view(p.view).clone()).collect();
        let thresholds: Vec<f64> = pending.iter().map(|p| p.threshold).collect();
        let records = match traces {
            Some(t) => {
                let records = pending
                    .iter()
                    .map(|p| t[p.view - 1].exit(p.threshold))
                    .collect::<Result<Vec<_>>>()?;
                layer_executions += records.iter().map(|r| r.exit_layer).sum::<usize>();
                records
            }
            None => {
                let batch = encoder.encode_batch_budgeted(&images, &thresholds)?;
                layer_executions += batch.usage.executed;
                batch.records
            }
        };
        for ((p, rec), image) in pending.iter().zip(records).zip(images) {
            if let (Some(table), Some(key)) = (cache.as_deref_mut(), p.key) {
                table.insert_keyed(key, image, rec.embedding.clone());
            }
            embeddings[p.view - 1] = rec.embedding;
            dispositions[p.view - 1] = Disposition::Exited { layer: rec.exit_layer };
        }
        for (j, idx) in deferred {
            embeddings[j - 1] = embeddings[pending[idx].view - 1].clone();
        }
    }

    let cost = ledger_step(cost, &plan, &dispositions, events, subgoal_macs)?;
    Ok(StepOutput {
        embeddings,
        dispositions,
        plan,
        cost,
        lookups,
        hits,
        layer_executions,
    })
}

/// Where the navigable views of a step come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NavigableSource {
    /// Views aimed at graph neighbours.
    Graph,
    /// Predicted from the node's occupancy scan before any image encoding.
    Scan(SubgoalConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub adaptive: AdaptiveConfig,
    pub cache: Option<CacheConfig>,
    /// Stop when the best navigable view's similarity to the goal exceeds
    /// this.
    pub stop_threshold: f64,
    pub corruption: Option<CorruptionSpec>,
    /// Median filter kernel applied to every observed view.
    pub denoise_kernel: Option<usize>,
    pub navigable_source: NavigableSource,
}

impl AgentConfig {
    pub fn baseline() -> Self {
        Self {
            adaptive: AdaptiveConfig::baseline(),
            cache: None,
            stop_threshold: DEFAULT_STOP_THRESHOLD,
            corruption: None,
            denoise_kernel: None,
            navigable_source: NavigableSource::Graph,
        }
    }

    /// k = 4, rank-decayed thresholds with the default policy, standard cache.
    pub fn adaptive() -> Self {
        Self {
            adaptive: AdaptiveConfig::adaptive(4, ThresholdPolicy::default()),
            cache: Some(CacheConfig::standard()),
            ..Self::baseline()
        }
    }
}

pub const DEFAULT_STOP_THRESHOLD: f64 = 0.999;

/// Everything an episode reads but never mutates.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeContext<'a> {
    pub env: &'a EnvGraph,
    pub encoder: &'a Encoder,
    pub renderer: &'a Renderer,
    pub cost: &'a CostModel,
    /// Precomputed encoder traces, used when they match the agent.
    pub traces: Option<&'a ObservationTraces>,
}

/// Full-depth encoder traces of every view of every node, as observed
/// without corruption.
///
/// Uncorrupted observations are a pure function of the node, so any exit
/// the encoder would take on them can be read off the stored trace. Runs
/// with corruption ignore the table.
#[derive(Debug, Clone)]
pub struct ObservationTraces {
    denoise_kernel: Option<usize>,
    nodes: Vec<Vec<LayerTrace>>,
}

impl ObservationTraces {
    pub fn build(
        env: &EnvGraph,
        encoder: &Encoder,
        renderer: &Renderer,
        denoise_kernel: Option<usize>,
    ) -> Result<Self> {
        let nodes = (0..env.node_count())
            .map(|u| {
                env.node(u)
                    .view_latents()
                    .iter()
                    .map(|latent| {
                        let mut img = renderer.render(latent)?;
                        if let Some(k) = denoise_kernel {
                            img = median_filter(&img, k)?;
                        }
                        Ok(encoder.encode_full(&img)?.1)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { denoise_kernel, nodes })
    }

    pub fn denoise_kernel(&self) -> Option<usize> {
        self.denoise_kernel
    }

    pub fn node(&self, u: usize) -> &[LayerTrace] {
        &self.nodes[u]
    }

    fn for_agent(&self, agent: &AgentConfig, node_count: usize) -> Option<&Self> {
        (agent.corruption.is_none() && agent.denoise_kernel == self.denoise_kernel && self.nodes.len() == node_count)
            .then_some(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub node: usize,
    pub navigable: ViewSet,
    pub action: Action,
    pub dispositions: Vec<Disposition>,
    pub cost: StepCost,
    pub lookups: usize,
    pub hits: Vec<HitRecord>,
    /// The scan predictor found no opening; the agent stopped.
    pub empty_prediction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub spec: EpisodeSpec,
    /// Visited node ids, starting with the start node.
    pub trajectory: Vec<usize>,
    pub steps: Vec<StepRecord>,
    /// The step limit ended the episode.
    pub forced_stop: bool,
    pub ledger: CostLedger,
    pub cache: Option<CacheStats>,
}

impl Episode {
    pub fn final_node(&self) -> usize {
        *self.trajectory.last().expect("trajectory starts with the start node")
    }
}

/// Renders the observation at `node`, applying corruption and denoising.
pub fn observe(ctx: &EpisodeContext<'_>, node: usize, agent: &AgentConfig, stream: &Stream) -> Result<Vec<ViewImage>> {
    let latents = ctx.env.node(node).view_latents();
    latents
        .iter()
        .enumerate()
        .map(|(idx, latent)| {
            let mut img = ctx.renderer.render(latent)?;
            if let Some(spec) = agent.corruption {
                let mut s = stream.fork_indexed("view", idx as u64 + 1);
                img = corrupt(&img, spec.kind, spec.severity, &mut s)?;
            }
            if let Some(kernel) = agent.denoise_kernel {
                img = median_filter(&img, kernel)?;
            }
            Ok(img)
        })
        .collect()
}

/// Runs one episode: observe, process the panorama, let the greedy policy
/// pick a navigable view or STOP, move; until STOP or the step limit.
pub fn run_episode(
    ctx: &EpisodeContext<'_>,
    spec: &EpisodeSpec,
    agent: &AgentConfig,
    stream: &Stream,
) -> Result<Episode> {
    let env = ctx.env;
    if spec.start >= env.node_count() || spec.goal >= env.node_count() {
        return Err(Error::InvalidEpisode("start or goal outside the graph".into()));
    }
    if !env.distance(spec.start, spec.goal).is_finite() {
        return Err(Error::InvalidEpisode("goal unreachable from start".into()));
    }
    let mut cache = match &agent.cache {
        Some(cfg) => {
            let mut hs = stream.fork("hash");
            let dim = ViewImage::CHANNELS * ctx.renderer.resolution() * ctx.renderer.resolution();
            let family = HashFamily::new(cfg.hyperplanes, dim, &mut hs)?;
            Some(CacheTable::new(family, cfg)?)
        }
        None => None,
    };
    // The goal image goes through the same denoiser as the observations.
    let mut goal_image = ctx.renderer.render(env.node(spec.goal).place_latent())?;
    if let Some(k) = agent.denoise_kernel {
        goal_image = median_filter(&goal_image, k)?;
    }
    let (goal_embedding, _) = ctx.encoder.encode_full(&goal_image)?;

    let mut node = spec.start;
    let mut trajectory = vec![node];
    let mut steps = Vec::new();
    let mut ledger = CostLedger::new();
    let mut stopped = false;
    let corrupt_stream = stream.fork("corrupt");
    let traces = ctx.traces.and_then(|t| t.for_agent(agent, env.node_count()));

    for t in 0..spec.step_limit {
        let views = observe(ctx, node, agent, &corrupt_stream.fork_indexed("step", t as u64))?;
        let (navigable, subgoal_macs) = match agent.navigable_source {
            NavigableSource::Graph => (env.navigable_views(node), 0),
            NavigableSource::Scan(cfg) => {
                let scan = env.node(node).scan(env.params().max_range)?;
                let set = scan_to_subgoals(&scan, &cfg)?;
                (set.view_set()?, SubgoalConfig::macs_per_scan())
            }
        };
        if navigable.is_empty() {
            let cost = StepCost {
                subgoal: subgoal_macs,
                ..StepCost::default()
            };
            ledger.record(cost);
            steps.push(StepRecord {
                node,
                navigable,
                action: Action::Stop,
                dispositions: vec![Disposition::Masked; VIEW_COUNT],
                cost,
                lookups: 0,
                hits: Vec::new(),
                empty_prediction: true,
            });
            stopped = true;
            break;
        }
        let panorama = Panorama::new(views, navigable)?;
        let out = process_panorama(
            &panorama,
            ctx.encoder,
            &agent.adaptive,
            cache.as_mut(),
            ctx.cost,
            subgoal_macs,
            traces.map(|t| t.node(node)),
        )?;
        let action = greedy_policy(&out.embeddings, &goal_embedding, navigable, agent.stop_threshold)?;
        ledger.record(out.cost);
        steps.push(StepRecord {
            node,
            navigable,
            action,
            dispositions: out.dispositions,
            cost: out.cost,
            lookups: out.lookups,
            hits: out.hits,
            empty_prediction: false,
        });
        match action {
            Action::Stop => {
                stopped = true;
                break;
            }
            Action::Move(view) => {
                let next = match agent.navigable_source {
                    NavigableSource::Graph => env.neighbor_at_view(node, view),
                    NavigableSource::Scan(_) => env.neighbor_nearest_view(node, view),
                }
                .ok_or_else(|| Error::InvalidEpisode("chosen view has no neighbour".into()))?;
                node = next;
                trajectory.push(node);
            }
        }
    }

    Ok(Episode {
        spec: *spec,
        trajectory,
        steps,
        forced_stop: !stopped,
        ledger,
        cache: cache.map(|c| *c.stats()),
    })
}
