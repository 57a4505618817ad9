//! The work behind each subcommand, callable without the binary.

use std::path::Path;
use std::sync::Arc;

use adaptnav_core::simenv::{generate_env, Corruption, EnvGraph, EnvParams};
use adaptnav_core::subgoal::{evaluate_sgm, SgmEvaluation, SinkhornConfig};
use adaptnav_core::{Seed, Stream, ViewImage, VIEW_COUNT};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::envfile;
use crate::error::{AppError, Result};
use crate::report::{summary_cells, EnvironmentInfo, RunReport, Summary, SUMMARY_COLUMNS};
use crate::runner::{PreparedEnv, SharedEnv, Workbench};
use crate::table::Table;

pub fn gen_env(params: &EnvParams, path: &Path) -> Result<(EnvGraph, String)> {
    let env = generate_env(params)?;
    let digest = envfile::write(&env, path)?;
    Ok((env, digest))
}

/// A run's config with the environment file (if any) folded in.
pub struct Resolved {
    pub config: RunConfig,
    pub bench: Workbench,
    file: Option<(Arc<SharedEnv>, String)>,
}

/// With a file, every seed shares it and the config's `env` must either be
/// left at its defaults or agree with the file (seed aside).
pub fn resolve(cfg: &RunConfig, env_file: Option<&Path>) -> Result<Resolved> {
    cfg.validate()?;
    let mut config = cfg.clone();
    let file = match env_file {
        None => None,
        Some(path) => {
            let (env, digest) = envfile::read(path)?;
            let unseeded = |p: &EnvParams| EnvParams { seed: Seed(0), ..*p };
            let defaults = unseeded(&EnvParams::default());
            if unseeded(&cfg.env) != defaults && unseeded(&cfg.env) != unseeded(env.params()) {
                return Err(AppError::Config(format!(
                    "config [env] disagrees with environment file {}",
                    path.display()
                )));
            }
            config.env = *env.params();
            Some((Arc::new(SharedEnv::new(env)), digest))
        }
    };
    let bench = Workbench::new(&config)?;
    Ok(Resolved { config, bench, file })
}

impl Resolved {
    /// Environments for every suite seed of `cfg`, which must share this
    /// resolution's environment source.
    pub fn envs(&self, cfg: &RunConfig) -> Result<Vec<PreparedEnv>> {
        match &self.file {
            Some((shared, _)) => Ok(cfg
                .suite
                .seeds
                .iter()
                .map(|&s| PreparedEnv::new(s, Arc::clone(shared)))
                .collect()),
            None => self.bench.generate(cfg),
        }
    }

    pub fn environment_info(&self) -> EnvironmentInfo {
        match &self.file {
            Some((_, digest)) => EnvironmentInfo {
                source: "file".into(),
                sha256: Some(digest.clone()),
            },
            None => EnvironmentInfo {
                source: "generated".into(),
                sha256: None,
            },
        }
    }
}

pub fn run(cfg: &RunConfig, env_file: Option<&Path>) -> Result<RunReport> {
    let r = resolve(cfg, env_file)?;
    let envs = r.envs(&r.config)?;
    let records = r.bench.run(&envs, &r.config.agent(), &r.config.suite.suite_params())?;
    Ok(RunReport::new(r.config.clone(), r.environment_info(), records))
}

/// One ablation axis with its grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    K(Vec<usize>),
    Aggressiveness(Vec<f64>),
    SimilarityThreshold(Vec<f64>),
    TemporalOverlap(Vec<f64>),
}

impl Sweep {
    /// `k=1,2,3`, `a=0,9e-4`, `sim=0.8,0.9` or `rho=0,0.4,0.8`.
    pub fn parse(spec: &str) -> Result<Self> {
        let usage = |m: String| AppError::Usage(m);
        let (name, values) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("sweep {spec:?} is not name=v1,v2,...")))?;
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if items.is_empty() {
            return Err(usage(format!("sweep {name:?} has an empty grid")));
        }
        let floats = || -> Result<Vec<f64>> {
            items
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| usage(format!("{v:?} is not a number"))))
                .collect()
        };
        match name.trim() {
            "k" => Ok(Sweep::K(
                items
                    .iter()
                    .map(|v| v.parse().map_err(|_| usage(format!("{v:?} is not a view count"))))
                    .collect::<Result<_>>()?,
            )),
            "a" | "aggressiveness" => Ok(Sweep::Aggressiveness(floats()?)),
            "sim" | "similarity_threshold" => Ok(Sweep::SimilarityThreshold(floats()?)),
            "rho" | "temporal_overlap" => Ok(Sweep::TemporalOverlap(floats()?)),
            other => Err(usage(format!("unknown sweep axis {other:?} (k, a, sim, rho)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Sweep::K(_) => "k",
            Sweep::Aggressiveness(_) => "a",
            Sweep::SimilarityThreshold(_) => "sim",
            Sweep::TemporalOverlap(_) => "rho",
        }
    }

    /// Grid points as (label, config).
    pub fn points(&self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        let with = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Sweep::K(ks) => ks.iter().map(|&k| (k.to_string(), with(&|c| c.k = k))).collect(),
            Sweep::Aggressiveness(v) => v
                .iter()
                .map(|&a| (a.to_string(), with(&|c| c.early_exit.aggressiveness = a)))
                .collect(),
            Sweep::SimilarityThreshold(v) => v
                .iter()
                .map(|&s| (s.to_string(), with(&|c| c.cache.similarity_threshold = s)))
                .collect(),
            Sweep::TemporalOverlap(v) => v
                .iter()
                .map(|&r| (r.to_string(), with(&|c| c.env.temporal_overlap = r)))
                .collect(),
        }
    }
}

pub fn ablate(cfg: &RunConfig, sweep: &Sweep, env_file: Option<&Path>) -> Result<Table> {
    if env_file.is_some() && matches!(sweep, Sweep::TemporalOverlap(_)) {
        return Err(AppError::Usage(
            "a rho sweep regenerates environments; drop --env".into(),
        ));
    }
    let r = resolve(cfg, env_file)?;
    let points = sweep.points(&r.config);
    for (_, c) in &points {
        c.validate()?;
    }
    let mut header = vec!["parameter", "value"];
    header.extend(SUMMARY_COLUMNS);
    let mut table = Table::new(header);
    let shared = match sweep {
        Sweep::TemporalOverlap(_) => None,
        _ => Some(r.envs(&r.config)?),
    };
    for (label, c) in &points {
        let envs = match &shared {
            Some(e) => e.clone(),
            None => r.envs(c)?,
        };
        let records = r.bench.run(&envs, &c.agent(), &c.suite.suite_params())?;
        let mut row = vec![sweep.name().to_string(), label.clone()];
        row.extend(summary_cells(&Summary::of(&records)));
        table.push(row);
    }
    Ok(table)
}

/// Clean, corrupted and corrupted-then-denoised runs of one config.
pub fn corrupt_suite(
    cfg: &RunConfig,
    kinds: &[Corruption],
    severity: u8,
    denoise_kernel: usize,
    env_file: Option<&Path>,
) -> Result<Table> {
    let mut conditions: Vec<(String, RunConfig)> = Vec::new();
    let mut clean = cfg.clone();
    clean.corruption.kind = None;
    clean.corruption.denoise_kernel = None;
    conditions.push(("clean".into(), clean.clone()));
    for &kind in kinds {
        let mut c = clean.clone();
        c.corruption.kind = Some(kind);
        c.corruption.severity = severity;
        conditions.push((kind.name().into(), c.clone()));
        c.corruption.denoise_kernel = Some(denoise_kernel);
        conditions.push((format!("{}+median{denoise_kernel}", kind.name()), c));
    }
    for (_, c) in &conditions {
        c.validate()?;
    }
    let r = resolve(cfg, env_file)?;
    let envs = r.envs(&r.config)?;
    let mut header = vec!["condition"];
    header.extend(SUMMARY_COLUMNS);
    let mut table = Table::new(header);
    for (name, c) in &conditions {
        let records = r.bench.run(&envs, &c.agent(), &c.suite.suite_params())?;
        let mut row = vec![name.clone()];
        row.extend(summary_cells(&Summary::of(&records)));
        table.push(row);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationCurve {
    pub samples: usize,
    /// `similarity[i]` compares the pooled outputs of layers `i + 1` and
    /// `i + 2`.
    pub similarity: Vec<f64>,
}

impl SaturationCurve {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["layers", "similarity"]);
        for (i, s) in self.similarity.iter().enumerate() {
            t.push(vec![format!("{}-{}", i + 1, i + 2), format!("{s:.6}")]);
        }
        t
    }
}

/// Mean consecutive-layer similarity over `samples` views drawn from the
/// first suite seed's environment.
pub fn saturation(cfg: &RunConfig, samples: usize) -> Result<SaturationCurve> {
    if samples == 0 {
        return Err(AppError::Usage("saturation needs at least one sample".into()));
    }
    let seed = cfg.suite.seeds[0];
    let bench = Workbench::new(cfg)?;
    let env = generate_env(&cfg.env_for_seed(seed))?;
    let mut stream = Stream::new(Seed(seed)).fork("saturation");
    let images = (0..samples)
        .map(|_| {
            let node = env.node(stream.below(env.node_count()));
            bench.renderer.render(&node.views[stream.below(VIEW_COUNT)])
        })
        .collect::<adaptnav_core::Result<Vec<ViewImage>>>()?;
    Ok(SaturationCurve {
        samples,
        similarity: bench.encoder.saturation_curve(&images)?,
    })
}

pub fn evaluate_subgoals(cfg: &RunConfig, env: &EnvGraph, seed: u64) -> Result<SgmEvaluation> {
    let mut stream = Stream::new(Seed(seed)).fork("sgm");
    Ok(evaluate_sgm(
        env,
        &cfg.subgoal.subgoal_config(),
        &SinkhornConfig::default(),
        &mut stream,
    )?)
}
