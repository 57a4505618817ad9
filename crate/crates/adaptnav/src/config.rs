//! Run configuration: one TOML document, validated before any work starts.

use std::path::{Path, PathBuf};

use adaptnav_core::lsh::CacheConfig;
use adaptnav_core::pipeline::{AgentConfig, NavigableSource};
use adaptnav_core::simenv::{Corruption, CorruptionSpec, EnvParams, SuiteParams};
use adaptnav_core::subgoal::SubgoalConfig;
use adaptnav_core::{AdaptiveConfig, EncoderConfig, Seed, ThresholdPolicy, Topology, VIEW_COUNT};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderProfile {
    /// 12-layer, 64-wide encoder on 32x32 views.
    Desk,
}

/// Shape the ledger charges for each encoded layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostProfile {
    VitB16,
    /// Charge the executed encoder's own shape.
    Executed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub profile: EncoderProfile,
    pub seed: u64,
    pub cost_profile: CostProfile,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            profile: EncoderProfile::Desk,
            seed: 7,
            cost_profile: CostProfile::VitB16,
        }
    }
}

impl EncoderSection {
    pub fn encoder_config(&self) -> EncoderConfig {
        match self.profile {
            EncoderProfile::Desk => EncoderConfig::desk(Seed(self.seed)),
        }
    }

    pub fn cost_config(&self) -> EncoderConfig {
        match self.cost_profile {
            CostProfile::VitB16 => EncoderConfig::vit_b16(),
            CostProfile::Executed => self.encoder_config(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExitSection {
    pub enabled: bool,
    pub t0: f64,
    /// `A` in absolute units (default 9e-4).
    pub aggressiveness: f64,
    pub round_decimals: u32,
    pub full_compute_cutoff: f64,
}

impl Default for ExitSection {
    fn default() -> Self {
        let p = ThresholdPolicy::default();
        Self {
            enabled: true,
            t0: p.t0,
            aggressiveness: p.aggressiveness,
            round_decimals: p.round_decimals,
            full_compute_cutoff: p.full_compute_cutoff,
        }
    }
}

impl ExitSection {
    pub fn policy(&self) -> ThresholdPolicy {
        ThresholdPolicy {
            t0: self.t0,
            aggressiveness: self.aggressiveness,
            round_decimals: self.round_decimals,
            full_compute_cutoff: self.full_compute_cutoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheSection {
    pub enabled: bool,
    pub hyperplanes: usize,
    pub similarity_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_pairs: Option<usize>,
}

impl Default for CacheSection {
    fn default() -> Self {
        let c = CacheConfig::standard();
        Self {
            enabled: true,
            hyperplanes: c.hyperplanes,
            similarity_threshold: c.similarity_threshold,
            max_pairs: c.max_pairs,
        }
    }
}

impl CacheSection {
    pub fn cache_config(&self) -> CacheConfig {
        CacheConfig {
            hyperplanes: self.hyperplanes,
            similarity_threshold: self.similarity_threshold,
            max_pairs: self.max_pairs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgoalMode {
    /// Navigable views come from the graph.
    Graph,
    /// Navigable views are predicted from the occupancy scan.
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubgoalSection {
    pub mode: SubgoalMode,
    pub clearance_deg: f64,
    pub min_depth: f64,
    pub split_deg: f64,
}

impl Default for SubgoalSection {
    fn default() -> Self {
        let s = SubgoalConfig::default();
        Self {
            mode: SubgoalMode::Graph,
            clearance_deg: s.clearance_deg,
            min_depth: s.min_depth,
            split_deg: s.split_deg,
        }
    }
}

impl SubgoalSection {
    pub fn subgoal_config(&self) -> SubgoalConfig {
        SubgoalConfig {
            clearance_deg: self.clearance_deg,
            min_depth: self.min_depth,
            split_deg: self.split_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionSection {
    /// No corruption when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<Corruption>,
    pub severity: u8,
    /// Median filter kernel applied to observations and the goal view.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denoise_kernel: Option<usize>,
}

impl Default for CorruptionSection {
    fn default() -> Self {
        Self {
            kind: None,
            severity: 3,
            denoise_kernel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSection {
    /// Episodes per seed.
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub step_limit: usize,
    pub success_radius: f64,
    pub stop_threshold: f64,
}

impl Default for SuiteSection {
    fn default() -> Self {
        let s = SuiteParams::default();
        Self {
            episodes: s.episodes,
            seeds: vec![0],
            step_limit: s.step_limit,
            success_radius: s.success_radius,
            stop_threshold: adaptnav_core::pipeline::DEFAULT_STOP_THRESHOLD,
        }
    }
}

impl SuiteSection {
    pub fn suite_params(&self) -> SuiteParams {
        SuiteParams {
            episodes: self.episodes,
            success_radius: self.success_radius,
            step_limit: self.step_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Falls back to `ADAPTNAV_OUT_DIR`, then the working directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub encoder: EncoderSection,
    /// k-extension width; 36 or more processes every view.
    pub k: usize,
    pub topology: Topology,
    pub early_exit: ExitSection,
    pub cache: CacheSection,
    pub subgoal: SubgoalSection,
    pub corruption: CorruptionSection,
    pub suite: SuiteSection,
    /// Environment generated for each suite seed; its `seed` is an offset
    /// added to the suite seed. Replaced by the file's parameters when an
    /// environment file is given.
    pub env: EnvParams,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::adaptive()
    }
}

impl RunConfig {
    /// k = 4, rank-decayed exits, cache on.
    pub fn adaptive() -> Self {
        Self {
            encoder: EncoderSection::default(),
            k: 4,
            topology: Topology::Linear,
            early_exit: ExitSection::default(),
            cache: CacheSection::default(),
            subgoal: SubgoalSection::default(),
            corruption: CorruptionSection::default(),
            suite: SuiteSection::default(),
            env: EnvParams::default(),
            output: OutputSection::default(),
        }
    }

    /// Every view encoded at full depth, no cache.
    pub fn baseline() -> Self {
        Self {
            k: VIEW_COUNT,
            early_exit: ExitSection {
                enabled: false,
                ..ExitSection::default()
            },
            cache: CacheSection {
                enabled: false,
                ..CacheSection::default()
            },
            ..Self::adaptive()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "adaptive" => Ok(Self::adaptive()),
            "baseline" => Ok(Self::baseline()),
            other => Err(AppError::Usage(format!(
                "unknown preset {other:?} (expected adaptive or baseline)"
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("run config serializes to a TOML table")
    }

    /// Loads `path` (or a preset when absent) and applies `key=value`
    /// overrides, where keys are dotted paths such as `cache.enabled`.
    pub fn load(path: Option<&Path>, preset: &str, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
                let base = Self::preset(preset)?.to_table();
                merge(base, parse_table(&text)?)
            }
            None => Self::preset(preset)?.to_table(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AppError::Config(m));
        self.encoder.encoder_config().validate()?;
        if self.early_exit.enabled {
            self.early_exit.policy().validate()?;
        }
        if self.cache.enabled {
            self.cache.cache_config().validate()?;
        }
        self.subgoal.subgoal_config().validate()?;
        if self.corruption.kind.is_some() && !(1..=5).contains(&self.corruption.severity) {
            return bad(format!(
                "corruption severity {} outside 1..=5",
                self.corruption.severity
            ));
        }
        if let Some(k) = self.corruption.denoise_kernel {
            let side = self.encoder.encoder_config().image_side;
            if k == 0 || k % 2 == 0 || k > side {
                return bad(format!("denoise kernel {k} must be odd and at most {side}"));
            }
        }
        let s = &self.suite;
        if s.episodes == 0 {
            return bad("suite.episodes must be positive".into());
        }
        if s.seeds.is_empty() {
            return bad("suite.seeds must not be empty".into());
        }
        if s.step_limit == 0 {
            return bad("suite.step_limit must be positive".into());
        }
        if !(s.success_radius.is_finite() && s.success_radius >= 0.0) {
            return bad("suite.success_radius must be finite and nonnegative".into());
        }
        if !s.stop_threshold.is_finite() {
            return bad("suite.stop_threshold must be finite".into());
        }
        self.env.validate()?;
        Ok(())
    }

    pub fn agent(&self) -> AgentConfig {
        let adaptive = AdaptiveConfig {
            k: self.k,
            topology: self.topology,
            early_exit: self.early_exit.enabled.then(|| self.early_exit.policy()),
        };
        AgentConfig {
            adaptive,
            cache: self.cache.enabled.then(|| self.cache.cache_config()),
            stop_threshold: self.suite.stop_threshold,
            corruption: self.corruption.kind.map(|kind| CorruptionSpec {
                kind,
                severity: self.corruption.severity,
            }),
            denoise_kernel: self.corruption.denoise_kernel,
            navigable_source: match self.subgoal.mode {
                SubgoalMode::Graph => NavigableSource::Graph,
                SubgoalMode::Scan => NavigableSource::Scan(self.subgoal.subgoal_config()),
            },
        }
    }

    /// Parameters of the environment generated for suite seed `seed`.
    pub fn env_for_seed(&self, seed: u64) -> EnvParams {
        EnvParams {
            seed: Seed(self.env.seed.0.wrapping_add(seed)),
            ..self.env
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os("ADAPTNAV_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| AppError::Config(e.message().to_string()))
}

/// Overlays `top` on `base`, recursing into tables.
fn merge(mut base: toml::Table, top: toml::Table) -> toml::Table {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => {
                let merged = merge(std::mem::take(b), t);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

/// `a.b.c=value`; the value is read as TOML, or as a bare string when it
/// does not parse.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| AppError::Usage(format!("override {spec:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(AppError::Usage(format!("override key {key:?} is malformed")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("path has at least one part");
    let mut cur = table;
    for p in parents {
        cur = match cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        {
            toml::Value::Table(t) => t,
            _ => return Err(AppError::Config(format!("override {key:?}: {p:?} is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
