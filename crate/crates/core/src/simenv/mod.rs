//! Procedural navigation environments and everything the agent needs to run
//! in them: view rendering, visual corruptions, the greedy policy and the
//! navigation metrics.

pub mod corrupt;
pub mod graph;
pub mod metrics;
pub mod policy;
pub mod render;

pub use corrupt::{corrupt, Corruption, CorruptionSpec};
pub use graph::{generate_env, EnvGraph, EnvParams, NavLink, Node};
pub use metrics::{compute_metrics, sample_episodes, EpisodeMetrics, EpisodeSpec, MetricsReport, SuiteParams};
pub use policy::{greedy_policy, Action};
pub use render::{render_view, Renderer};
