use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("vector has zero norm")]
    DegenerateVector,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid kernel size {kernel} for a {height}x{width} image")]
    InvalidKernel { kernel: usize, height: usize, width: usize },
    #[error("shape mismatch: expected {expected_height}x{expected_width}, got {height}x{width}")]
    Shape {
        expected_height: usize,
        expected_width: usize,
        height: usize,
        width: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid panorama: {0}")]
    InvalidPanorama(String),
    #[error("view index {0} outside 1..=36")]
    InvalidViewIndex(usize),
    #[error("no navigable views")]
    NoNavigableViews,
    #[error("invalid encoder configuration: {0}")]
    InvalidEncoderConfig(String),
    #[error("exit threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("batch has {images} images but {thresholds} thresholds")]
    BatchShape { images: usize, thresholds: usize },
    #[error("layer budget exceeded: {used} > {budget}")]
    BudgetExceeded { used: usize, budget: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("navigable views (rank 0) take no early-exit threshold")]
    NavigableNeedsNoThreshold,
    #[error("invalid threshold policy: {0}")]
    InvalidPolicy(String),
    #[error("exit layer {exit_layer} outside 1..={layers}")]
    Range { exit_layer: usize, layers: usize },
    #[error("invalid cache configuration: {0}")]
    InvalidCacheConfig(String),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("sinkhorn did not converge in {iterations} iterations (marginal residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("environment generation failed: {0}")]
    Gen(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("every navigable embedding is zero")]
    PolicyDegenerate,
}
