//! Scan-only subgoal prediction and its Sinkhorn evaluation.
//!
//! Navigable headings are read off a 360-bin range scan by free-sector
//! detection, before any image is encoded. Predictions are scored against
//! ground truth with the debiased entropic OT (Sinkhorn) divergence between
//! point sets on the unit circle, squared-Euclidean ground cost.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::simenv::graph::EnvGraph;
use crate::view::{ViewSet, VIEW_COUNT};

pub const SCAN_BINS: usize = 360;

const ANNEAL: f64 = 0.7;

/// A polar range scan; bin `b` (1-based) covers headings `[b-1, b)` degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyScan {
    bins: Vec<f64>,
    max_range: f64,
}

impl OccupancyScan {
    pub fn new(bins: Vec<f64>, max_range: f64) -> Result<Self> {
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(Error::Config(format!("max range {max_range} must be positive")));
        }
        if bins.len() != SCAN_BINS {
            return Err(Error::Dimension {
                expected: SCAN_BINS,
                got: bins.len(),
            });
        }
        if let Some(b) = bins.iter().position(|&r| !(r > 0.0 && r <= max_range)) {
            return Err(Error::Config(format!(
                "reading {} in bin {} outside (0, {max_range}]",
                bins[b],
                b + 1
            )));
        }
        Ok(Self { bins, max_range })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    /// Rotates by `m` bins: new bin `b` reads old bin `b - m`.
    pub fn rotated(&self, m: usize) -> OccupancyScan {
        let mut bins = self.bins.clone();
        bins.rotate_right(m % SCAN_BINS);
        OccupancyScan {
            bins,
            max_range: self.max_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubgoalConfig {
    /// Minimum width (degrees) of a free run.
    pub clearance_deg: f64,
    /// A bin is free when its reading is at least this (meters).
    pub min_depth: f64,
    /// Runs wider than this are split into equal parts no wider than it.
    pub split_deg: f64,
}

impl Default for SubgoalConfig {
    fn default() -> Self {
        Self {
            clearance_deg: 8.0,
            min_depth: 2.0,
            split_deg: 20.0,
        }
    }
}

impl SubgoalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clearance_deg >= 0.0 && self.min_depth > 0.0 && self.split_deg >= 1.0)
            || !self.clearance_deg.is_finite()
            || !self.min_depth.is_finite()
            || !self.split_deg.is_finite()
        {
            return Err(Error::Config(
                "subgoal config needs clearance >= 0, depth > 0, split >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Ledger charge for one detection pass: a compare and a few
    /// accumulations per bin.
    pub fn macs_per_scan() -> u64 {
        4 * SCAN_BINS as u64
    }
}

/// Predicted navigable views with weights summing to 1 (when non-empty).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubgoalSet {
    /// `(view, weight)` sorted by view.
    pub candidates: Vec<(usize, f64)>,
}

impl SubgoalSet {
    /// Uniform weights over a set of views.
    pub fn uniform(views: ViewSet) -> Self {
        let w = 1.0 / views.len().max(1) as f64;
        Self {
            candidates: views.iter().map(|j| (j, w)).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn views(&self) -> impl Iterator<Item = usize> + '_ {
        self.candidates.iter().map(|c| c.0)
    }

    pub fn view_set(&self) -> Result<ViewSet> {
        ViewSet::from_indices(self.views())
    }

    pub fn to_distribution(&self) -> Result<DiscreteDistribution> {
        let points = self.views().map(view_point).collect();
        DiscreteDistribution::new(points, self.candidates.iter().map(|c| c.1).collect())
    }
}

/// Unit-circle point at the centre heading of view `j`.
pub fn view_point(j: usize) -> [f64; 2] {
    let h = (10.0 * j as f64 - 5.0).to_radians();
    [libm::cos(h), libm::sin(h)]
}

/// Free-sector detection.
///
/// Maximal circular runs of bins reading at least `min_depth` and at least
/// `clearance_deg` wide become candidates; runs wider than `split_deg` are
/// split into equal parts. Each part's midpoint heading maps to view
/// `ceil(heading / 10)` and carries weight proportional to its width.
pub fn scan_to_subgoals(scan: &OccupancyScan, cfg: &SubgoalConfig) -> Result<SubgoalSet> {
    cfg.validate()?;
    let free: Vec<bool> = scan.bins.iter().map(|&r| r >= cfg.min_depth).collect();
    // Runs as (first 1-based bin, width in bins).
    let mut runs: Vec<(usize, usize)> = Vec::new();
    match free.iter().position(|f| !f) {
        None => runs.push((1, SCAN_BINS)),
        Some(blocked) => {
            let mut current: Option<(usize, usize)> = None;
            for step in 1..=SCAN_BINS {
                let idx = (blocked + step) % SCAN_BINS;
                if free[idx] {
                    match current.as_mut() {
                        Some(run) => run.1 += 1,
                        None => current = Some((idx + 1, 1)),
                    }
                } else if let Some(run) = current.take() {
                    runs.push(run);
                }
            }
            if let Some(run) = current {
                runs.push(run);
            }
        }
    }

    let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (start, width) in runs {
        if (width as f64) < cfg.clearance_deg {
            continue;
        }
        let parts = libm::ceil(width as f64 / cfg.split_deg).max(1.0) as usize;
        for p in 0..parts {
            // Part p covers half-degree span [lo2, hi2) from the run start.
            let lo2 = 2 * width * p / parts;
            let hi2 = 2 * width * (p + 1) / parts;
            // Midpoint in half-degrees, measured from heading 0.
            let mid2 = (2 * (start - 1) + (lo2 + hi2) / 2) % (2 * SCAN_BINS);
            let view = if mid2 == 0 { VIEW_COUNT } else { mid2.div_ceil(20) };
            let w = (hi2 - lo2) as f64;
            *weights.entry(view).or_insert(0.0) += w;
            total += w;
        }
    }
    Ok(SubgoalSet {
        candidates: weights.into_iter().map(|(v, w)| (v, w / total)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    points: Vec<[f64; 2]>,
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<[f64; 2]>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::NotADistribution(format!(
                "{} points with {} masses",
                points.len(),
                masses.len()
            )));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::NotADistribution("masses must be finite and nonnegative".into()));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NotADistribution("non-finite support point".into()));
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotADistribution(format!("masses sum to {sum}")));
        }
        Ok(Self { points, masses })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// L1 marginal violation at which iteration stops.
    pub tolerance: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iters: 500,
            tolerance: 1e-6,
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(values.map(|v| libm::exp(v - m)).sum::<f64>())
}

struct OtProblem<'a> {
    cost: Vec<f64>,
    a: &'a [f64],
    b: &'a [f64],
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    n: usize,
    m: usize,
}

impl OtProblem<'_> {
    fn plan(&self, f: &[f64], g: &[f64], eps: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.n * self.m];
        for i in 0..self.n {
            for j in 0..self.m {
                let k = i * self.m + j;
                p[k] = libm::exp(self.log_a[i] + self.log_b[j] + (f[i] + g[j] - self.cost[k]) / eps);
            }
        }
        p
    }

    fn sweep(&self, f: &mut [f64], g: &mut [f64], eps: f64) {
        let m = self.m;
        for i in 0..self.n {
            let row = &self.cost[i * m..(i + 1) * m];
            f[i] = -eps * log_sum_exp((0..m).map(|j| self.log_b[j] + (g[j] - row[j]) / eps));
        }
        for j in 0..m {
            g[j] = -eps * log_sum_exp((0..self.n).map(|i| self.log_a[i] + (f[i] - self.cost[i * m + j]) / eps));
        }
    }

    /// Dual objective, up to the constant `eps`.
    fn dual(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        let lin: f64 = dot(self.a, f) + dot(self.b, g);
        lin - eps * self.plan(f, g, eps).iter().sum::<f64>()
    }

    fn row_residual(&self, plan: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| (plan[i * self.m..(i + 1) * self.m].iter().sum::<f64>() - self.a[i]).abs())
            .sum()
    }

    /// Damped Newton ascent step on the dual with the last `g` pinned.
    fn newton(&self, f: &mut [f64], g: &mut [f64], eps: f64) {
        let (n, m) = (self.n, self.m);
        let dim = n + m - 1;
        if dim == 0 {
            return;
        }
        let plan = self.plan(f, g, eps);
        let mut h = vec![0.0; dim * dim];
        let mut grad = vec![0.0; dim];
        for i in 0..n {
            let r: f64 = plan[i * m..(i + 1) * m].iter().sum();
            h[i * dim + i] = r;
            grad[i] = self.a[i] - r;
            for j in 0..m - 1 {
                let v = plan[i * m + j];
                h[i * dim + n + j] = v;
                h[(n + j) * dim + i] = v;
            }
        }
        for j in 0..m - 1 {
            let c: f64 = (0..n).map(|i| plan[i * m + j]).sum();
            h[(n + j) * dim + n + j] = c;
            grad[n + j] = self.b[j] - c;
        }
        // Weakly coupled clusters make the Hessian nearly singular; a small
        // ridge keeps the factorization alive and the line search sorts out
        // the step length.
        let scale = (0..dim).map(|k| h[k * dim + k]).fold(0.0, f64::max);
        let mut ridge = 1e-14 * scale;
        let step = loop {
            let mut damped = h.clone();
            for k in 0..dim {
                damped[k * dim + k] += ridge;
            }
            if let Some(step) = cholesky_solve(&mut damped, &grad, dim) {
                break step;
            }
            ridge *= 100.0;
            if ridge > scale {
                return;
            }
        };
        let base = self.dual(f, g, eps);
        let mut t = 1.0;
        for _ in 0..40 {
            let nf: Vec<f64> = (0..n).map(|i| f[i] + t * eps * step[i]).collect();
            let mut ng = g.to_vec();
            for j in 0..m - 1 {
                ng[j] += t * eps * step[n + j];
            }
            if self.dual(&nf, &ng, eps) >= base {
                f.copy_from_slice(&nf);
                g.copy_from_slice(&ng);
                return;
            }
            t *= 0.5;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `H x = r` for symmetric positive definite `H` (overwritten).
fn cholesky_solve(h: &mut [f64], r: &[f64], dim: usize) -> Option<Vec<f64>> {
    for j in 0..dim {
        let mut d = h[j * dim + j];
        for k in 0..j {
            d -= h[j * dim + k] * h[j * dim + k];
        }
        if !(d > 1e-300) {
            return None;
        }
        let d = libm::sqrt(d);
        h[j * dim + j] = d;
        for i in j + 1..dim {
            let mut s = h[i * dim + j];
            for k in 0..j {
                s -= h[i * dim + k] * h[j * dim + k];
            }
            h[i * dim + j] = s / d;
        }
    }
    let mut y = r.to_vec();
    for i in 0..dim {
        for k in 0..i {
            y[i] -= h[i * dim + k] * y[k];
        }
        y[i] /= h[i * dim + i];
    }
    for i in (0..dim).rev() {
        for k in i + 1..dim {
            y[i] -= h[k * dim + i] * y[k];
        }
        y[i] /= h[i * dim + i];
    }
    y.iter().all(|v| v.is_finite()).then_some(y)
}

/// Entropic OT value `<a, f> + <b, g>` at the optimal dual potentials.
///
/// Log-domain Sinkhorn sweeps, with the regularization annealed
/// geometrically from the largest ground cost down to `epsilon`. Once at
/// the target, each iteration is a sweep followed, if the row marginals are
/// still off, by a damped Newton step on the dual; plain sweeps stall when
/// mass has to cross costs much larger than `epsilon`. Every iteration
/// counts toward `max_iters`.
fn entropic_ot(mu: &DiscreteDistribution, nu: &DiscreteDistribution, cfg: &SinkhornConfig) -> Result<f64> {
    let (n, m) = (mu.points.len(), nu.points.len());
    let cost: Vec<f64> = mu
        .points
        .iter()
        .flat_map(|p| {
            nu.points.iter().map(move |q| {
                let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                dx * dx + dy * dy
            })
        })
        .collect();
    let problem = OtProblem {
        a: &mu.masses,
        b: &nu.masses,
        log_a: mu.masses.iter().map(|&x| libm::log(x)).collect(),
        log_b: nu.masses.iter().map(|&x| libm::log(x)).collect(),
        cost,
        n,
        m,
    };
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let target = cfg.epsilon;
    let mut eps = problem.cost.iter().copied().fold(target, f64::max);
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        eps = (eps * ANNEAL).max(target);
        problem.sweep(&mut f, &mut g, eps);
        if eps > target {
            continue;
        }
        residual = problem.row_residual(&problem.plan(&f, &g, eps));
        if residual <= cfg.tolerance {
            let value = mu
                .masses
                .iter()
                .zip(&f)
                .chain(nu.masses.iter().zip(&g))
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, p)| w * p)
                .sum();
            return Ok(value);
        }
        problem.newton(&mut f, &mut g, eps);
    }
    Err(Error::Convergence {
        iterations: cfg.max_iters,
        residual,
    })
}

/// Debiased divergence `OT(μ,ν) - OT(μ,μ)/2 - OT(ν,ν)/2`.
///
/// The cross term is averaged over both argument orders, so the result is
/// exactly symmetric.
pub fn sinkhorn_divergence(mu: &DiscreteDistribution, nu: &DiscreteDistribution, cfg: &SinkhornConfig) -> Result<f64> {
    if !(cfg.epsilon.is_finite() && cfg.epsilon > 0.0) || cfg.max_iters == 0 {
        return Err(Error::Config(
            "sinkhorn needs epsilon > 0 and at least one iteration".into(),
        ));
    }
    let cross = 0.5 * (entropic_ot(mu, nu, cfg)? + entropic_ot(nu, mu, cfg)?);
    let self_mu = entropic_ot(mu, mu, cfg)?;
    let self_nu = entropic_ot(nu, nu, cfg)?;
    Ok(cross - 0.5 * (self_mu + self_nu))
}

/// Divergence of a prediction from the truth; an empty prediction is scored
/// as a uniform guess over all views and flagged.
pub fn prediction_divergence(predicted: &SubgoalSet, truth: &SubgoalSet, cfg: &SinkhornConfig) -> Result<(f64, bool)> {
    let truth = truth.to_distribution()?;
    if predicted.is_empty() {
        let fallback = SubgoalSet::uniform(ViewSet::all()).to_distribution()?;
        return Ok((sinkhorn_divergence(&fallback, &truth, cfg)?, true));
    }
    Ok((sinkhorn_divergence(&predicted.to_distribution()?, &truth, cfg)?, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgmEvaluation {
    pub mean_divergence: f64,
    /// Same predictions scored against a permutation of the truths.
    pub shuffled_baseline: f64,
    pub empty_predictions: usize,
    pub samples: usize,
}

/// Scores the scan detector on every node of `env` against its navigable
/// views.
pub fn evaluate_sgm(
    env: &EnvGraph,
    subgoal: &SubgoalConfig,
    sinkhorn: &SinkhornConfig,
    stream: &mut Stream,
) -> Result<SgmEvaluation> {
    let mut predictions = Vec::with_capacity(env.node_count());
    for u in 0..env.node_count() {
        let scan = env.node(u).scan(env.params().max_range)?;
        predictions.push(scan_to_subgoals(&scan, subgoal)?);
    }
    let truths: Vec<SubgoalSet> = (0..env.node_count())
        .map(|u| SubgoalSet::uniform(env.navigable_views(u)))
        .collect();
    evaluate_predictions(&predictions, &truths, sinkhorn, stream)
}

pub fn evaluate_predictions(
    predictions: &[SubgoalSet],
    truths: &[SubgoalSet],
    cfg: &SinkhornConfig,
    stream: &mut Stream,
) -> Result<SgmEvaluation> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = predictions.len();
    // Fisher-Yates permutation for the baseline.
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, stream.below(i + 1));
    }
    let mut sum = 0.0;
    let mut shuffled = 0.0;
    let mut empty = 0;
    for i in 0..n {
        let (d, flagged) = prediction_divergence(&predictions[i], &truths[i], cfg)?;
        sum += d;
        empty += usize::from(flagged);
        shuffled += prediction_divergence(&predictions[i], &truths[perm[i]], cfg)?.0;
    }
    Ok(SgmEvaluation {
        mean_divergence: sum / n as f64,
        shuffled_baseline: shuffled / n as f64,
        empty_predictions: empty,
        samples: n,
    })
}
