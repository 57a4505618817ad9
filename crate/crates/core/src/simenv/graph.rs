//! Random geometric navigation graphs with per-node panorama latents.
//!
//! Nodes lie uniformly in a square; nodes closer than a radius chosen for
//! the requested mean degree are joined, and leftover components are
//! bridged by their shortest connecting edge. A smooth random field over the
//! plane gives each location a "place" latent. A node's navigable view `j`
//! shows the place of the neighbour it points at; every other view shows
//! ambient scenery drawn from a chain over view indices with correlation
//! `σ_spatial` between adjacent views. Ambient views are drawn from a
//! world-wide anchor chain with probability `sqrt(ρ_temporal)` and from a
//! node-private chain otherwise, so two consecutive panoramas share view `j`
//! with probability `ρ_temporal`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Seed, Stream};
use crate::subgoal::{OccupancyScan, SCAN_BINS};
use crate::view::{ViewSet, VIEW_COUNT};

const FEATURES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    pub nodes: usize,
    /// Target mean node degree.
    pub branching: usize,
    pub spatial_smoothness: f64,
    pub temporal_overlap: f64,
    pub seed: Seed,
    pub latent_dim: usize,
    /// Square side is `node_spacing * sqrt(nodes)` meters.
    pub node_spacing: f64,
    /// Length scale (meters) of the place field.
    pub field_length_scale: f64,
    /// Noise added to a neighbour's place latent in the view that shows it.
    pub view_jitter: f64,
    /// Noise added to shared ambient latents.
    pub shared_jitter: f64,
    pub max_range: f64,
    /// Half width (degrees) of the free sector toward each neighbour.
    pub opening_half_width: f64,
    pub wall_min: f64,
    pub wall_max: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            nodes: 40,
            branching: 5,
            spatial_smoothness: 0.5,
            temporal_overlap: 0.8,
            seed: Seed(0),
            latent_dim: 32,
            node_spacing: 2.2,
            field_length_scale: 6.0,
            view_jitter: 0.05,
            shared_jitter: 0.02,
            max_range: 10.0,
            opening_half_width: 6.0,
            wall_min: 0.4,
            wall_max: 1.2,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        let gen = |m: &str| Err(Error::Gen(m.into()));
        if self.nodes < 2 {
            return Err(Error::Gen(format!("node count {} < 2", self.nodes)));
        }
        if self.nodes > 4096 {
            return gen("node count above 4096");
        }
        if self.branching == 0 || self.branching >= self.nodes {
            return Err(Error::Gen(format!(
                "branching {} must lie in 1..{}",
                self.branching, self.nodes
            )));
        }
        if !(0.0..=1.0).contains(&self.spatial_smoothness) {
            return gen("spatial smoothness outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.temporal_overlap) {
            return gen("temporal overlap outside [0, 1]");
        }
        if self.latent_dim == 0 {
            return gen("latent dimension must be positive");
        }
        let positive = [
            self.node_spacing,
            self.field_length_scale,
            self.max_range,
            self.wall_min,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return gen("spacing, length scale, range and wall distance must be positive");
        }
        if !(self.wall_max.is_finite() && self.wall_min <= self.wall_max && self.wall_max <= self.max_range) {
            return gen("wall range must satisfy wall_min <= wall_max <= max_range");
        }
        if !(self.view_jitter >= 0.0 && self.shared_jitter >= 0.0)
            || !self.view_jitter.is_finite()
            || !self.shared_jitter.is_finite()
        {
            return gen("jitter must be finite and nonnegative");
        }
        if !(self.opening_half_width > 0.0 && self.opening_half_width < 90.0) {
            return gen("opening half width outside (0, 90) degrees");
        }
        Ok(())
    }
}

/// Navigable view `view` of a node leads to `neighbor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavLink {
    pub view: usize,
    pub neighbor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub position: [f64; 2],
    pub place: Vec<f64>,
    /// 36 view latents, index 0 is view 1.
    pub views: Vec<Vec<f64>>,
    /// Sorted by view index.
    pub links: Vec<NavLink>,
    /// 360 range readings.
    pub scan: Vec<f64>,
}

impl Node {
    pub fn place_latent(&self) -> &[f64] {
        &self.place
    }

    pub fn view_latents(&self) -> &[Vec<f64>] {
        &self.views
    }

    pub fn scan(&self, max_range: f64) -> Result<OccupancyScan> {
        OccupancyScan::new(self.scan.clone(), max_range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvGraph {
    params: EnvParams,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    distances: Vec<f64>,
}

/// Heading from `from` to `to` in degrees, `(0, 360]`, counter-clockwise
/// from +x.
pub fn heading_deg(from: [f64; 2], to: [f64; 2]) -> f64 {
    let h = libm::atan2(to[1] - from[1], to[0] - from[0]).to_degrees();
    if h <= 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// View whose 10 degree sector `((j-1)·10, j·10]` contains the heading.
pub fn view_for_heading(h: f64) -> usize {
    (libm::ceil(h / 10.0) as usize).clamp(1, VIEW_COUNT)
}

fn circular_gap(a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(VIEW_COUNT - d)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

struct PlaceField {
    omega: Vec<[f64; 2]>,
    phase: Vec<f64>,
    amp: Vec<Vec<f64>>,
}

impl PlaceField {
    fn new(dim: usize, length_scale: f64, s: &mut Stream) -> Self {
        let omega = (0..FEATURES)
            .map(|_| [s.normal() / length_scale, s.normal() / length_scale])
            .collect();
        let phase = (0..FEATURES)
            .map(|_| s.uniform_in(0.0, core::f64::consts::TAU))
            .collect();
        let amp = (0..FEATURES).map(|_| (0..dim).map(|_| s.normal()).collect()).collect();
        Self { omega, phase, amp }
    }

    fn at(&self, p: [f64; 2]) -> Vec<f64> {
        let dim = self.amp[0].len();
        let mut out = vec![0.0; dim];
        let norm = libm::sqrt(2.0 / FEATURES as f64);
        for m in 0..FEATURES {
            let c = norm * libm::cos(self.omega[m][0] * p[0] + self.omega[m][1] * p[1] + self.phase[m]);
            for (o, a) in out.iter_mut().zip(&self.amp[m]) {
                *o += c * a;
            }
        }
        out
    }
}

fn gaussian(dim: usize, s: &mut Stream) -> Vec<f64> {
    (0..dim).map(|_| s.normal()).collect()
}

/// AR(1) chain over the 36 view indices with lag-one correlation `sigma`.
fn chain(dim: usize, sigma: f64, s: &mut Stream) -> Vec<Vec<f64>> {
    let keep = libm::sqrt(1.0 - sigma * sigma);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(VIEW_COUNT);
    out.push(gaussian(dim, s));
    for j in 1..VIEW_COUNT {
        let fresh = gaussian(dim, s);
        let next = out[j - 1]
            .iter()
            .zip(&fresh)
            .map(|(p, f)| sigma * p + keep * f)
            .collect();
        out.push(next);
    }
    out
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let n = self.0[y];
            self.0[y] = r;
            y = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

pub fn generate_env(params: &EnvParams) -> Result<EnvGraph> {
    params.validate()?;
    let n = params.nodes;
    let root = Stream::new(params.seed).fork("env");

    let side = params.node_spacing * libm::sqrt(n as f64);
    let mut ps = root.fork("positions");
    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(n);
    while positions.len() < n {
        let p = [ps.uniform_in(0.0, side), ps.uniform_in(0.0, side)];
        if positions.iter().all(|q| dist(p, *q) > 1e-6) {
            positions.push(p);
        }
    }

    let radius = side * libm::sqrt(params.branching as f64 / (core::f64::consts::PI * n as f64));
    let mut edges = Vec::new();
    let mut dsu = Dsu((0..n).collect());
    for a in 0..n {
        for b in a + 1..n {
            let length = dist(positions[a], positions[b]);
            if length <= radius {
                edges.push(Edge { a, b, length });
                dsu.union(a, b);
            }
        }
    }
    loop {
        let mut best: Option<Edge> = None;
        for a in 0..n {
            for b in a + 1..n {
                if dsu.find(a) == 0 && dsu.find(b) != 0 || dsu.find(b) == 0 && dsu.find(a) != 0 {
                    let length = dist(positions[a], positions[b]);
                    if best.is_none_or(|e| length < e.length) {
                        best = Some(Edge { a, b, length });
                    }
                }
            }
        }
        match best {
            Some(e) => {
                dsu.union(e.a, e.b);
                edges.push(e);
            }
            None => break,
        }
    }

    let mut adjacency = vec![Vec::new(); n];
    for e in &edges {
        adjacency[e.a].push((e.b, e.length));
        adjacency[e.b].push((e.a, e.length));
    }

    let field = PlaceField::new(params.latent_dim, params.field_length_scale, &mut root.fork("field"));
    let places: Vec<Vec<f64>> = positions.iter().map(|p| field.at(*p)).collect();
    let sigma = params.spatial_smoothness;
    let anchors = chain(params.latent_dim, sigma, &mut root.fork("anchors"));
    let share = libm::sqrt(params.temporal_overlap);

    let mut nodes = Vec::with_capacity(n);
    for u in 0..n {
        let mut near: Vec<(f64, usize)> = adjacency[u].iter().map(|&(w, l)| (l, w)).collect();
        near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut links: Vec<NavLink> = Vec::new();
        for &(_, w) in &near {
            let ideal = view_for_heading(heading_deg(positions[u], positions[w]));
            // A sector already taken by a nearer neighbour pushes this one to
            // the closest free view (lower index on ties).
            let view = (1..=VIEW_COUNT)
                .filter(|v| links.iter().all(|l| l.view != *v))
                .min_by_key(|v| (circular_gap(*v, ideal), *v));
            if let Some(view) = view {
                links.push(NavLink { view, neighbor: w });
            }
        }
        links.sort_by_key(|l| l.view);

        // Every draw happens whatever the branch, so the knobs only change
        // which draws are used.
        let mut ns = root.fork_indexed("node", u as u64);
        let private = chain(params.latent_dim, sigma, &mut ns);
        let mut views = Vec::with_capacity(VIEW_COUNT);
        for j in 1..=VIEW_COUNT {
            let coin = ns.uniform();
            let noise = gaussian(params.latent_dim, &mut ns);
            let latent: Vec<f64> = if let Some(l) = links.iter().find(|l| l.view == j) {
                places[l.neighbor]
                    .iter()
                    .zip(&noise)
                    .map(|(p, z)| p + params.view_jitter * z)
                    .collect()
            } else if coin < share {
                anchors[j - 1]
                    .iter()
                    .zip(&noise)
                    .map(|(a, z)| a + params.shared_jitter * z)
                    .collect()
            } else {
                private[j - 1].clone()
            };
            views.push(latent);
        }

        let mut ss = root.fork_indexed("scan", u as u64);
        let openings: Vec<f64> = near
            .iter()
            .map(|&(_, w)| heading_deg(positions[u], positions[w]))
            .collect();
        let scan = (0..SCAN_BINS)
            .map(|b| {
                let wall = ss.uniform_in(params.wall_min, params.wall_max);
                let centre = b as f64 + 0.5;
                let open = openings.iter().any(|h| {
                    let d = libm::fabs(centre - h) % 360.0;
                    d.min(360.0 - d) <= params.opening_half_width
                });
                if open {
                    params.max_range
                } else {
                    wall
                }
            })
            .collect();

        nodes.push(Node {
            position: positions[u],
            place: places[u].clone(),
            views,
            links,
            scan,
        });
    }

    EnvGraph::from_parts(*params, nodes, edges)
}

impl EnvGraph {
    /// Assembles and validates a graph, computing all-pairs geodesics.
    pub fn from_parts(params: EnvParams, nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        params.validate()?;
        let n = nodes.len();
        if n != params.nodes {
            return Err(Error::Gen(format!("{} nodes but params say {}", n, params.nodes)));
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::Gen(format!("bad edge {}-{}", e.a, e.b)));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(Error::Gen(format!("edge {}-{} has length {}", e.a, e.b, e.length)));
            }
            adjacency[e.a].push((e.b, e.length));
            adjacency[e.b].push((e.a, e.length));
        }
        for (u, node) in nodes.iter().enumerate() {
            if node.views.len() != VIEW_COUNT {
                return Err(Error::Gen(format!("node {u} has {} views", node.views.len())));
            }
            if node.place.len() != params.latent_dim || node.views.iter().any(|v| v.len() != params.latent_dim) {
                return Err(Error::Gen(format!("node {u} has latents of the wrong size")));
            }
            if node.scan.len() != SCAN_BINS {
                return Err(Error::Gen(format!("node {u} has {} scan bins", node.scan.len())));
            }
            let mut seen = ViewSet::EMPTY;
            for l in &node.links {
                if seen.contains(l.view) || !adjacency[u].iter().any(|&(w, _)| w == l.neighbor) {
                    return Err(Error::Gen(format!("node {u} has an invalid link")));
                }
                seen.insert(l.view)?;
            }
        }

        let mut distances = vec![f64::INFINITY; n * n];
        for u in 0..n {
            distances[u * n + u] = 0.0;
            for &(w, l) in &adjacency[u] {
                let d = &mut distances[u * n + w];
                *d = d.min(l);
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = distances[i * n + k];
                if !dik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let alt = dik + distances[k * n + j];
                    if alt < distances[i * n + j] {
                        distances[i * n + j] = alt;
                    }
                }
            }
        }
        if distances.iter().any(|d| !d.is_finite()) {
            return Err(Error::Gen("graph is not connected".into()));
        }
        Ok(Self {
            params,
            nodes,
            edges,
            adjacency,
            distances,
        })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, u: usize) -> &Node {
        &self.nodes[u]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adjacency[u]
    }

    pub fn edge_length(&self, u: usize, w: usize) -> Option<f64> {
        self.adjacency[u].iter().find(|&&(x, _)| x == w).map(|&(_, l)| l)
    }

    /// Geodesic (shortest-path) distance in meters.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.distances[a * self.nodes.len() + b]
    }

    /// Fewest edges between two nodes.
    pub fn hops(&self, a: usize, b: usize) -> usize {
        let mut seen = vec![usize::MAX; self.nodes.len()];
        let mut queue = VecDeque::from([a]);
        seen[a] = 0;
        while let Some(u) = queue.pop_front() {
            if u == b {
                return seen[u];
            }
            for &(w, _) in &self.adjacency[u] {
                if seen[w] == usize::MAX {
                    seen[w] = seen[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        usize::MAX
    }

    pub fn navigable_views(&self, u: usize) -> ViewSet {
        let mut set = ViewSet::EMPTY;
        for l in &self.nodes[u].links {
            // Link views are validated on construction.
            let _ = set.insert(l.view);
        }
        set
    }

    pub fn neighbor_at_view(&self, u: usize, view: usize) -> Option<usize> {
        self.nodes[u].links.iter().find(|l| l.view == view).map(|l| l.neighbor)
    }

    /// Neighbour whose link view is circularly closest to `view` (lower
    /// view index on ties).
    pub fn neighbor_nearest_view(&self, u: usize, view: usize) -> Option<usize> {
        self.nodes[u]
            .links
            .iter()
            .min_by_key(|l| (circular_gap(l.view, view), l.view))
            .map(|l| l.neighbor)
    }
}
