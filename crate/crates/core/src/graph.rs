//! Weighted graphs with a frontier: finite windows onto infinite graphs.
//!
//! Edge weights `μ_xy` are symmetric and strictly positive. The vertex measure
//! is `μ(x) = Σ_{y~x} μ_xy` (a self-loop counts once) and the simple random
//! walk moves with `P(x, y) = μ_xy / μ(x)`.
//!
//! A *frontier* vertex is one whose neighbourhood in the intended infinite
//! graph is incomplete. Every primitive whose answer could differ on the
//! infinite graph checks the distance to the frontier and reports an error
//! instead of a silently wrong value.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vertex = usize;

const UNREACHED: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub generator: String,
    pub center: Vertex,
}

impl Default for GraphMeta {
    fn default() -> Self {
        Self {
            generator: "edge-list".to_string(),
            center: 0,
        }
    }
}

/// Immutable weighted graph in compressed adjacency form.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    targets: Vec<Vertex>,
    weights: Vec<f64>,
    measure: Vec<f64>,
    frontier: Vec<bool>,
    /// Distance to the nearest frontier vertex, `UNREACHED` when there is none.
    validity: Vec<usize>,
    meta: GraphMeta,
}

/// Builds a graph from an undirected edge list.
///
/// `(u, v, w)` and `(v, u, w)` denote the same edge; listing it twice is
/// accepted only with the identical weight. Self-loops are allowed.
pub fn build_graph(edges: &[(Vertex, Vertex, f64)]) -> Result<WeightedGraph> {
    if edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut canonical: BTreeMap<(Vertex, Vertex), f64> = BTreeMap::new();
    let mut vertex_count = 0;
    for &(u, v, w) in edges {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::NonPositiveWeight { u, v, weight: w });
        }
        let key = (u.min(v), u.max(v));
        if let Some(&first) = canonical.get(&key) {
            if first != w {
                return Err(Error::ConflictingEdge {
                    u: key.0,
                    v: key.1,
                    first,
                    second: w,
                });
            }
            continue;
        }
        canonical.insert(key, w);
        vertex_count = vertex_count.max(key.1 + 1);
    }

    let mut adjacency: Vec<Vec<(Vertex, f64)>> = vec![Vec::new(); vertex_count];
    for (&(u, v), &w) in &canonical {
        adjacency[u].push((v, w));
        if u != v {
            adjacency[v].push((u, w));
        }
    }
    WeightedGraph::from_adjacency(adjacency, Vec::new(), GraphMeta::default())
}

impl WeightedGraph {
    pub(crate) fn from_adjacency(
        adjacency: Vec<Vec<(Vertex, f64)>>,
        frontier: Vec<Vertex>,
        meta: GraphMeta,
    ) -> Result<Self> {
        let n = adjacency.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut measure = Vec::with_capacity(n);
        offsets.push(0);
        for row in &adjacency {
            let mut total = 0.0;
            for &(v, w) in row {
                targets.push(v);
                weights.push(w);
                total += w;
            }
            measure.push(total);
            offsets.push(targets.len());
        }
        let mut graph = Self {
            offsets,
            targets,
            weights,
            measure,
            frontier: vec![false; n],
            validity: vec![UNREACHED; n],
            meta: GraphMeta::default(),
        };
        if let Some(v) = graph.bfs_depths(0, usize::MAX).iter().position(|&d| d == UNREACHED) {
            return Err(Error::Disconnected { vertex: v });
        }
        graph = graph.with_frontier(frontier)?;
        graph.with_meta(meta)
    }

    /// Replaces the frontier marking and recomputes validity radii.
    pub fn with_frontier(mut self, frontier: impl IntoIterator<Item = Vertex>) -> Result<Self> {
        self.frontier.iter_mut().for_each(|f| *f = false);
        for v in frontier {
            self.check_vertex(v)?;
            self.frontier[v] = true;
        }
        self.validity = self.multi_source_depths();
        Ok(self)
    }

    pub fn with_meta(mut self, meta: GraphMeta) -> Result<Self> {
        self.check_vertex(meta.center)?;
        self.meta = meta;
        Ok(self)
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn center(&self) -> Vertex {
        self.meta.center
    }

    pub fn vertex_count(&self) -> usize {
        self.measure.len()
    }

    /// Number of undirected edges, self-loops included.
    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn check_vertex(&self, x: Vertex) -> Result<()> {
        if x < self.vertex_count() {
            Ok(())
        } else {
            Err(Error::InvalidVertex {
                vertex: x,
                count: self.vertex_count(),
            })
        }
    }

    /// Neighbours of `x` with their edge weights, in storage order.
    pub fn neighbors(&self, x: Vertex) -> impl Iterator<Item = (Vertex, f64)> + '_ {
        let range = self.offsets[x]..self.offsets[x + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn degree(&self, x: Vertex) -> usize {
        self.offsets[x + 1] - self.offsets[x]
    }

    /// Every edge once as `(u, v, μ_uv)` with `u <= v`, ordered by `u`.
    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex, f64)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            self.neighbors(u)
                .filter(move |&(v, _)| v >= u)
                .map(move |(v, w)| (u, v, w))
        })
    }

    pub fn edge_weight(&self, x: Vertex, y: Vertex) -> Option<f64> {
        self.neighbors(x).find(|&(v, _)| v == y).map(|(_, w)| w)
    }

    /// μ(x), unchecked.
    #[inline]
    pub fn measure(&self, x: Vertex) -> f64 {
        self.measure[x]
    }

    pub fn vertex_measure(&self, x: Vertex) -> Result<f64> {
        self.check_vertex(x)?;
        Ok(self.measure[x])
    }

    /// μ(A) for a vertex set.
    pub fn set_measure(&self, set: &[Vertex]) -> f64 {
        set.iter().map(|&v| self.measure[v]).sum()
    }

    pub fn transition_prob(&self, x: Vertex, y: Vertex) -> Result<f64> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        Ok(self
            .edge_weight(x, y)
            .map_or(0.0, |w| w / self.measure[x]))
    }

    /// Outgoing transitions `(y, P(x, y))`.
    pub fn transitions(&self, x: Vertex) -> impl Iterator<Item = (Vertex, f64)> + '_ {
        let mu = self.measure[x];
        self.neighbors(x).map(move |(y, w)| (y, w / mu))
    }

    pub fn is_frontier(&self, x: Vertex) -> bool {
        self.frontier[x]
    }

    pub fn frontier(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.frontier
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(v, _)| v)
    }

    /// Distance from `x` to the nearest frontier vertex; `None` when the graph
    /// has no frontier and is studied as-is.
    pub fn validity_radius(&self, x: Vertex) -> Result<Option<usize>> {
        self.check_vertex(x)?;
        Ok(self.validity_of(x))
    }

    #[inline]
    pub(crate) fn validity_of(&self, x: Vertex) -> Option<usize> {
        match self.validity[x] {
            UNREACHED => None,
            v => Some(v),
        }
    }

    /// True when `B(x, radius)` contains no frontier vertex.
    pub fn ball_is_exact(&self, x: Vertex, radius: usize) -> bool {
        self.validity_of(x).is_none_or(|v| radius <= v)
    }

    pub(crate) fn require_exact_ball(&self, x: Vertex, radius: usize) -> Result<()> {
        match self.validity_of(x) {
            Some(v) if radius > v => Err(Error::FrontierContact {
                site: x,
                radius,
                validity: v,
            }),
            _ => Ok(()),
        }
    }

    /// Smallest edge transition probability: the best `p_0` for this graph.
    pub fn check_p0(&self) -> f64 {
        (0..self.vertex_count())
            .flat_map(|x| self.transitions(x).map(|(_, p)| p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn distance(&self, x: Vertex, y: Vertex) -> Result<usize> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        if x == y {
            return Ok(0);
        }
        let mut depth = HashMap::from([(x, 0usize)]);
        let mut queue = VecDeque::from([x]);
        while let Some(z) = queue.pop_front() {
            let dz = depth[&z];
            for (w, _) in self.neighbors(z) {
                if !depth.contains_key(&w) {
                    if w == y {
                        return Ok(dz + 1);
                    }
                    depth.insert(w, dz + 1);
                    queue.push_back(w);
                }
            }
        }
        unreachable!("graph is connected")
    }

    /// BFS from `x` up to depth `max_depth`: vertices in visiting order with
    /// their depths.
    pub fn bfs(&self, x: Vertex, max_depth: usize) -> Vec<(Vertex, usize)> {
        let mut seen: HashMap<Vertex, ()> = HashMap::from([(x, ())]);
        let mut order = vec![(x, 0)];
        let mut head = 0;
        while head < order.len() {
            let (z, dz) = order[head];
            head += 1;
            if dz == max_depth {
                continue;
            }
            for (w, _) in self.neighbors(z) {
                if seen.insert(w, ()).is_none() {
                    order.push((w, dz + 1));
                }
            }
        }
        order
    }

    fn bfs_depths(&self, x: Vertex, max_depth: usize) -> Vec<usize> {
        let mut depth = vec![UNREACHED; self.vertex_count()];
        depth[x] = 0;
        let mut queue = VecDeque::from([x]);
        while let Some(z) = queue.pop_front() {
            if depth[z] == max_depth {
                continue;
            }
            for (w, _) in self.neighbors(z) {
                if depth[w] == UNREACHED {
                    depth[w] = depth[z] + 1;
                    queue.push_back(w);
                }
            }
        }
        depth
    }

    fn multi_source_depths(&self) -> Vec<usize> {
        let mut depth = vec![UNREACHED; self.vertex_count()];
        let mut queue = VecDeque::new();
        for v in self.frontier() {
            depth[v] = 0;
            queue.push_back(v);
        }
        while let Some(z) = queue.pop_front() {
            for (w, _) in self.neighbors(z) {
                if depth[w] == UNREACHED {
                    depth[w] = depth[z] + 1;
                    queue.push_back(w);
                }
            }
        }
        depth
    }

    /// The open ball `B(x, R) = {y : d(x, y) < R}` and its outer boundary.
    ///
    /// The ball is returned even if its interior touches the frontier; check
    /// [`BallView::is_exact`] before trusting anything computed on it.
    pub fn ball(&self, x: Vertex, radius: usize) -> Result<BallView> {
        self.check_vertex(x)?;
        if radius < 1 {
            return Err(Error::InvalidRadius(radius));
        }
        let order = self.bfs(x, radius);
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut layer_ends = Vec::with_capacity(radius);
        for &(v, d) in &order {
            if d < radius {
                if layer_ends.len() <= d {
                    layer_ends.push(interior.len());
                }
                interior.push(v);
                *layer_ends.last_mut().unwrap() = interior.len();
            } else {
                boundary.push(v);
            }
        }
        let index = interior
            .iter()
            .chain(boundary.iter())
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        Ok(BallView {
            center: x,
            radius,
            exact: self.ball_is_exact(x, radius),
            interior,
            boundary,
            layer_ends,
            index,
        })
    }

    /// `V(x, R) = μ(B(x, R))`; `V(x, 0) = 0`.
    pub fn volume(&self, x: Vertex, radius: usize) -> Result<f64> {
        self.check_vertex(x)?;
        if radius == 0 {
            return Ok(0.0);
        }
        self.require_exact_ball(x, radius)?;
        Ok(self
            .bfs(x, radius - 1)
            .iter()
            .map(|&(v, _)| self.measure[v])
            .sum())
    }

    /// Volumes `V(x, R)` for `R = 0..=max_radius` from a single BFS.
    pub fn volume_profile(&self, x: Vertex, max_radius: usize) -> Result<Vec<f64>> {
        self.check_vertex(x)?;
        self.require_exact_ball(x, max_radius)?;
        let mut profile = vec![0.0; max_radius + 1];
        if max_radius == 0 {
            return Ok(profile);
        }
        for (v, d) in self.bfs(x, max_radius - 1) {
            profile[d + 1] += self.measure[v];
        }
        for r in 1..=max_radius {
            profile[r] += profile[r - 1];
        }
        Ok(profile)
    }

    /// The same graph with every edge weight multiplied by `factor(u, v, w)`.
    pub fn map_weights(&self, mut factor: impl FnMut(Vertex, Vertex, f64) -> f64) -> Result<Self> {
        let mut adjacency: Vec<Vec<(Vertex, f64)>> = vec![Vec::new(); self.vertex_count()];
        let mut new_weight: HashMap<(Vertex, Vertex), f64> = HashMap::new();
        for (u, v, w) in self.edges() {
            let nw = w * factor(u, v, w);
            if !(nw > 0.0) || !nw.is_finite() {
                return Err(Error::NonPositiveWeight { u, v, weight: nw });
            }
            new_weight.insert((u, v), nw);
        }
        for (u, row) in adjacency.iter_mut().enumerate() {
            for (v, _) in self.neighbors(u) {
                row.push((v, new_weight[&(u.min(v), u.max(v))]));
            }
        }
        Self::from_adjacency(adjacency, self.frontier().collect(), self.meta.clone())
    }
}

/// Local view of `B(x, R)`: interior vertices in BFS order, then boundary.
#[derive(Debug, Clone)]
pub struct BallView {
    pub center: Vertex,
    pub radius: usize,
    /// False when the interior contains a frontier vertex.
    pub exact: bool,
    pub interior: Vec<Vertex>,
    pub boundary: Vec<Vertex>,
    /// `layer_ends[d]` is one past the last interior index at depth `d`.
    pub layer_ends: Vec<usize>,
    index: HashMap<Vertex, usize>,
}

/// Position of a vertex inside a [`BallView`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Interior(usize),
    Boundary(usize),
}

impl BallView {
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn closure(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.interior.iter().chain(self.boundary.iter()).copied()
    }

    pub fn closure_len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn slot(&self, v: Vertex) -> Option<Slot> {
        self.index.get(&v).map(|&i| {
            if i < self.interior.len() {
                Slot::Interior(i)
            } else {
                Slot::Boundary(i - self.interior.len())
            }
        })
    }

    pub fn contains(&self, v: Vertex) -> bool {
        matches!(self.slot(v), Some(Slot::Interior(_)))
    }

    /// Number of interior vertices at depth `< r` (a prefix of `interior`).
    pub fn inner_len(&self, r: usize) -> usize {
        match r {
            0 => 0,
            r => self.layer_ends[(r - 1).min(self.layer_ends.len() - 1)],
        }
    }

    /// Errors when the ball has no boundary, i.e. contains the whole graph.
    pub(crate) fn require_exit(&self) -> Result<()> {
        if self.boundary.is_empty() {
            Err(Error::NoExit {
                site: self.center,
                radius: self.radius,
            })
        } else {
            Ok(())
        }
    }

    pub(crate) fn require_exact(&self) -> Result<()> {
        if self.exact {
            Ok(())
        } else {
            Err(Error::FrontierContact {
                site: self.center,
                radius: self.radius,
                validity: 0,
            })
        }
    }
}
