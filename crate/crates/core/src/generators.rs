//! Deterministic constructors for the test corpus.
//!
//! Each generator returns a finite window onto an infinite graph and marks
//! the vertices whose infinite-graph neighbourhood is cut off as frontier.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphMeta, Vertex, WeightedGraph};
use crate::rng::Lcg;

pub const DEFAULT_VERTEX_CAP: usize = 8_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    Lattice { dimension: usize },
    SierpinskiGasket,
    VicsekTree,
    BinaryTree,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum WeightMode {
    #[default]
    Unit,
    Perturbed { low: f64, high: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Halfwidth, level or depth depending on the family.
    pub size: usize,
    #[serde(default)]
    pub weights: WeightMode,
}

impl GeneratorSpec {
    pub fn build(&self, cap: usize) -> Result<WeightedGraph> {
        if self.size < 1 {
            return Err(Error::InvalidParameter("size parameter must be >= 1".into()));
        }
        let g = match self.family {
            Family::Lattice { dimension } => lattice(dimension, self.size, cap)?,
            Family::SierpinskiGasket => sierpinski_gasket(self.size, cap)?,
            Family::VicsekTree => vicsek_tree(self.size, cap)?,
            Family::BinaryTree => binary_tree(self.size, cap)?,
            Family::Path => path(self.size, cap)?,
        };
        match self.weights {
            WeightMode::Unit => Ok(g),
            WeightMode::Perturbed { low, high, seed } => perturb_weights(&g, low, high, seed),
        }
    }
}

fn check_cap(requested: usize, cap: usize) -> Result<()> {
    if requested > cap {
        Err(Error::SizeCap { requested, cap })
    } else {
        Ok(())
    }
}

/// Assembles a graph from unit-weight edges between coordinate keys; ids are
/// assigned in key order.
fn from_keyed_edges<K: Ord + Copy>(
    edges: &BTreeSet<(K, K)>,
    frontier: &[K],
    center: K,
    generator: String,
) -> Result<WeightedGraph> {
    let mut ids: BTreeMap<K, Vertex> = BTreeMap::new();
    for &(a, b) in edges {
        ids.insert(a, 0);
        ids.insert(b, 0);
    }
    for (i, id) in ids.values_mut().enumerate() {
        *id = i;
    }
    let mut adjacency = vec![Vec::new(); ids.len()];
    for &(a, b) in edges {
        let (u, v) = (ids[&a], ids[&b]);
        adjacency[u].push((v, 1.0));
        adjacency[v].push((u, 1.0));
    }
    for row in &mut adjacency {
        row.sort_by_key(|&(v, _)| v);
    }
    WeightedGraph::from_adjacency(
        adjacency,
        frontier.iter().map(|k| ids[k]).collect(),
        GraphMeta {
            generator,
            center: ids[&center],
        },
    )
}

/// The box `{-L..L}^d` in `Z^d`, unit weights, centred at the origin.
pub fn lattice(dimension: usize, halfwidth: usize, cap: usize) -> Result<WeightedGraph> {
    if !(1..=3).contains(&dimension) {
        return Err(Error::InvalidParameter(format!(
            "lattice dimension must be 1, 2 or 3, got {dimension}"
        )));
    }
    if halfwidth < 1 {
        return Err(Error::InvalidParameter("halfwidth must be >= 1".into()));
    }
    let side = 2 * halfwidth + 1;
    let count = side
        .checked_pow(dimension as u32)
        .ok_or(Error::SizeCap { requested: usize::MAX, cap })?;
    check_cap(count, cap)?;

    let strides: Vec<usize> = (0..dimension).map(|i| side.pow(i as u32)).collect();
    let mut adjacency: Vec<Vec<(Vertex, f64)>> = vec![Vec::with_capacity(2 * dimension); count];
    let mut frontier = Vec::new();
    let mut coords = vec![0usize; dimension];
    for v in 0..count {
        let mut rest = v;
        for c in coords.iter_mut() {
            *c = rest % side;
            rest /= side;
        }
        if coords.iter().any(|&c| c == 0 || c == side - 1) {
            frontier.push(v);
        }
        // neighbours in increasing id order
        for i in (0..dimension).rev() {
            if coords[i] > 0 {
                adjacency[v].push((v - strides[i], 1.0));
            }
        }
        for i in 0..dimension {
            if coords[i] + 1 < side {
                adjacency[v].push((v + strides[i], 1.0));
            }
        }
    }
    let center = strides.iter().map(|s| s * halfwidth).sum();
    WeightedGraph::from_adjacency(
        adjacency,
        frontier,
        GraphMeta {
            generator: format!("lattice-d{dimension}-L{halfwidth}"),
            center,
        },
    )
}

/// Vertex id of the lattice point with the given coordinates (each in `-L..=L`).
pub fn lattice_vertex(halfwidth: usize, coords: &[i64]) -> Vertex {
    let side = (2 * halfwidth + 1) as i64;
    coords
        .iter()
        .rev()
        .fold(0i64, |acc, &c| acc * side + c + halfwidth as i64) as Vertex
}

pub fn sierpinski_gasket_vertex_count(level: usize) -> usize {
    (3usize.pow(level as u32 + 1) + 3) / 2
}

/// Level-`k` Sierpinski gasket graph, built as three level-`(k-1)` copies
/// glued at corners. Vertices live on triangular-lattice coordinates `(i, j)`
/// with `i + j <= 2^k`.
///
/// The centre is the corner `(0, 0)`. The window is read as the corner of the
/// one-sided infinite gasket, where that corner keeps degree 2, so only the
/// two other outer corners are frontier.
pub fn sierpinski_gasket(level: usize, cap: usize) -> Result<WeightedGraph> {
    if level < 1 {
        return Err(Error::InvalidParameter("gasket level must be >= 1".into()));
    }
    if level > 30 {
        return Err(Error::SizeCap { requested: usize::MAX, cap });
    }
    check_cap(sierpinski_gasket_vertex_count(level), cap)?;
    let side = 1i64 << level;
    let mut edges = BTreeSet::new();
    gasket_cell(0, 0, side, &mut edges);
    from_keyed_edges(
        &edges,
        &[(side, 0), (0, side)],
        (0, 0),
        format!("sierpinski-gasket-{level}"),
    )
}

fn gasket_cell(i: i64, j: i64, size: i64, edges: &mut BTreeSet<((i64, i64), (i64, i64))>) {
    if size == 1 {
        let (a, b, c) = ((i, j), (i + 1, j), (i, j + 1));
        for (p, q) in [(a, b), (a, c), (b, c)] {
            edges.insert((p.min(q), p.max(q)));
        }
        return;
    }
    let half = size / 2;
    gasket_cell(i, j, half, edges);
    gasket_cell(i + half, j, half, edges);
    gasket_cell(i, j + half, half, edges);
}

pub fn vicsek_vertex_count(level: usize) -> usize {
    4 * 5usize.pow(level as u32 - 1) + 1
}

/// Level-`k` Vicsek tree: a plus-shaped cross at level 1; level `k` places
/// five level-`(k-1)` copies at the centre and at the ends of its four arms,
/// sharing the touching tips. Arm length is `3^(k-1)`; the four outer tips are
/// frontier.
pub fn vicsek_tree(level: usize, cap: usize) -> Result<WeightedGraph> {
    if level < 1 {
        return Err(Error::InvalidParameter("Vicsek level must be >= 1".into()));
    }
    if level > 14 {
        return Err(Error::SizeCap { requested: usize::MAX, cap });
    }
    check_cap(vicsek_vertex_count(level), cap)?;
    let mut edges = BTreeSet::new();
    vicsek_cell(0, 0, level, &mut edges);
    let arm = 3i64.pow(level as u32 - 1);
    from_keyed_edges(
        &edges,
        &[(arm, 0), (-arm, 0), (0, arm), (0, -arm)],
        (0, 0),
        format!("vicsek-tree-{level}"),
    )
}

fn vicsek_cell(x: i64, y: i64, level: usize, edges: &mut BTreeSet<((i64, i64), (i64, i64))>) {
    if level == 1 {
        for tip in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            let c = (x, y);
            edges.insert((c.min(tip), c.max(tip)));
        }
        return;
    }
    let shift = 2 * 3i64.pow(level as u32 - 2);
    vicsek_cell(x, y, level - 1, edges);
    for (dx, dy) in [(shift, 0), (-shift, 0), (0, shift), (0, -shift)] {
        vicsek_cell(x + dx, y + dy, level - 1, edges);
    }
}

/// Rooted binary tree of the given depth: root 0, children `2i+1`, `2i+2`.
/// Leaves are frontier.
pub fn binary_tree(depth: usize, cap: usize) -> Result<WeightedGraph> {
    if depth < 1 {
        return Err(Error::InvalidParameter("tree depth must be >= 1".into()));
    }
    if depth >= 40 {
        return Err(Error::SizeCap { requested: usize::MAX, cap });
    }
    let count = (1usize << (depth + 1)) - 1;
    check_cap(count, cap)?;
    let first_leaf = (1usize << depth) - 1;
    let mut adjacency = vec![Vec::new(); count];
    for v in 1..count {
        let parent = (v - 1) / 2;
        adjacency[parent].push((v, 1.0));
        adjacency[v].push((parent, 1.0));
    }
    WeightedGraph::from_adjacency(
        adjacency,
        (first_leaf..count).collect(),
        GraphMeta {
            generator: format!("binary-tree-{depth}"),
            center: 0,
        },
    )
}

/// Finite path `0 - 1 - ... - length`, studied as-is (no frontier).
pub fn path(length: usize, cap: usize) -> Result<WeightedGraph> {
    if length < 1 {
        return Err(Error::InvalidParameter("path length must be >= 1".into()));
    }
    check_cap(length + 1, cap)?;
    let mut adjacency = vec![Vec::new(); length + 1];
    for v in 0..length {
        adjacency[v].push((v + 1, 1.0));
        adjacency[v + 1].push((v, 1.0));
    }
    WeightedGraph::from_adjacency(
        adjacency,
        Vec::new(),
        GraphMeta {
            generator: format!("path-{length}"),
            center: length / 2,
        },
    )
}

/// Multiplies every edge weight by an LCG factor in `[low, high]`, drawn in
/// canonical edge order (see [`WeightedGraph::edges`]).
pub fn perturb_weights(g: &WeightedGraph, low: f64, high: f64, seed: u64) -> Result<WeightedGraph> {
    if !(low > 0.0 && low <= high && high.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "perturbation range [{low}, {high}] must satisfy 0 < low <= high"
        )));
    }
    let mut lcg = Lcg::new(seed);
    let mut perturbed = g.map_weights(|_, _, _| lcg.next_factor(low, high))?;
    let meta = GraphMeta {
        generator: format!("{}+perturbed[{low},{high}]s{seed}", g.meta().generator),
        center: g.center(),
    };
    perturbed = perturbed.with_meta(meta)?;
    Ok(perturbed)
}
