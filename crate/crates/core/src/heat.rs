//! Exact n-step transition probabilities.
//!
//! The distribution `P_n(x, ·)` is obtained by `n` sparse applications of
//! the transition operator (`u_{n+1} = P u_n`, the discrete heat equation
//! `Δu = ∂_n u` with `Δ = P - I`) to the point mass at `x`. State vectors live
//! on the BFS-enumerated ball around the origin, so memory follows the support
//! rather than the whole window.
//!
//! Exactness: a window walk agrees with the infinite-graph walk until it
//! steps out of a frontier vertex. A full row `P_n(x, ·)` is therefore exact
//! for `n < ρ(x)` (ρ the validity radius, which also keeps mass off frontier
//! vertices whose μ is wrong). A return probability `P_n(x, x)` only needs the
//! walk to reach the frontier *and come back*, so it is exact for
//! `⌊n/2⌋ < ρ(x)`; [`Mode::Returning`] exploits this by discarding mass that
//! can no longer reach the origin by the horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Vertex, WeightedGraph};

const OUTSIDE: u32 = u32::MAX;

/// Whether the exactness window is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Enforce,
    /// Compute on the finite graph as-is, even past the window.
    Override,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Keep the whole row `P_t(x, ·)` at every time `t <= horizon`.
    Row,
    /// Keep only mass within distance `horizon - t` of the origin: exact
    /// return probabilities `P_t(x, x)` for all `t <= horizon`.
    Returning,
}

/// `P_n(origin, ·)` at a fixed time, as sorted `(vertex, mass)` pairs with
/// positive mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatState {
    pub origin: Vertex,
    pub time: usize,
    pub mass: Vec<(Vertex, f64)>,
}

impl HeatState {
    /// `P_n(origin, y)`.
    pub fn get(&self, y: Vertex) -> f64 {
        self.mass
            .binary_search_by_key(&y, |&(v, _)| v)
            .map_or(0.0, |i| self.mass[i].1)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().map(|&(_, m)| m).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.mass.iter().map(|&(v, _)| v)
    }
}

pub struct HeatPropagator<'g> {
    graph: &'g WeightedGraph,
    origin: Vertex,
    horizon: usize,
    mode: Mode,
    vertices: Vec<Vertex>,
    layer_ends: Vec<usize>,
    local: Vec<u32>,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    probs: Vec<f64>,
    mass: Vec<f64>,
    next: Vec<f64>,
    time: usize,
}

impl<'g> HeatPropagator<'g> {
    pub fn new(
        graph: &'g WeightedGraph,
        origin: Vertex,
        horizon: usize,
        mode: Mode,
        window: Window,
    ) -> Result<Self> {
        graph.check_vertex(origin)?;
        let depth = match mode {
            Mode::Row => horizon,
            Mode::Returning => horizon / 2,
        };
        if window == Window::Enforce {
            if let Some(validity) = graph.validity_of(origin) {
                let inside = match mode {
                    Mode::Row => horizon < validity,
                    Mode::Returning => depth < validity,
                };
                if !inside {
                    return Err(Error::ExactnessWindow {
                        origin,
                        steps: horizon,
                        validity,
                    });
                }
            }
        }

        let mut local = vec![OUTSIDE; graph.vertex_count()];
        let mut vertices = vec![origin];
        let mut layer_ends = vec![1];
        local[origin] = 0;
        for _ in 0..depth {
            let start = if layer_ends.len() >= 2 {
                layer_ends[layer_ends.len() - 2]
            } else {
                0
            };
            let end = *layer_ends.last().unwrap();
            for i in start..end {
                for (w, _) in graph.neighbors(vertices[i]) {
                    if local[w] == OUTSIDE {
                        local[w] = vertices.len() as u32;
                        vertices.push(w);
                    }
                }
            }
            if vertices.len() == end {
                break;
            }
            layer_ends.push(vertices.len());
        }

        let mut offsets = Vec::with_capacity(vertices.len() + 1);
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        offsets.push(0);
        for &z in &vertices {
            for (y, p) in graph.transitions(z) {
                cols.push(local[y]);
                probs.push(p);
            }
            offsets.push(cols.len());
        }

        let mut mass = vec![0.0; vertices.len()];
        mass[0] = 1.0;
        Ok(Self {
            graph,
            origin,
            horizon,
            mode,
            next: vec![0.0; vertices.len()],
            vertices,
            layer_ends,
            local,
            offsets,
            cols,
            probs,
            mass,
            time: 0,
        })
    }

    pub fn origin(&self) -> Vertex {
        self.origin
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Local prefix holding all mass that is kept at time `t`.
    fn region_end(&self, t: usize) -> usize {
        let depth = match self.mode {
            Mode::Row => t,
            Mode::Returning => t.min(self.horizon - t),
        };
        self.layer_ends[depth.min(self.layer_ends.len() - 1)]
    }

    /// Advances one step. Panics past the horizon.
    pub fn step(&mut self) {
        assert!(self.time < self.horizon, "stepping past the horizon");
        let src_end = self.region_end(self.time);
        let dst_end = self.region_end(self.time + 1);
        // `next` still holds the state from time t - 1
        let stale_end = match self.time {
            0 => 0,
            t => self.region_end(t - 1),
        };
        self.next[..dst_end.max(stale_end)].fill(0.0);
        for z in 0..src_end {
            let m = self.mass[z];
            if m == 0.0 {
                continue;
            }
            for k in self.offsets[z]..self.offsets[z + 1] {
                let y = self.cols[k] as usize;
                if y < dst_end {
                    self.next[y] += m * self.probs[k];
                }
            }
        }
        std::mem::swap(&mut self.mass, &mut self.next);
        self.time += 1;
        debug_assert!(self.mass[dst_end..].iter().all(|&m| m == 0.0));
    }

    pub fn run_to(&mut self, t: usize) {
        while self.time < t {
            self.step();
        }
    }

    /// Current `P_t(origin, y)`.
    pub fn mass_at(&self, y: Vertex) -> f64 {
        match self.local.get(y) {
            Some(&i) if i != OUTSIDE => self.mass[i as usize],
            _ => 0.0,
        }
    }

    /// Current heat kernel `p_t(origin, y) = P_t(origin, y) / μ(y)`.
    pub fn density_at(&self, y: Vertex) -> f64 {
        self.mass_at(y) / self.graph.measure(y)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn state(&self) -> HeatState {
        let mut mass: Vec<(Vertex, f64)> = self
            .vertices
            .iter()
            .zip(&self.mass)
            .filter(|(_, &m)| m > 0.0)
            .map(|(&v, &m)| (v, m))
            .collect();
        mass.sort_unstable_by_key(|&(v, _)| v);
        HeatState {
            origin: self.origin,
            time: self.time,
            mass,
        }
    }
}

/// `P_n(x, ·)`, enforcing the exactness window `n < ρ(x)`.
pub fn heat_row(g: &WeightedGraph, x: Vertex, n: usize) -> Result<HeatState> {
    heat_row_with(g, x, n, Window::Enforce)
}

pub fn heat_row_with(g: &WeightedGraph, x: Vertex, n: usize, window: Window) -> Result<HeatState> {
    let mut prop = HeatPropagator::new(g, x, n, Mode::Row, window)?;
    prop.run_to(n);
    Ok(prop.state())
}

/// `p_n(x, y) = P_n(x, y) / μ(y)` read off a row.
pub fn kernel_value(g: &WeightedGraph, state: &HeatState, y: Vertex) -> Result<f64> {
    g.check_vertex(y)?;
    Ok(state.get(y) / g.measure(y))
}

/// `p̃_n(x, y) = p_n(x, y) + p_{n+1}(x, y)`.
pub fn smoothed_kernel(g: &WeightedGraph, x: Vertex, y: Vertex, n: usize) -> Result<f64> {
    g.check_vertex(y)?;
    let mut prop = HeatPropagator::new(g, x, n + 1, Mode::Row, Window::Enforce)?;
    prop.run_to(n);
    let now = prop.density_at(y);
    prop.step();
    Ok(now + prop.density_at(y))
}

/// `(n, P_n(x, x))` for `n = 0..=horizon` from one forward sweep.
pub fn diagonal_series(g: &WeightedGraph, x: Vertex, horizon: usize) -> Result<Vec<(usize, f64)>> {
    let mut prop = HeatPropagator::new(g, x, horizon, Mode::Returning, Window::Enforce)?;
    let mut series = Vec::with_capacity(horizon + 1);
    series.push((0, 1.0));
    while prop.time() < horizon {
        prop.step();
        series.push((prop.time(), prop.mass_at(x)));
    }
    Ok(series)
}
