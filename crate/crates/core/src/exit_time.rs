//! Mean exit times from balls, their generalized inverses and the
//! space-time scale function.
//!
//! `E_z(x, R)` is the expected first time the walk started at `z` is outside
//! `B(x, R)`; it solves `E_z = 1 + Σ_y P(z, y) E_y` on the interior with
//! `E = 0` outside. `E(x, R) = E_x(x, R)` and `E(x, 0) = 0`.
//!
//! Inverses use the right-continuous convention
//! `e(x, n) = max { R >= 0 : E(x, R) <= n }`.

use std::collections::HashMap;
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Vertex, WeightedGraph};
use crate::solve::BallSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSolution {
    pub site: Vertex,
    pub radius: usize,
    /// `E(x, R)`.
    pub value: f64,
    /// `E_z(x, R)` for every interior `z`, in BFS order.
    pub table: Vec<(Vertex, f64)>,
}

pub fn mean_exit(g: &WeightedGraph, x: Vertex, radius: usize) -> Result<ExitSolution> {
    let ball = g.ball(x, radius)?;
    ball.require_exact()?;
    ball.require_exit()?;
    let sys = BallSystem::new(g, &ball);
    let times = sys.solve(&vec![1.0; sys.len()])?;
    Ok(ExitSolution {
        site: x,
        radius,
        value: times[0],
        table: ball.interior.iter().copied().zip(times).collect(),
    })
}

/// `max { R >= 0 : table(R) <= n }` over a nondecreasing table with
/// `table(0) = 0`; `None` when the table never exceeds `n`.
fn right_inverse(values: &[f64], n: usize) -> Option<usize> {
    let n = n as f64;
    values.iter().position(|&e| e > n)
}

/// `E(x, R)` for `R = 1..=R_max` at one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeProfile {
    pub site: Vertex,
    /// `values[R - 1] = E(x, R)`.
    pub values: Vec<f64>,
}

impl ExitTimeProfile {
    pub fn max_radius(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, radius: usize) -> Option<f64> {
        match radius {
            0 => Some(0.0),
            r => self.values.get(r - 1).copied(),
        }
    }

    /// `e(x, n)`.
    pub fn exit_inverse(&self, n: usize) -> Result<usize> {
        right_inverse(&self.values, n).ok_or(Error::ProfileExhausted { site: self.site, n })
    }
}

pub fn exit_profile(g: &WeightedGraph, x: Vertex, r_max: usize) -> Result<ExitTimeProfile> {
    let values = (1..=r_max)
        .map(|r| mean_exit(g, x, r).map(|s| s.value))
        .collect::<Result<_>>()?;
    Ok(ExitTimeProfile { site: x, values })
}

/// `F(R) = min_x E(x, R)` over a declared site set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFunction {
    pub sites: Vec<Vertex>,
    /// `table[R - 1] = F(R)`.
    pub table: Vec<f64>,
    /// `C_0 = max_{x, R} E(x, R) / F(R)`.
    pub uniformity: f64,
    /// `D_F = max_{R <= R_max/2} F(2R) / F(R)`; `None` when `R_max < 2`.
    pub doubling: Option<f64>,
}

impl ScaleFunction {
    pub fn from_profiles(profiles: &[ExitTimeProfile]) -> Result<Self> {
        let Some(first) = profiles.first() else {
            return Err(Error::InvalidParameter("scale function needs at least one site".into()));
        };
        let r_max = first.max_radius();
        if profiles.iter().any(|p| p.max_radius() != r_max) {
            return Err(Error::InvalidParameter("profiles differ in length".into()));
        }
        let table: Vec<f64> = (0..r_max)
            .map(|i| profiles.iter().map(|p| p.values[i]).fold(f64::INFINITY, f64::min))
            .collect();
        let uniformity = profiles
            .iter()
            .flat_map(|p| p.values.iter().zip(&table).map(|(e, f)| e / f))
            .fold(1.0, f64::max);
        let doubling = (1..=r_max / 2)
            .map(|r| table[2 * r - 1] / table[r - 1])
            .reduce(f64::max);
        Ok(Self {
            sites: profiles.iter().map(|p| p.site).collect(),
            table,
            uniformity,
            doubling,
        })
    }

    pub fn max_radius(&self) -> usize {
        self.table.len()
    }

    /// `F(R)`, `F(0) = 0`.
    pub fn value(&self, radius: usize) -> Option<f64> {
        match radius {
            0 => Some(0.0),
            r => self.table.get(r - 1).copied(),
        }
    }

    /// `f(n) = max { R >= 0 : F(R) <= n }`.
    pub fn inverse(&self, n: usize) -> Result<usize> {
        right_inverse(&self.table, n).ok_or(Error::ProfileExhausted {
            site: self.sites.first().copied().unwrap_or(0),
            n,
        })
    }
}

pub fn scale_function(g: &WeightedGraph, sites: &[Vertex], r_max: usize) -> Result<ScaleFunction> {
    if sites.is_empty() {
        return Err(Error::InvalidParameter("scale function needs at least one site".into()));
    }
    let profiles: Vec<ExitTimeProfile> = sites
        .par_iter()
        .map(|&x| exit_profile(g, x, r_max))
        .collect::<Result<_>>()?;
    ScaleFunction::from_profiles(&profiles)
}

/// Anything that can answer `E(site, R)`.
pub trait ExitTimes: Sync {
    /// `E(site, radius)`, with `E(site, 0) = 0`.
    fn exit_time(&self, site: Vertex, radius: usize) -> Result<f64>;

    /// `e(site, n) = max { R >= 0 : E(site, R) <= n }`.
    fn exit_inverse(&self, site: Vertex, n: usize) -> Result<usize> {
        let mut r = 1;
        loop {
            let e = self
                .exit_time(site, r)
                .map_err(|_| Error::ProfileExhausted { site, n })?;
            if e > n as f64 {
                return Ok(r - 1);
            }
            r += 1;
        }
    }
}

impl ExitTimes for ExitTimeProfile {
    fn exit_time(&self, site: Vertex, radius: usize) -> Result<f64> {
        if site != self.site {
            return Err(Error::InvalidParameter(format!(
                "profile is for site {}, asked for {site}",
                self.site
            )));
        }
        self.value(radius).ok_or(Error::ProfileExhausted { site, n: radius })
    }
}

/// The scale function viewed as a site-independent exit-time table.
impl ExitTimes for ScaleFunction {
    fn exit_time(&self, site: Vertex, radius: usize) -> Result<f64> {
        self.value(radius).ok_or(Error::ProfileExhausted { site, n: radius })
    }

    fn exit_inverse(&self, _site: Vertex, n: usize) -> Result<usize> {
        self.inverse(n)
    }
}

/// A site-independent table `E(·, R) = values[R - 1]`, as on a
/// vertex-transitive graph.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformExitTimes {
    pub values: Vec<f64>,
}

impl UniformExitTimes {
    pub fn from_fn(r_max: usize, f: impl Fn(usize) -> f64) -> Self {
        Self {
            values: (1..=r_max).map(f).collect(),
        }
    }
}

impl ExitTimes for UniformExitTimes {
    fn exit_time(&self, site: Vertex, radius: usize) -> Result<f64> {
        match radius {
            0 => Ok(0.0),
            r => self
                .values
                .get(r - 1)
                .copied()
                .ok_or(Error::ProfileExhausted { site, n: radius }),
        }
    }

    fn exit_inverse(&self, site: Vertex, n: usize) -> Result<usize> {
        right_inverse(&self.values, n).ok_or(Error::ProfileExhausted { site, n })
    }
}

/// Lazily solved, memoized exit times on a graph. Safe to share between
/// workers; every value depends only on `(site, radius)`.
pub struct ExitTimeCache<'g> {
    graph: &'g WeightedGraph,
    memo: RwLock<HashMap<(Vertex, usize), f64>>,
    inverse: RwLock<HashMap<(Vertex, usize), usize>>,
}

impl<'g> ExitTimeCache<'g> {
    pub fn new(graph: &'g WeightedGraph) -> Self {
        Self {
            graph,
            memo: RwLock::new(HashMap::new()),
            inverse: RwLock::new(HashMap::new()),
        }
    }

    pub fn graph(&self) -> &'g WeightedGraph {
        self.graph
    }

    pub fn profile(&self, site: Vertex, r_max: usize) -> Result<ExitTimeProfile> {
        let values = (1..=r_max)
            .map(|r| self.exit_time(site, r))
            .collect::<Result<_>>()?;
        Ok(ExitTimeProfile { site, values })
    }

    pub fn solved_count(&self) -> usize {
        self.memo.read().unwrap().len()
    }
}

impl ExitTimes for ExitTimeCache<'_> {
    fn exit_time(&self, site: Vertex, radius: usize) -> Result<f64> {
        if radius == 0 {
            return Ok(0.0);
        }
        if let Some(&e) = self.memo.read().unwrap().get(&(site, radius)) {
            return Ok(e);
        }
        let e = mean_exit(self.graph, site, radius)?.value;
        self.memo.write().unwrap().insert((site, radius), e);
        Ok(e)
    }

    fn exit_inverse(&self, site: Vertex, n: usize) -> Result<usize> {
        if let Some(&r) = self.inverse.read().unwrap().get(&(site, n)) {
            return Ok(r);
        }
        let mut r = 1;
        let found = loop {
            let e = match self.exit_time(site, r) {
                Ok(e) => e,
                // The ball swallowed a frontier-free graph: E is infinite.
                Err(Error::NoExit { .. }) => f64::INFINITY,
                Err(Error::FrontierContact { .. }) => return Err(Error::ProfileExhausted { site, n }),
                Err(other) => return Err(other),
            };
            if e > n as f64 {
                break r - 1;
            }
            r += 1;
        };
        self.inverse.write().unwrap().insert((site, n), found);
        Ok(found)
    }
}
