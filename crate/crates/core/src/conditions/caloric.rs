//! Space-time cylinders: the skewed parabolic mean value inequality and the
//! parabolic Harnack inequality at the scale of `F`.
//!
//! A solution on `[0, T] × B` is given by its interior values `u_t` and
//! evolves by `u_{t+1}(z) = Σ_y P(z, y) u_t(y)` with `y` ranging over the
//! closure, boundary values being free data. A unit boundary value at
//! `(s, b)` produces the time-0 response shifted by `s`, so one evolution per
//! boundary vertex covers every injection time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{first_max, sweep, CellDetail, ConditionCell, ConditionId, ConditionReport, Source, SpaceTime};
use crate::error::{Error, Result};
use crate::exit_time::{ExitTimes, ScaleFunction};
use crate::graph::{BallView, Vertex, WeightedGraph};
use crate::solve::{BallSystem, RESIDUAL_TOL};

/// `⌈v⌉`, ignoring excess below the solver tolerance so that a certified
/// `16.000000001` rounds to 16.
fn ceil_time(v: f64) -> usize {
    (v - RESIDUAL_TOL).ceil().max(0.0) as usize
}

/// Frame `t` of a trajectory delayed by `shift` (zero before the shift).
#[inline]
fn frame(frames: &[Vec<f64>], shift: usize, t: usize) -> Option<&[f64]> {
    t.checked_sub(shift).and_then(|s| frames.get(s)).map(Vec::as_slice)
}

/// The cylinder `[0, horizon] × B(x, R)`.
#[derive(Debug, Clone)]
pub struct Cylinder {
    ball: BallView,
    sys: BallSystem,
    horizon: usize,
}

impl Cylinder {
    pub fn new(g: &WeightedGraph, x: Vertex, radius: usize, horizon: usize) -> Result<Self> {
        let ball = g.ball(x, radius)?;
        ball.require_exact()?;
        let sys = BallSystem::new(g, &ball);
        Ok(Self { ball, sys, horizon })
    }

    pub fn ball(&self) -> &BallView {
        &self.ball
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn step(&self, u: &[f64], boundary: Option<&[f64]>) -> Vec<f64> {
        (0..self.sys.len())
            .map(|z| {
                let inflow = boundary.map_or(0.0, |data| self.sys.boundary_inflow(z, data));
                self.sys.apply_interior(u, z) + inflow
            })
            .collect()
    }

    /// Interior frames `u_0..=u_horizon` from initial interior values and
    /// boundary data `boundary[t]` (boundary order) for `t < horizon`;
    /// missing times are zero.
    pub fn evolve(&self, initial: &[f64], boundary: &[Vec<f64>]) -> Vec<Vec<f64>> {
        assert_eq!(initial.len(), self.sys.len());
        let mut frames = Vec::with_capacity(self.horizon + 1);
        frames.push(initial.to_vec());
        for t in 0..self.horizon {
            let next = self.step(&frames[t], boundary.get(t).map(Vec::as_slice));
            frames.push(next);
        }
        frames
    }

    /// Response to a unit initial mass at interior index `i`.
    pub fn initial_response(&self, i: usize) -> Vec<Vec<f64>> {
        let mut initial = vec![0.0; self.sys.len()];
        initial[i] = 1.0;
        self.evolve(&initial, &[])
    }

    /// Response to a unit boundary value at boundary index `j` at time 0.
    pub fn injection_response(&self, j: usize) -> Vec<Vec<f64>> {
        let mut data = vec![0.0; self.ball.boundary.len()];
        data[j] = 1.0;
        self.evolve(&vec![0.0; self.sys.len()], &[data])
    }

    /// Responses to every interior Dirac at time 0 and to every boundary
    /// Dirac at time 0; later injections are shifts of the latter.
    fn generators(&self) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>) {
        let initial = (0..self.sys.len())
            .into_par_iter()
            .map(|i| self.initial_response(i))
            .collect();
        let injected = (0..self.ball.boundary.len())
            .into_par_iter()
            .map(|j| self.injection_response(j))
            .collect();
        (initial, injected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpmvParams {
    pub c1: f64,
    pub c2: f64,
}

impl Default for SpmvParams {
    fn default() -> Self {
        Self { c1: 0.25, c2: 0.5 }
    }
}

impl SpmvParams {
    pub fn validate(&self) -> Result<()> {
        if self.c1 > 0.0 && self.c1 < self.c2 && self.c2 <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "need 0 < c1 < c2 <= 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )))
        }
    }
}

/// Everything needed to evaluate the sPMV ratio of a solution on
/// `[0, n] × B(x, R)`.
#[derive(Debug, Clone)]
pub struct SpmvSetup {
    pub site: Vertex,
    pub radius: usize,
    pub params: SpmvParams,
    /// `E(x, R)`.
    pub exit: f64,
    /// `i₀ = ⌈c₁ E⌉`.
    pub lower: usize,
    /// `n = ⌈c₂ E⌉`.
    pub top: usize,
    /// `max_{y ∈ B(x,R)} V(y, 2R) E(y, 2R)`.
    pub scale: f64,
    pub scale_site: Vertex,
    cylinder: Cylinder,
    mu: Vec<f64>,
}

pub fn spmv_setup<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    x: Vertex,
    radius: usize,
    params: SpmvParams,
) -> Result<SpmvSetup> {
    params.validate()?;
    if radius == 0 {
        return Err(Error::InvalidRadius(0));
    }
    // B(y, 2R) for every y in B(x, R) stays inside B(x, 3R - 1).
    g.require_exact_ball(x, 3 * radius - 1)?;
    let exit = src.exit_time(x, radius)?;
    let lower = ceil_time(params.c1 * exit);
    let top = ceil_time(params.c2 * exit);
    let cylinder = Cylinder::new(g, x, radius, top)?;
    let scales: Vec<Option<(f64, Vertex)>> = cylinder
        .ball
        .interior
        .par_iter()
        .map(|&y| Ok(Some((g.volume(y, 2 * radius)? * src.exit_time(y, 2 * radius)?, y))))
        .collect::<Result<_>>()?;
    let (scale, scale_site) = first_max(scales).expect("ball interior is nonempty");
    let mu = cylinder.ball.interior.iter().map(|&z| g.measure(z)).collect();
    Ok(SpmvSetup {
        site: x,
        radius,
        params,
        exit,
        lower,
        top,
        scale,
        scale_site,
        cylinder,
        mu,
    })
}

impl SpmvSetup {
    pub fn cylinder(&self) -> &Cylinder {
        &self.cylinder
    }

    fn mass(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.mu).map(|(a, b)| a * b).sum()
    }

    fn ratio_shifted(&self, frames: &[Vec<f64>], shift: usize) -> Option<f64> {
        let num = frame(frames, shift, self.top).map_or(0.0, |u| u[0]);
        let den: f64 = (self.lower..=self.top)
            .filter_map(|t| frame(frames, shift, t))
            .map(|u| self.mass(u))
            .sum();
        if den > 0.0 {
            Some(num * self.scale / den)
        } else if num > 0.0 {
            Some(f64::INFINITY)
        } else {
            None
        }
    }

    /// `u_n(x) · max_y V(y,2R)E(y,2R) / Σ_{i=i₀}^{n} Σ_z u_i(z) μ(z)` for
    /// interior frames `u_0..=u_n`; `None` when both sides vanish.
    pub fn ratio(&self, frames: &[Vec<f64>]) -> Option<f64> {
        self.ratio_shifted(frames, 0)
    }
}

/// sPMV constant of one cell: the max of [`SpmvSetup::ratio`] over the cone
/// generators. Generators that vanish on the whole window put no constraint
/// on the constant and are passed over.
pub fn spmv_cell<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    x: Vertex,
    radius: usize,
    params: SpmvParams,
) -> Result<ConditionCell> {
    let setup = spmv_setup(g, src, x, radius, params)?;
    let cyl = &setup.cylinder;
    let (initial, injected) = cyl.generators();
    let ball = &cyl.ball;
    let candidates = initial
        .iter()
        .enumerate()
        .map(|(i, frames)| {
            setup
                .ratio_shifted(frames, 0)
                .map(|v| (v, Source::Initial { vertex: ball.interior[i] }))
        })
        .chain(injected.iter().enumerate().flat_map(|(j, frames)| {
            let setup = &setup;
            (0..setup.top).map(move |s| {
                setup.ratio_shifted(frames, s).map(|v| {
                    (
                        v,
                        Source::Injection {
                            time: s,
                            vertex: ball.boundary[j],
                        },
                    )
                })
            })
        }));
    let (value, source) = first_max(candidates).expect("an interior Dirac reaches the window");
    Ok(ConditionCell {
        site: x,
        radius,
        value,
        detail: Some(CellDetail::Caloric {
            source,
            recentered: setup.scale_site,
        }),
    })
}

pub fn check_spmv<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sites: &[Vertex],
    radii: &[usize],
    params: SpmvParams,
) -> Result<ConditionReport> {
    params.validate()?;
    sweep(ConditionId::SPMV, sites, radii, |x, r| spmv_cell(g, src, x, r, params))
}

/// Cylinder `[start, start + ⌈F(4R)⌉] × B(x, 2R)` with its lower and upper
/// comparison boxes over the interior of `B(x, R)`.
#[derive(Debug, Clone)]
pub struct PhfSetup {
    pub site: Vertex,
    pub radius: usize,
    /// Absolute time of the cylinder's bottom.
    pub start: usize,
    /// `[⌈F(R)⌉, ⌈F(2R)⌉]`, relative to `start`.
    pub lower: (usize, usize),
    /// `[⌈F(3R)⌉, ⌈F(4R)⌉]`, relative to `start`.
    pub upper: (usize, usize),
    cylinder: Cylinder,
    /// Number of interior vertices of `B(x, R)` (a prefix of the cylinder's
    /// interior).
    inner: usize,
    /// Graph distances between the compared points.
    dist: Vec<Vec<usize>>,
}

pub fn phf_setup(
    g: &WeightedGraph,
    sf: &ScaleFunction,
    x: Vertex,
    radius: usize,
    start: usize,
) -> Result<PhfSetup> {
    if radius == 0 {
        return Err(Error::InvalidRadius(0));
    }
    let f = |r: usize| {
        sf.value(r)
            .map(ceil_time)
            .ok_or(Error::ProfileExhausted { site: x, n: r })
    };
    let lower = (f(radius)?, f(2 * radius)?);
    let upper = (f(3 * radius)?, f(4 * radius)?);
    // One step past the top so that u_n + u_{n+1} exists at the top time.
    let cylinder = Cylinder::new(g, x, 2 * radius, upper.1 + 1)?;
    let inner = cylinder.ball.inner_len(radius);
    let points = &cylinder.ball.interior[..inner];
    let dist = points
        .par_iter()
        .map(|&a| {
            let reach: std::collections::HashMap<Vertex, usize> =
                g.bfs(a, 2 * radius).into_iter().collect();
            points.iter().map(|b| reach[b]).collect()
        })
        .collect();
    Ok(PhfSetup {
        site: x,
        radius,
        start,
        lower,
        upper,
        cylinder,
        inner,
        dist,
    })
}

/// Best ratio of one solution with its compared points.
type PhfHit = (f64, SpaceTime, SpaceTime);

impl PhfSetup {
    pub fn cylinder(&self) -> &Cylinder {
        &self.cylinder
    }

    fn evaluate_shifted(&self, frames: &[Vec<f64>], shift: usize) -> Option<PhfHit> {
        let (a_lo, b_lo) = self.lower;
        let (a_hi, b_hi) = self.upper;
        let value = |t: usize, i: usize| frame(frames, shift, t).map_or(0.0, |u| u[i]);
        // prefix[i][t - a_lo] = max of u(s, x_i) over s in [a_lo, t], with the
        // time attaining it.
        let prefix: Vec<Vec<(f64, usize)>> = (0..self.inner)
            .map(|i| {
                let mut acc = (f64::NEG_INFINITY, a_lo);
                (a_lo..=b_lo)
                    .map(|t| {
                        let v = value(t, i);
                        if v > acc.0 {
                            acc = (v, t);
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        let points = &self.cylinder.ball.interior;
        let mut best: Option<PhfHit> = None;
        for n in a_hi..=b_hi {
            for j in 0..self.inner {
                let smooth = value(n, j) + value(n + 1, j);
                let mut top: Option<(f64, usize, usize)> = None;
                for (i, row) in prefix.iter().enumerate() {
                    let Some(t) = n.checked_sub(self.dist[i][j]) else { continue };
                    if t < a_lo {
                        continue;
                    }
                    let (v, s) = row[t.min(b_lo) - a_lo];
                    if top.is_none_or(|(w, _, _)| v > w) {
                        top = Some((v, s, i));
                    }
                }
                let Some((v, s, i)) = top else { continue };
                let ratio = if smooth > 0.0 {
                    v / smooth
                } else if v > 0.0 {
                    f64::INFINITY
                } else {
                    continue;
                };
                if best.is_none_or(|(r, _, _)| ratio > r) {
                    best = Some((
                        ratio,
                        SpaceTime {
                            time: self.start + s,
                            vertex: points[i],
                        },
                        SpaceTime {
                            time: self.start + n,
                            vertex: points[j],
                        },
                    ));
                }
            }
        }
        best
    }

    /// `max u(n⁻, x⁻) / (u(n⁺, x⁺) + u(n⁺ + 1, x⁺))` over compared points with
    /// `d(x⁻, x⁺) <= n⁺ - n⁻`, for interior frames of the cylinder indexed
    /// relative to `start`. `None` when every comparison is `0/0`.
    pub fn evaluate(&self, frames: &[Vec<f64>]) -> Option<PhfHit> {
        self.evaluate_shifted(frames, 0)
    }
}

/// PH_F constant of one cell over the cylinder starting at time `start`.
pub fn phf_cell_from(
    g: &WeightedGraph,
    sf: &ScaleFunction,
    x: Vertex,
    radius: usize,
    start: usize,
) -> Result<ConditionCell> {
    let setup = phf_setup(g, sf, x, radius, start)?;
    let cyl = &setup.cylinder;
    let ball = &cyl.ball;
    let (initial, injected) = cyl.generators();
    // Injections at or after the lower box's last time leave it at zero.
    let last = setup.lower.1;
    let from_initial: Vec<Option<(f64, Source, PhfHit)>> = initial
        .par_iter()
        .enumerate()
        .map(|(i, frames)| {
            setup.evaluate_shifted(frames, 0).map(|hit| {
                (
                    hit.0,
                    Source::Initial {
                        vertex: ball.interior[i],
                    },
                    hit,
                )
            })
        })
        .collect();
    let from_injected: Vec<Option<(f64, Source, PhfHit)>> = injected
        .par_iter()
        .enumerate()
        .flat_map_iter(|(j, frames)| {
            let setup = &setup;
            (0..last).map(move |s| {
                setup.evaluate_shifted(frames, s).map(|hit| {
                    (
                        hit.0,
                        Source::Injection {
                            time: start + s,
                            vertex: ball.boundary[j],
                        },
                        hit,
                    )
                })
            })
        })
        .collect();
    let candidates = from_initial
        .into_iter()
        .chain(from_injected)
        .map(|c| c.map(|(v, source, hit)| (v, (source, hit.1, hit.2))));
    let (value, (source, lower, upper)) =
        first_max(candidates).expect("an interior Dirac reaches both boxes");
    Ok(ConditionCell {
        site: x,
        radius,
        value,
        detail: Some(CellDetail::Parabolic {
            source,
            lower,
            upper,
        }),
    })
}

pub fn phf_cell(g: &WeightedGraph, sf: &ScaleFunction, x: Vertex, radius: usize) -> Result<ConditionCell> {
    phf_cell_from(g, sf, x, radius, 0)
}

pub fn check_phf(
    g: &WeightedGraph,
    sf: &ScaleFunction,
    sites: &[Vertex],
    radii: &[usize],
) -> Result<ConditionReport> {
    sweep(ConditionId::PHF, sites, radii, |x, r| phf_cell(g, sf, x, r))
}
