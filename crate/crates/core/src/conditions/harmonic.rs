//! Harmonic measures of balls, the elliptic Harnack inequality and the mean
//! value inequality.

use rayon::prelude::*;

use super::{first_max, sweep, CellDetail, ConditionCell, ConditionId, ConditionReport};
use crate::error::{Error, Result};
use crate::graph::{BallView, Vertex, WeightedGraph};
use crate::solve::BallSystem;

/// `h_b(z)`: probability that the walk from interior `z` leaves `B(x, R)`
/// through boundary vertex `b`.
#[derive(Debug, Clone)]
pub struct HarmonicMeasure {
    pub ball: BallView,
    /// `values[j][i] = h_{boundary[j]}(interior[i])`.
    pub values: Vec<Vec<f64>>,
}

impl HarmonicMeasure {
    pub fn get(&self, b: Vertex, z: Vertex) -> Option<f64> {
        let j = self.ball.boundary.iter().position(|&v| v == b)?;
        let i = self.ball.interior.iter().position(|&v| v == z)?;
        Some(self.values[j][i])
    }

    /// `max_z |Σ_b h_b(z) - 1|`.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.ball.interior.len())
            .map(|i| (self.values.iter().map(|h| h[i]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// The harmonic extension `Σ_b data[b] h_b` of boundary data given in
    /// boundary order.
    pub fn extend(&self, data: &[f64]) -> Vec<f64> {
        assert_eq!(data.len(), self.values.len());
        let mut u = vec![0.0; self.ball.interior.len()];
        for (h, &w) in self.values.iter().zip(data) {
            if w != 0.0 {
                for (ui, hi) in u.iter_mut().zip(h) {
                    *ui += w * hi;
                }
            }
        }
        u
    }
}

/// Solves `h_b = P_B h_b + P(·, b)` on the interior for each boundary `b`.
pub fn harmonic_measure(g: &WeightedGraph, x: Vertex, radius: usize) -> Result<HarmonicMeasure> {
    let ball = g.ball(x, radius)?;
    ball.require_exact()?;
    ball.require_exit()?;
    let sys = BallSystem::new(g, &ball);
    let values = (0..ball.boundary.len())
        .into_par_iter()
        .map(|j| sys.solve(&sys.boundary_column(j)))
        .collect::<Result<_>>()?;
    Ok(HarmonicMeasure { ball, values })
}

/// `max u / min u` over the given values; `+∞` when `u` vanishes somewhere
/// but not everywhere, `None` when `u ≡ 0`.
pub fn harnack_ratio(u: &[f64]) -> Option<f64> {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        None
    } else if min <= 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(max / min)
    }
}

/// `u(x) V(x, R) / Σ_{y ∈ B(x,R)} u(y) μ(y)` for `u` on the interior of the
/// ball (center first); `None` when `u ≡ 0`.
pub fn mv_ratio(g: &WeightedGraph, ball: &BallView, u: &[f64]) -> Option<f64> {
    let volume: f64 = ball.interior.iter().map(|&y| g.measure(y)).sum();
    let mass: f64 = ball.interior.iter().zip(u).map(|(&y, &v)| v * g.measure(y)).sum();
    if mass <= 0.0 {
        None
    } else {
        Some(u[0] * volume / mass)
    }
}

fn require_radius(radius: usize) -> Result<()> {
    if radius == 0 {
        Err(Error::InvalidRadius(0))
    } else {
        Ok(())
    }
}

/// Harnack constant of `B(x, R)` inside `B(x, 2R)`: the max over boundary
/// vertices `b` of `B(x, 2R)` of `max h_b / min h_b` on `B(x, R)`.
pub fn harnack_cell(g: &WeightedGraph, x: Vertex, radius: usize) -> Result<ConditionCell> {
    require_radius(radius)?;
    let hm = harmonic_measure(g, x, 2 * radius)?;
    let inner = hm.ball.inner_len(radius);
    let ratios = hm
        .values
        .iter()
        .zip(&hm.ball.boundary)
        .map(|(h, &b)| harnack_ratio(&h[..inner]).map(|v| (v, b)));
    let (value, b) = first_max(ratios).expect("every boundary vertex is reachable");
    Ok(ConditionCell {
        site: x,
        radius,
        value,
        detail: Some(CellDetail::Harmonic { boundary: b }),
    })
}

/// Mean value constant of `B(x, R)`: the max over boundary vertices `b` of
/// `h_b(x) V(x, R) / Σ_y h_b(y) μ(y)`.
pub fn mv_cell(g: &WeightedGraph, x: Vertex, radius: usize) -> Result<ConditionCell> {
    require_radius(radius)?;
    let hm = harmonic_measure(g, x, radius)?;
    let ratios = hm
        .values
        .iter()
        .zip(&hm.ball.boundary)
        .map(|(h, &b)| mv_ratio(g, &hm.ball, h).map(|v| (v, b)));
    let (value, b) = first_max(ratios).expect("every boundary vertex is reachable");
    Ok(ConditionCell {
        site: x,
        radius,
        value,
        detail: Some(CellDetail::Harmonic { boundary: b }),
    })
}

pub fn check_harnack(g: &WeightedGraph, sites: &[Vertex], radii: &[usize]) -> Result<ConditionReport> {
    sweep(ConditionId::H, sites, radii, |x, r| harnack_cell(g, x, r))
}

pub fn check_mv(g: &WeightedGraph, sites: &[Vertex], radii: &[usize]) -> Result<ConditionReport> {
    sweep(ConditionId::MV, sites, radii, |x, r| mv_cell(g, x, r))
}
