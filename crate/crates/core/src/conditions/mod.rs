//! Best constants for the structural conditions, computed over sweeps of
//! sites and radii.
//!
//! Every checker produces one [`ConditionCell`] per admissible `(x, R)`; the
//! report constant is the max over cells (the min for `p_0`, whose inequality
//! runs the other way). Cells whose balls reach the frontier are skipped and
//! listed in the report. A failed condition is the value `+∞`, not an error.
//!
//! The Harnack-type conditions quantify over all nonnegative harmonic or
//! caloric functions. Those form convex cones generated by Dirac data: a
//! nonnegative harmonic function on a ball is `Σ_b g(b) h_b` with `g >= 0` on
//! the boundary, and a nonnegative solution on a cylinder is a nonnegative
//! combination of the responses to a unit initial mass at one vertex or a
//! unit boundary value at one space-time point. Each ratio bounded in these
//! checks is `L(u) / M(u)` with `L`, `M` linear and nonnegative, and
//! `Σ a_i / Σ b_i <= max a_i / b_i`, so the supremum over the cone is attained
//! on a generator. The checkers therefore only evaluate the generators.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Vertex;

pub mod caloric;
pub mod geometric;
pub mod harmonic;

pub use caloric::{
    check_phf, check_spmv, phf_cell, phf_setup, spmv_cell, spmv_setup, Cylinder, PhfSetup,
    SpmvParams, SpmvSetup,
};
pub use geometric::{
    check_e_uniform, check_p0, check_tc, check_td, check_vc, check_vd, tc_cell, td_cell, vc_cell,
    vd_cell,
};
pub use harmonic::{
    check_harnack, check_mv, harmonic_measure, harnack_cell, harnack_ratio, mv_cell, mv_ratio,
    HarmonicMeasure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionId {
    P0,
    VD,
    VC,
    TD,
    TC,
    E,
    MV,
    SPMV,
    H,
    PHF,
}

impl ConditionId {
    pub const ALL: [ConditionId; 10] = [
        Self::P0,
        Self::VD,
        Self::VC,
        Self::TD,
        Self::TC,
        Self::E,
        Self::MV,
        Self::SPMV,
        Self::H,
        Self::PHF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::P0 => "p0",
            Self::VD => "vd",
            Self::VC => "vc",
            Self::TD => "td",
            Self::TC => "tc",
            Self::E => "e",
            Self::MV => "mv",
            Self::SPMV => "spmv",
            Self::H => "h",
            Self::PHF => "phf",
        }
    }

    /// Whether the best constant is the max over cells (`false` only for
    /// `p_0`, which is a lower bound).
    pub fn takes_max(self) -> bool {
        self != Self::P0
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|c| c.name() == lower)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown condition {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceTime {
    pub time: usize,
    pub vertex: Vertex,
}

/// Generator of the nonnegative caloric cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Source {
    /// Unit mass at an interior vertex at the initial time.
    Initial { vertex: Vertex },
    /// Unit boundary value at one boundary vertex and one time.
    Injection { time: usize, vertex: Vertex },
}

/// What attains a cell's value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellDetail {
    /// The ratio's denominator is taken at `other`.
    Compared { other: Vertex },
    /// Harmonic measure of the boundary vertex `boundary`.
    Harmonic { boundary: Vertex },
    /// sPMV generator, and the `y` maximizing `V(y, 2R) E(y, 2R)`.
    Caloric { source: Source, recentered: Vertex },
    /// PH_F generator and the compared points of the lower and upper boxes.
    Parabolic {
        source: Source,
        lower: SpaceTime,
        upper: SpaceTime,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCell {
    pub site: Vertex,
    pub radius: usize,
    #[serde(with = "crate::serde_ext::extended")]
    pub value: f64,
    pub detail: Option<CellDetail>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub site: Vertex,
    pub radius: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepDomain {
    pub sites: Vec<Vertex>,
    pub radii: Vec<usize>,
    pub skipped: Vec<SkippedCell>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub domain: SweepDomain,
    #[serde(with = "crate::serde_ext::extended")]
    pub constant: f64,
    pub witness: Option<ConditionCell>,
    pub cells: Vec<ConditionCell>,
}

impl ConditionReport {
    /// Reduces per-cell outcomes, in sweep order. Inadmissible cells are
    /// recorded as skipped; any other error aborts.
    pub fn assemble(
        condition: ConditionId,
        sites: &[Vertex],
        radii: &[usize],
        outcomes: Vec<((Vertex, usize), Result<ConditionCell>)>,
    ) -> Result<Self> {
        let mut cells = Vec::new();
        let mut skipped = Vec::new();
        for ((site, radius), outcome) in outcomes {
            match outcome {
                Ok(cell) => cells.push(cell),
                Err(e) if e.is_inadmissible() => skipped.push(SkippedCell {
                    site,
                    radius,
                    reason: e.to_string(),
                }),
                Err(e) => return Err(e),
            }
        }
        if cells.is_empty() {
            return Err(Error::EmptySweep {
                skipped: skipped.len(),
            });
        }
        let better = |a: f64, b: f64| {
            if condition.takes_max() {
                a > b
            } else {
                a < b
            }
        };
        let mut best = 0;
        for (i, cell) in cells.iter().enumerate().skip(1) {
            if better(cell.value, cells[best].value) {
                best = i;
            }
        }
        Ok(Self {
            condition,
            domain: SweepDomain {
                sites: sites.to_vec(),
                radii: radii.to_vec(),
                skipped,
                notes: Vec::new(),
            },
            constant: cells[best].value,
            witness: Some(cells[best].clone()),
            cells,
        })
    }

    /// False when some cell carries the `+∞` failure sentinel.
    pub fn holds(&self) -> bool {
        self.constant.is_finite()
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.domain.notes.push(note.into());
        self
    }
}

/// Evaluates `cell` on every `(site, radius)` of the sweep in parallel and
/// assembles the report in sweep order.
pub(crate) fn sweep(
    condition: ConditionId,
    sites: &[Vertex],
    radii: &[usize],
    cell: impl Fn(Vertex, usize) -> Result<ConditionCell> + Sync,
) -> Result<ConditionReport> {
    let keys: Vec<(Vertex, usize)> = sites
        .iter()
        .flat_map(|&x| radii.iter().map(move |&r| (x, r)))
        .collect();
    let outcomes = keys
        .par_iter()
        .map(|&(x, r)| ((x, r), cell(x, r)))
        .collect();
    ConditionReport::assemble(condition, sites, radii, outcomes)
}

/// Index of the first maximum of `values` under `f64` ordering, with `+∞`
/// beating everything. `None` entries are ignored.
pub(crate) fn first_max<T: Copy>(values: impl IntoIterator<Item = Option<(f64, T)>>) -> Option<(f64, T)> {
    let mut best: Option<(f64, T)> = None;
    for (v, t) in values.into_iter().flatten() {
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, t));
        }
    }
    best
}
