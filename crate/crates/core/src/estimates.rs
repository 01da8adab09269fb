//! Numerical verification of the heat kernel estimates.
//!
//! Each verifier evaluates a ratio per sweep cell `(x, y, n)` that the
//! estimate claims is bounded above (upper estimates) or below (lower
//! estimates). Two-constant estimates `p <= C/V · exp(-c K)` are reported as a
//! curve `C(c) = sup base · exp(c K)` over a grid of `c`; lower estimates
//! `p >= c/V · exp(-C K)` as `c(C) = inf base · exp(C K)`.
//!
//! Parity: return probabilities vanish at odd times on bipartite graphs, so
//! the diagonal verifiers only accept even times; lower off-diagonal bounds
//! use `p̃_n = p_n + p_{n+1}`. Upper off-diagonal bounds use `p_n` as is,
//! since a zero only lowers a supremum.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit_time::{ExitTimes, ScaleFunction};
use crate::graph::{Vertex, WeightedGraph};
use crate::heat::{HeatPropagator, Mode, Window};
use crate::kernels::{global_kernel, kappa, kappa_c, nu, KernelParams};

/// Default exponent-constant grid for two-constant estimates.
pub const DEFAULT_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0];

/// Quantile levels reported for the base ratios.
pub const QUANTILE_LEVELS: [f64; 7] = [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateId {
    LDUE,
    LUE,
    DLE,
    UE2,
    LE2,
    NDLE,
    UEF,
    LEF,
}

impl EstimateId {
    pub const ALL: [EstimateId; 8] = [
        Self::LDUE,
        Self::LUE,
        Self::DLE,
        Self::UE2,
        Self::LE2,
        Self::NDLE,
        Self::UEF,
        Self::LEF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::LDUE => "ldue",
            Self::LUE => "lue",
            Self::DLE => "dle",
            Self::UE2 => "ue2",
            Self::LE2 => "le2",
            Self::NDLE => "ndle",
            Self::UEF => "uef",
            Self::LEF => "lef",
        }
    }

    pub fn bound(self) -> Bound {
        match self {
            Self::LDUE | Self::LUE | Self::UE2 | Self::UEF => Bound::Upper,
            Self::DLE | Self::LE2 | Self::NDLE | Self::LEF => Bound::Lower,
        }
    }
}

impl fmt::Display for EstimateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|e| e.name() == lower)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimate {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Upper,
    Lower,
}

/// Which transition values a report consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// Even times only.
    Even,
    /// `p_n + p_{n+1}`.
    Smoothed,
    /// `p_n` at every requested time.
    Raw,
}

/// LE2 volume normalization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Le2Volume {
    /// `V(x, e(x, n))`.
    #[default]
    Single,
    /// `sqrt(V(x, e(x, n)) V(y, e(y, n)))`.
    Symmetric,
}

/// Sweep cells: every pair at every time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub pairs: Vec<(Vertex, Vertex)>,
    pub times: Vec<usize>,
}

impl Sweep {
    pub fn diagonal(sites: &[Vertex], times: &[usize]) -> Self {
        Self {
            pairs: sites.iter().map(|&x| (x, x)).collect(),
            times: times.to_vec(),
        }
    }

    fn cells(&self) -> Vec<(Vertex, Vertex, usize)> {
        self.pairs
            .iter()
            .flat_map(|&(x, y)| self.times.iter().map(move |&n| (x, y, n)))
            .collect()
    }
}

/// Powers of two in `[lo, hi]`.
pub fn dyadic_times(lo: usize, hi: usize) -> Vec<usize> {
    (0..usize::BITS)
        .map(|k| 1usize << k)
        .filter(|&t| t >= lo && t <= hi)
        .collect()
}

/// Pairs `(x, y)` with `d(x, y)` in `distances`, at most `per_shell` per
/// distance, in BFS order.
pub fn shell_pairs(
    g: &WeightedGraph,
    x: Vertex,
    distances: &[usize],
    per_shell: usize,
) -> Result<Vec<(Vertex, Vertex)>> {
    g.check_vertex(x)?;
    let max = distances.iter().copied().max().unwrap_or(0);
    let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pairs = Vec::new();
    for (y, d) in g.bfs(x, max) {
        if distances.contains(&d) {
            let count = taken.entry(d).or_default();
            if *count < per_shell {
                *count += 1;
                pairs.push((x, y));
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCell {
    pub x: Vertex,
    pub y: Vertex,
    /// Sweep time.
    pub n: usize,
    /// Heat time actually evaluated (`2n` for the diagonal lower bound).
    pub steps: usize,
    pub distance: usize,
    /// Radius of the normalizing volume: `e(x, n)` or `f(n)`.
    pub radius: usize,
    /// The ratio without the exponential factor.
    #[serde(with = "crate::serde_ext::extended")]
    pub base: f64,
    /// The kernel `K` of the exponential factor (0 for diagonal estimates).
    pub kernel: f64,
}

impl EstimateCell {
    /// `base · exp(c K)`.
    pub fn value(&self, c: f64) -> f64 {
        if self.kernel == 0.0 {
            self.base
        } else {
            self.base * (c * self.kernel).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEstimateCell {
    pub x: Vertex,
    pub y: Vertex,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// `c` for upper estimates, `C` for lower ones.
    pub constant: f64,
    #[serde(with = "crate::serde_ext::extended")]
    pub value: f64,
    /// Index into the report's cells.
    pub witness: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    #[serde(with = "crate::serde_ext::extended")]
    pub value: f64,
}

/// Spread of the base ratio over the cells of one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteStability {
    pub site: Vertex,
    #[serde(with = "crate::serde_ext::extended")]
    pub min: f64,
    #[serde(with = "crate::serde_ext::extended")]
    pub max: f64,
    /// `max / min`; `+∞` when some ratio vanishes.
    #[serde(with = "crate::serde_ext::extended")]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: EstimateId,
    pub bound: Bound,
    pub parity: Parity,
    pub variant: Option<String>,
    pub sweep: Sweep,
    pub cells: Vec<EstimateCell>,
    pub skipped: Vec<SkippedEstimateCell>,
    #[serde(with = "crate::serde_ext::extended")]
    pub sup: f64,
    #[serde(with = "crate::serde_ext::extended")]
    pub inf: f64,
    pub sup_witness: usize,
    pub inf_witness: usize,
    pub quantiles: Vec<Quantile>,
    pub stability: Vec<SiteStability>,
    /// `C(c)` (upper) or `c(C)` (lower); empty for single-constant estimates.
    pub curve: Vec<CurvePoint>,
    /// Uniformity constant `C₀` of the scale function, semi-local
    /// estimates only.
    #[serde(with = "crate::serde_ext::extended_opt", default)]
    pub scale_uniformity: Option<f64>,
    pub notes: Vec<String>,
}

impl EstimateReport {
    /// Largest per-site spread.
    pub fn max_spread(&self) -> f64 {
        self.stability.iter().map(|s| s.spread).fold(0.0, f64::max)
    }

    /// `max / min` of the base ratio over all cells.
    pub fn spread(&self) -> f64 {
        if self.inf > 0.0 {
            self.sup / self.inf
        } else {
            f64::INFINITY
        }
    }
}

/// What a verifier evaluates at one heat time.
#[derive(Debug, Clone, Copy)]
struct Plan {
    x: Vertex,
    y: Vertex,
    n: usize,
    steps: usize,
    smoothed: bool,
}

/// `P_steps(x, y)` (plus `P_{steps+1}(x, y)` when smoothed) for each plan,
/// one propagation per origin. Plans past the exactness window come back as
/// `ExactnessWindow` errors.
fn transition_values(g: &WeightedGraph, plans: &[Plan], mode: Mode) -> Vec<Result<f64>> {
    let mut by_origin: BTreeMap<Vertex, Vec<usize>> = BTreeMap::new();
    for (i, p) in plans.iter().enumerate() {
        by_origin.entry(p.x).or_default().push(i);
    }
    let groups: Vec<(Vertex, Vec<usize>)> = by_origin.into_iter().collect();
    let results: Vec<Vec<(usize, Result<f64>)>> = groups
        .par_iter()
        .map(|(x, idx)| origin_values(g, *x, idx, plans, mode))
        .collect();
    let mut out: Vec<Option<Result<f64>>> = (0..plans.len()).map(|_| None).collect();
    for (i, r) in results.into_iter().flatten() {
        out[i] = Some(r);
    }
    out.into_iter().map(|r| r.expect("every plan evaluated")).collect()
}

fn origin_values(
    g: &WeightedGraph,
    x: Vertex,
    idx: &[usize],
    plans: &[Plan],
    mode: Mode,
) -> Vec<(usize, Result<f64>)> {
    if let Err(e) = g.check_vertex(x) {
        let msg = e.to_string();
        return idx
            .iter()
            .map(|&i| (i, Err(Error::InvalidParameter(msg.clone()))))
            .collect();
    }
    let validity = g.validity_radius(x).expect("checked vertex");
    let last = |p: &Plan| p.steps + usize::from(p.smoothed);
    let fits = |t: usize| match (validity, mode) {
        (None, _) => true,
        (Some(v), Mode::Row) => t < v,
        (Some(v), Mode::Returning) => t / 2 < v,
    };
    let mut out = Vec::with_capacity(idx.len());
    let mut wanted: BTreeMap<usize, Vec<(usize, Vertex)>> = BTreeMap::new();
    let mut horizon = 0;
    for &i in idx {
        let p = &plans[i];
        if !fits(last(p)) {
            out.push((
                i,
                Err(Error::ExactnessWindow {
                    origin: x,
                    steps: last(p),
                    validity: validity.unwrap_or(0),
                }),
            ));
            continue;
        }
        if let Err(e) = g.check_vertex(p.y) {
            out.push((i, Err(e)));
            continue;
        }
        horizon = horizon.max(last(p));
        wanted.entry(p.steps).or_default().push((i, p.y));
        if p.smoothed {
            wanted.entry(p.steps + 1).or_default().push((i, p.y));
        }
    }
    if wanted.is_empty() {
        return out;
    }
    let mut prop = HeatPropagator::new(g, x, horizon, mode, Window::Enforce)
        .expect("window checked per plan");
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (t, list) in wanted {
        prop.run_to(t);
        for (i, y) in list {
            *acc.entry(i).or_default() += prop.mass_at(y);
        }
    }
    out.extend(acc.into_iter().map(|(i, v)| (i, Ok(v))));
    out
}

/// Turns per-cell outcomes into a report. Inadmissible cells are skipped;
/// other errors abort.
#[allow(clippy::too_many_arguments)]
fn assemble(
    estimate: EstimateId,
    parity: Parity,
    variant: Option<String>,
    sweep: &Sweep,
    keys: &[(Vertex, Vertex, usize)],
    outcomes: Vec<Result<EstimateCell>>,
    grid: &[f64],
    notes: Vec<String>,
) -> Result<EstimateReport> {
    let bound = estimate.bound();
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for (&(x, y, n), outcome) in keys.iter().zip(outcomes) {
        match outcome {
            Ok(c) => cells.push(c),
            Err(e) if e.is_inadmissible() => skipped.push(SkippedEstimateCell {
                x,
                y,
                n,
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
    let pick = |c: f64, upper: bool| -> (f64, usize) {
        let mut best = (cells[0].value(c), 0);
        for (i, cell) in cells.iter().enumerate().skip(1) {
            let v = cell.value(c);
            if (upper && v > best.0) || (!upper && v < best.0) {
                best = (v, i);
            }
        }
        best
    };
    let (sup, sup_witness) = pick(0.0, true);
    let (inf, inf_witness) = pick(0.0, false);

    let mut sorted: Vec<f64> = cells.iter().map(|c| c.base).collect();
    sorted.sort_by(f64::total_cmp);
    let quantiles = QUANTILE_LEVELS
        .iter()
        .map(|&level| Quantile {
            level,
            value: sorted[(level * (sorted.len() - 1) as f64).round() as usize],
        })
        .collect();

    let mut per_site: BTreeMap<Vertex, (f64, f64)> = BTreeMap::new();
    for c in &cells {
        let e = per_site.entry(c.x).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(c.base);
        e.1 = e.1.max(c.base);
    }
    let stability = per_site
        .into_iter()
        .map(|(site, (min, max))| SiteStability {
            site,
            min,
            max,
            spread: if min > 0.0 { max / min } else { f64::INFINITY },
        })
        .collect();

    let curve = grid
        .iter()
        .map(|&c| {
            let (value, witness) = pick(c, bound == Bound::Upper);
            CurvePoint {
                constant: c,
                value,
                witness,
            }
        })
        .collect();

    Ok(EstimateReport {
        estimate,
        bound,
        parity,
        variant,
        sweep: sweep.clone(),
        cells,
        skipped,
        sup,
        inf,
        sup_witness,
        inf_witness,
        quantiles,
        stability,
        curve,
        scale_uniformity: None,
        notes,
    })
}

fn positive_radius(site: Vertex, n: usize, e: usize) -> Result<usize> {
    if e == 0 {
        Err(Error::ZeroExitInverse { site, n })
    } else {
        Ok(e)
    }
}

fn diagonal_report<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sites: &[Vertex],
    times: &[usize],
    estimate: EstimateId,
) -> Result<EstimateReport> {
    let sweep = Sweep::diagonal(sites, times);
    let keys = sweep.cells();
    let steps = |n: usize| if estimate == EstimateId::DLE { 2 * n } else { n };
    let plans: Vec<Plan> = keys
        .iter()
        .map(|&(x, y, n)| Plan {
            x,
            y,
            n,
            steps: steps(n),
            smoothed: false,
        })
        .collect();
    let values = transition_values(g, &plans, Mode::Returning);
    let outcomes = plans
        .par_iter()
        .zip(values)
        .map(|(p, value)| {
            if p.steps % 2 == 1 {
                return Err(Error::InvalidParameter(format!(
                    "diagonal estimates need even times, got {}",
                    p.steps
                )));
            }
            let value = value?;
            let e = positive_radius(p.x, p.steps, src.exit_inverse(p.x, p.steps)?)?;
            let volume = g.volume(p.x, e)?;
            let mu = g.measure(p.x);
            // P_n(x,x) V / μ(x) and p_n(x,x) V = P_n(x,x) V / μ(x) coincide.
            Ok(EstimateCell {
                x: p.x,
                y: p.y,
                n: p.n,
                steps: p.steps,
                distance: 0,
                radius: e,
                base: value * volume / mu,
                kernel: 0.0,
            })
        })
        .collect();
    assemble(estimate, Parity::Even, None, &sweep, &keys, outcomes, &[], Vec::new())
}

/// `P_n(x, x) V(x, e(x, n)) / μ(x)` over sites × even times.
pub fn verify_ldue<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sites: &[Vertex],
    times: &[usize],
) -> Result<EstimateReport> {
    diagonal_report(g, src, sites, times, EstimateId::LDUE)
}

/// `p_{2n}(x, x) V(x, e(x, 2n))` over sites × times `n`.
pub fn verify_diag_lower<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sites: &[Vertex],
    times: &[usize],
) -> Result<EstimateReport> {
    diagonal_report(g, src, sites, times, EstimateId::DLE)
}

/// Off-diagonal kernel used by a two-constant estimate.
#[derive(Clone, Copy)]
enum Exponent {
    KappaC,
    Kappa,
    Nu,
    None,
}

#[allow(clippy::too_many_arguments)]
fn off_diagonal<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sweep: &Sweep,
    keys: Vec<(Vertex, Vertex, usize)>,
    params: &KernelParams,
    grid: &[f64],
    estimate: EstimateId,
    exponent: Exponent,
    volume_mode: Le2Volume,
) -> Result<EstimateReport> {
    params.validate()?;
    let smoothed = estimate.bound() == Bound::Lower;
    let plans: Vec<Plan> = keys
        .iter()
        .map(|&(x, y, n)| Plan {
            x,
            y,
            n,
            steps: n,
            smoothed,
        })
        .collect();
    let values = transition_values(g, &plans, Mode::Row);
    let outcomes = plans
        .par_iter()
        .zip(values)
        .map(|(p, value)| {
            let mass = value?;
            let (x, y, n) = (p.x, p.y, p.n);
            let d = g.distance(x, y)?;
            let ex = positive_radius(x, n, src.exit_inverse(x, n)?)?;
            let mut volume = g.volume(x, ex)?;
            if volume_mode == Le2Volume::Symmetric {
                let ey = positive_radius(y, n, src.exit_inverse(y, n)?)?;
                volume = (volume * g.volume(y, ey)?).sqrt();
            }
            let kernel = match exponent {
                Exponent::KappaC => kappa_c(g, src, x, y, n, params)?.value as f64,
                Exponent::Kappa => kappa(g, src, x, y, n, params)?.value as f64,
                Exponent::Nu => nu(g, src, x, y, n, params)?.value,
                Exponent::None => 0.0,
            };
            Ok(EstimateCell {
                x,
                y,
                n,
                steps: n,
                distance: d,
                radius: ex,
                base: mass / g.measure(y) * volume,
                kernel,
            })
        })
        .collect();
    let parity = if smoothed { Parity::Smoothed } else { Parity::Raw };
    let variant = (estimate == EstimateId::LE2).then(|| {
        match volume_mode {
            Le2Volume::Single => "single-volume",
            Le2Volume::Symmetric => "symmetric-volume",
        }
        .to_string()
    });
    let mut notes = Vec::new();
    if matches!(exponent, Exponent::KappaC) {
        notes.push(format!("kernel κ_C with C = {}, q = {}", params.chain, params.q));
    } else if !matches!(exponent, Exponent::None) {
        notes.push(format!("q = {}", params.q));
    }
    assemble(estimate, parity, variant, sweep, &keys, outcomes, grid, notes)
}

/// `C(c) = sup p_n(x, y) sqrt(V(x, e(x,n)) V(y, e(y,n))) exp(c κ_C(n, x, y))`.
pub fn verify_lue<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sweep: &Sweep,
    params: &KernelParams,
    grid: &[f64],
) -> Result<EstimateReport> {
    off_diagonal(
        g,
        src,
        sweep,
        sweep.cells(),
        params,
        grid,
        EstimateId::LUE,
        Exponent::KappaC,
        Le2Volume::Symmetric,
    )
}

/// As [`verify_lue`] with `κ` in place of `κ_C`.
pub fn verify_ue2<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sweep: &Sweep,
    params: &KernelParams,
    grid: &[f64],
) -> Result<EstimateReport> {
    off_diagonal(
        g,
        src,
        sweep,
        sweep.cells(),
        params,
        grid,
        EstimateId::UE2,
        Exponent::Kappa,
        Le2Volume::Symmetric,
    )
}

/// `c(C) = inf p̃_n(x, y) V(x, e(x, n)) exp(C ν(n, x, y))`, or with the
/// symmetric volume `sqrt(V(x,e(x,n)) V(y,e(y,n)))`.
pub fn verify_le2<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sweep: &Sweep,
    params: &KernelParams,
    grid: &[f64],
    volume: Le2Volume,
) -> Result<EstimateReport> {
    off_diagonal(
        g,
        src,
        sweep,
        sweep.cells(),
        params,
        grid,
        EstimateId::LE2,
        Exponent::Nu,
        volume,
    )
}

/// `inf p̃_n(x, y) V(x, e(x, n))` over pairs with `d(x, y) <= e(x, n)`;
/// farther pairs are listed as skipped.
pub fn verify_ndle<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sweep: &Sweep,
) -> Result<EstimateReport> {
    let mut near = Vec::new();
    let mut far = Vec::new();
    for (x, y, n) in sweep.cells() {
        let d = g.distance(x, y)?;
        match src.exit_inverse(x, n) {
            Ok(e) if d > e => far.push(SkippedEstimateCell {
                x,
                y,
                n,
                reason: format!("d = {d} exceeds e(x, n) = {e}"),
            }),
            _ => near.push((x, y, n)),
        }
    }
    let mut report = off_diagonal(
        g,
        src,
        sweep,
        near,
        &KernelParams::default(),
        &[],
        EstimateId::NDLE,
        Exponent::None,
        Le2Volume::Single,
    )?;
    report.skipped.extend(far);
    Ok(report)
}

/// `UEF`: `C(c) = sup P_n(x,y) V(x, f(n)) / μ(y) exp(c k(n, d))`; `LEF`:
/// `c(C) = inf P̃_n(x,y) V(x, f(n)) / μ(y) exp(C k(n, d))`, with `k` the
/// local kernel of `F` and `f = F⁻¹`.
pub fn verify_semi_local(
    g: &WeightedGraph,
    sf: &ScaleFunction,
    sweep: &Sweep,
    q: f64,
    grid: &[f64],
    estimate: EstimateId,
) -> Result<EstimateReport> {
    if !matches!(estimate, EstimateId::UEF | EstimateId::LEF) {
        return Err(Error::InvalidParameter(format!(
            "{estimate} is not a semi-local estimate"
        )));
    }
    KernelParams { q, chain: 1 }.validate()?;
    let smoothed = estimate == EstimateId::LEF;
    let keys = sweep.cells();
    let plans: Vec<Plan> = keys
        .iter()
        .map(|&(x, y, n)| Plan {
            x,
            y,
            n,
            steps: n,
            smoothed,
        })
        .collect();
    let values = transition_values(g, &plans, Mode::Row);
    let outcomes = plans
        .par_iter()
        .zip(values)
        .map(|(p, value)| {
            let mass = value?;
            let d = g.distance(p.x, p.y)?;
            let f = positive_radius(p.x, p.n, sf.inverse(p.n)?)?;
            let kernel = global_kernel(sf, p.n, d, q)? as f64;
            Ok(EstimateCell {
                x: p.x,
                y: p.y,
                n: p.n,
                steps: p.n,
                distance: d,
                radius: f,
                base: mass * g.volume(p.x, f)? / g.measure(p.y),
                kernel,
            })
        })
        .collect();
    let parity = if smoothed { Parity::Smoothed } else { Parity::Raw };
    let mut report = assemble(
        estimate,
        parity,
        None,
        sweep,
        &keys,
        outcomes,
        grid,
        vec![format!("q = {q}")],
    )?;
    report.scale_uniformity = Some(sf.uniformity);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitQuantity {
    /// `V(x, R) ≃ R^α`.
    Volume,
    /// `E(x, R) ≃ R^β`.
    ExitTime,
    /// `P_n(x, x)` against `n`.
    DiagonalDecay,
}

/// Least-squares line `y = slope · x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Max absolute deviation from the line.
    pub residual: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("a line fit needs two points".into()));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("line fit over a single abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).abs())
        .fold(0.0, f64::max);
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept,
        residual,
        r_squared,
        points: points.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub quantity: FitQuantity,
    /// Slope of `log value` against `log argument`.
    pub slope: f64,
    pub residual: f64,
    pub r_squared: f64,
    /// Smallest and largest argument.
    pub range: (f64, f64),
    pub points: usize,
}

/// Log-log fit over at least four `(argument, value)` points.
pub fn fit_exponent(quantity: FitQuantity, series: &[(f64, f64)]) -> Result<ExponentFit> {
    if series.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "exponent fit needs at least 4 points, got {}",
            series.len()
        )));
    }
    if let Some(&(a, v)) = series.iter().find(|&&(a, v)| !(a > 0.0 && v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "exponent fit needs positive data, got ({a}, {v})"
        )));
    }
    let logs: Vec<(f64, f64)> = series.iter().map(|&(a, v)| (a.ln(), v.ln())).collect();
    let fit = linear_fit(&logs)?;
    let lo = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit {
        quantity,
        slope: fit.slope,
        residual: fit.residual,
        r_squared: fit.r_squared,
        range: (lo, hi),
        points: series.len(),
    })
}

/// Regression of `log base` on `d² / n` over cells with `d²/n` in
/// `[lo, hi]` and positive base.
pub fn gaussian_shape(cells: &[EstimateCell], lo: f64, hi: f64) -> Result<LinearFit> {
    let points: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.base > 0.0)
        .map(|c| ((c.distance * c.distance) as f64 / c.n as f64, c.base.ln()))
        .filter(|&(s, _)| s >= lo && s <= hi)
        .collect();
    linear_fit(&points)
}
