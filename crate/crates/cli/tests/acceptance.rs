//! Acceptance suite. Runs every criterion at its stated tolerance and time
//! budget and prints one PASS/FAIL line per criterion; exits nonzero if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;

use harnack_cli::{max_numeric_difference, numeric_content, run_with_workers, RunConfig};
use harnack_core::conditions::{
    harmonic_measure, harnack_cell, harnack_ratio, mv_cell, mv_ratio, phf_cell, phf_setup, spmv_cell, spmv_setup,
    check_vd, Cylinder, SpmvParams,
};
use harnack_core::estimates::{
    dyadic_times, fit_exponent, gaussian_shape, shell_pairs, verify_diag_lower, verify_ldue, verify_le2,
    verify_semi_local, EstimateId, FitQuantity, Le2Volume, Sweep, DEFAULT_GRID,
};
use harnack_core::exit_time::{exit_profile, mean_exit, scale_function};
use harnack_core::generators::{binary_tree, lattice, perturb_weights, sierpinski_gasket, DEFAULT_VERTEX_CAP};
use harnack_core::heat::{heat_row_with, Window};
use harnack_core::kernels::{global_kernel, local_kernel, KernelParams};
use harnack_core::rng::Lcg;
use harnack_core::{ExitTimeCache, ScaleFunction, WeightedGraph};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn criterion(id: u32, name: &str, budget: f64, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match outcome {
        Ok(v) if secs < budget => (v.pass, v.detail),
        Ok(v) => (false, format!("{} (over time budget)", v.detail)),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!(
        "{} criterion {id:>2} {name}: {detail} [{secs:.1} s, budget {budget} s]",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn z2_large() -> &'static WeightedGraph {
    static G: OnceLock<WeightedGraph> = OnceLock::new();
    G.get_or_init(|| lattice(2, 513, DEFAULT_VERTEX_CAP).unwrap())
}

fn gasket_large() -> &'static WeightedGraph {
    static G: OnceLock<WeightedGraph> = OnceLock::new();
    G.get_or_init(|| sierpinski_gasket(10, DEFAULT_VERTEX_CAP).unwrap())
}

fn exit_exactness() -> Verdict {
    let g = lattice(1, 64, DEFAULT_VERTEX_CAP).unwrap();
    let worst = (1..=30)
        .map(|r| (mean_exit(&g, g.center(), r).unwrap().value - (r * r) as f64).abs())
        .fold(0.0, f64::max);
    verdict(worst <= 1e-6, format!("max |E(0,R) - R^2| over R in [1,30] = {worst:.2e}"))
}

fn exponents(g: &WeightedGraph, radii: &[usize]) -> (f64, f64) {
    let x = g.center();
    let profile = exit_profile(g, x, *radii.iter().max().unwrap()).unwrap();
    let vol: Vec<(f64, f64)> = radii.iter().map(|&r| (r as f64, g.volume(x, r).unwrap())).collect();
    let ext: Vec<(f64, f64)> = radii.iter().map(|&r| (r as f64, profile.value(r).unwrap())).collect();
    let alpha = fit_exponent(FitQuantity::Volume, &vol).unwrap().slope;
    let beta = fit_exponent(FitQuantity::ExitTime, &ext).unwrap().slope;
    (alpha, beta)
}

fn lattice_exponents() -> Verdict {
    let g = lattice(2, 100, DEFAULT_VERTEX_CAP).unwrap();
    let radii: Vec<usize> = (8..=32).collect();
    let (alpha, beta) = exponents(&g, &radii);
    verdict(
        (beta - 2.0).abs() <= 0.15 && (alpha - 2.0).abs() <= 0.1,
        format!("beta = {beta:.4} (2 +- 0.15), alpha = {alpha:.4} (2 +- 0.1)"),
    )
}

fn fractal_exponents() -> Verdict {
    let g = sierpinski_gasket(7, DEFAULT_VERTEX_CAP).unwrap();
    let radii = dyadic_times(4, 32);
    let (alpha, beta) = exponents(&g, &radii);
    let (b0, a0) = (5f64.ln() / 2f64.ln(), 3f64.ln() / 2f64.ln());
    // Two-level oracle: one dyadic step multiplies E by ~5 and V by ~3.
    let x = g.center();
    let e_ratio = mean_exit(&g, x, 32).unwrap().value / mean_exit(&g, x, 16).unwrap().value;
    let v_ratio = g.volume(x, 32).unwrap() / g.volume(x, 16).unwrap();
    verdict(
        (beta - b0).abs() <= 0.2 && (alpha - a0).abs() <= 0.15,
        format!(
            "beta = {beta:.4} ({b0:.3} +- 0.2), alpha = {alpha:.4} ({a0:.3} +- 0.15); \
             E(32)/E(16) = {e_ratio:.3}, V(32)/V(16) = {v_ratio:.3}"
        ),
    )
}

fn ldue_stability() -> Verdict {
    let times = dyadic_times(16, 1024);
    let spread = |g: &WeightedGraph| {
        let cache = ExitTimeCache::new(g);
        let r = verify_ldue(g, &cache, &[g.center()], &times).unwrap();
        assert!(r.skipped.is_empty(), "skipped cells: {:?}", r.skipped);
        assert_eq!(r.cells.len(), times.len());
        r.spread()
    };
    let (z2, gasket) = (spread(z2_large()), spread(gasket_large()));
    verdict(
        z2 <= 8.0 && gasket <= 16.0,
        format!("max/min over n in [16,1024]: Z^2 {z2:.3} (<= 8), gasket {gasket:.3} (<= 16)"),
    )
}

fn diagonal_lower() -> Verdict {
    let times = dyadic_times(8, 512);
    let inf = |g: &WeightedGraph| {
        let cache = ExitTimeCache::new(g);
        let r = verify_diag_lower(g, &cache, &[g.center()], &times).unwrap();
        assert!(r.skipped.is_empty(), "skipped cells: {:?}", r.skipped);
        r.inf
    };
    let (z2, gasket) = (inf(z2_large()), inf(gasket_large()));
    verdict(
        z2 > 0.02 && gasket > 0.02,
        format!("inf p_2n(x,x) V(x,e(x,2n)) over n in [8,512]: Z^2 {z2:.4}, gasket {gasket:.4} (> 0.02)"),
    )
}

/// `n / k <= q E` exactly as the definition reads.
fn holds(n: usize, k: usize, q: f64, e: f64) -> bool {
    (n as f64) / (k as f64) <= q * e
}

fn kernel_oracle() -> Verdict {
    let g = lattice(1, 256, DEFAULT_VERTEX_CAP).unwrap();
    let profile = exit_profile(&g, g.center(), 200).unwrap();
    let sf = ScaleFunction::from_profiles(std::slice::from_ref(&profile)).unwrap();
    let x = g.center();
    let e = |r: usize| if r == 0 { 0.0 } else { profile.value(r).unwrap() };
    let f = |r: usize| if r == 0 { 0.0 } else { sf.value(r).unwrap() };
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for q in [0.25, 0.5, 1.0] {
        for n in 1..=200usize {
            for r in 1..=200usize {
                let local = (1..=n).filter(|&k| holds(n, k, q, e(r / k))).max().unwrap_or(0);
                // k past R gives F(0) = 0, which never qualifies; scan past
                // it anyway.
                let global = (1..=r + n + 1).filter(|&k| holds(n, k, q, f(r / k))).max().unwrap_or(0);
                mismatches += usize::from(local_kernel(&profile, x, n, r, q).unwrap() != local);
                mismatches += usize::from(global_kernel(&sf, n, r, q).unwrap() != global);
                checked += 2;
            }
        }
    }
    verdict(mismatches == 0, format!("{mismatches} mismatches in {checked} evaluations"))
}

/// Nonnegative data: sparse (a few point masses) or dense with zeros.
fn random_data(rng: &mut Lcg, len: usize) -> Vec<f64> {
    let mut data = vec![0.0; len];
    if rng.next_f64() < 0.5 {
        for _ in 0..1 + rng.next_index(3) {
            data[rng.next_index(len)] = rng.next_f64();
        }
    } else {
        for v in &mut data {
            if rng.next_f64() < 0.8 {
                *v = rng.next_f64();
            }
        }
    }
    data
}

fn random_caloric(cyl: &Cylinder, rng: &mut Lcg) -> Vec<Vec<f64>> {
    let ni = cyl.ball().interior.len();
    let nb = cyl.ball().boundary.len();
    let steps = cyl.horizon();
    let flat = random_data(rng, ni + nb * steps);
    let boundary: Vec<Vec<f64>> = (0..steps).map(|t| flat[ni + t * nb..ni + (t + 1) * nb].to_vec()).collect();
    cyl.evolve(&flat[..ni], &boundary)
}

const SAMPLES: u64 = 10_000;

/// Max over samples of `ratio / constant`, and the number of samples whose
/// ratio exceeds the constant by more than 1e-9.
fn dominance(constant: f64, seed: u64, sample: impl Fn(&mut Lcg) -> Option<f64> + Sync) -> (f64, usize) {
    let ratios: Vec<Option<f64>> = (0..SAMPLES)
        .into_par_iter()
        .map(|i| sample(&mut Lcg::new(seed.wrapping_mul(1_000_003).wrapping_add(i))))
        .collect();
    let violations = ratios.iter().flatten().filter(|&&v| v > constant + 1e-9).count();
    let best = ratios.iter().flatten().fold(0.0f64, |m, &v| m.max(v / constant));
    (best, violations)
}

fn extremal_dominance() -> Verdict {
    let g = lattice(2, 20, DEFAULT_VERTEX_CAP).unwrap();
    let x = g.center();
    let cache = ExitTimeCache::new(&g);
    let sf = scale_function(&g, &[x], 16).unwrap();
    let mut violations = 0;
    let mut lines = Vec::new();
    for r in [2usize, 3, 4] {
        let seed = r as u64;

        let h = harnack_cell(&g, x, r).unwrap().value;
        let hm = harmonic_measure(&g, x, 2 * r).unwrap();
        let inner = hm.ball.inner_len(r);
        let (best_h, v_h) = dominance(h, seed, |rng| {
            let u = hm.extend(&random_data(rng, hm.ball.boundary.len()));
            harnack_ratio(&u[..inner])
        });

        let mv = mv_cell(&g, x, r).unwrap().value;
        let hm1 = harmonic_measure(&g, x, r).unwrap();
        let (best_mv, v_mv) = dominance(mv, seed + 10, |rng| {
            let u = hm1.extend(&random_data(rng, hm1.ball.boundary.len()));
            mv_ratio(&g, &hm1.ball, &u)
        });

        let params = SpmvParams::default();
        let spmv = spmv_cell(&g, &cache, x, r, params).unwrap().value;
        let setup = spmv_setup(&g, &cache, x, r, params).unwrap();
        let (best_s, v_s) = dominance(spmv, seed + 20, |rng| setup.ratio(&random_caloric(setup.cylinder(), rng)));

        let phf = phf_cell(&g, &sf, x, r).unwrap().value;
        let psetup = phf_setup(&g, &sf, x, r, 0).unwrap();
        let (best_p, v_p) = dominance(phf, seed + 30, |rng| {
            psetup.evaluate(&random_caloric(psetup.cylinder(), rng)).map(|hit| hit.0)
        });

        violations += v_h + v_mv + v_s + v_p;
        lines.push(format!(
            "R={r}: H {h:.3} ({best_h:.2}), MV {mv:.3} ({best_mv:.2}), sPMV {spmv:.3} ({best_s:.2}), \
             PH_F {phf:.3} ({best_p:.2})"
        ));
    }
    verdict(
        violations == 0,
        format!(
            "{violations} of {} samples exceed the extremal constant; constant (best sample / constant): {}",
            12 * SAMPLES,
            lines.join("; ")
        ),
    )
}

fn gaussian() -> Verdict {
    let g = lattice(2, 100, DEFAULT_VERTEX_CAP).unwrap();
    let x = g.center();
    let sf = scale_function(&g, &[x], 40).unwrap();
    let sweep = Sweep {
        pairs: shell_pairs(&g, x, &[0, 4, 8, 12, 16, 20, 24, 28, 32, 36, 40], 3).unwrap(),
        times: vec![8, 12, 16, 24, 32],
    };
    let r = verify_semi_local(&g, &sf, &sweep, 0.5, &DEFAULT_GRID, EstimateId::LEF).unwrap();
    let fit = gaussian_shape(&r.cells, 4.0, 50.0).unwrap();
    verdict(
        fit.slope < 0.0 && fit.r_squared >= 0.9,
        format!(
            "log(p~ V(x,f(n))) vs d^2/n over {} cells: slope {:.4}, R^2 {:.4}",
            fit.points, fit.slope, fit.r_squared
        ),
    )
}

fn doubling_failure() -> Verdict {
    let g = binary_tree(14, DEFAULT_VERTEX_CAP).unwrap();
    let radii: Vec<usize> = (1..=10).collect();
    let r = check_vd(&g, &[g.center()], &radii).unwrap();
    verdict(
        r.constant > 20.0,
        format!(
            "VD constant at the root {:.3} over {} admissible radii ({} past the frontier)",
            r.constant,
            r.cells.len(),
            r.domain.skipped.len()
        ),
    )
}

fn rows(g: &WeightedGraph, n: usize) -> Vec<Vec<f64>> {
    (0..g.vertex_count())
        .into_par_iter()
        .map(|x| {
            let s = heat_row_with(g, x, n, Window::Override).unwrap();
            (0..g.vertex_count()).map(|y| s.get(y)).collect()
        })
        .collect()
}

fn invariance() -> Verdict {
    let mut failures = Vec::new();
    let graphs = [
        perturb_weights(&lattice(2, 8, DEFAULT_VERTEX_CAP).unwrap(), 1.0, 3.0, 5).unwrap(),
        perturb_weights(&sierpinski_gasket(3, DEFAULT_VERTEX_CAP).unwrap(), 0.5, 2.0, 9).unwrap(),
    ];
    for (gi, g) in graphs.iter().enumerate() {
        let vc = g.vertex_count();
        let (m, n) = (7, 12);
        let (pm, pn, pmn) = (rows(g, m), rows(g, n), rows(g, m + n));
        let mut mass = 0.0f64;
        let mut rev = 0.0f64;
        let mut semi = 0.0f64;
        for x in 0..vc {
            mass = mass.max((pmn[x].iter().sum::<f64>() - 1.0).abs());
            for y in 0..vc {
                let (a, b) = (g.measure(x) * pmn[x][y], g.measure(y) * pmn[y][x]);
                rev = rev.max((a - b).abs() / a.max(b).max(f64::MIN_POSITIVE));
                let composed: f64 = (0..vc).map(|z| pm[x][z] * pn[z][y]).sum();
                semi = semi.max((composed - pmn[x][y]).abs());
            }
        }
        if mass > 1e-12 {
            failures.push(format!("graph {gi}: mass error {mass:.1e}"));
        }
        if rev > 1e-12 {
            failures.push(format!("graph {gi}: reversibility error {rev:.1e}"));
        }
        if semi > 1e-12 {
            failures.push(format!("graph {gi}: semigroup error {semi:.1e}"));
        }
    }

    // Multiplying every weight by the same constant leaves every estimate
    // ratio unchanged.
    let g = perturb_weights(&lattice(2, 30, DEFAULT_VERTEX_CAP).unwrap(), 1.0, 2.0, 4).unwrap();
    let h = g.map_weights(|_, _, _| 7.5).unwrap();
    let x = g.center();
    let (cg, ch) = (ExitTimeCache::new(&g), ExitTimeCache::new(&h));
    let times = [4, 8, 16];
    let sweep = Sweep {
        pairs: shell_pairs(&g, x, &[0, 2, 4], 2).unwrap(),
        times: times.to_vec(),
    };
    let params = KernelParams::default();
    let pairs = [
        (
            verify_ldue(&g, &cg, &[x], &times).unwrap(),
            verify_ldue(&h, &ch, &[x], &times).unwrap(),
        ),
        (
            verify_le2(&g, &cg, &sweep, &params, &DEFAULT_GRID, Le2Volume::Symmetric).unwrap(),
            verify_le2(&h, &ch, &sweep, &params, &DEFAULT_GRID, Le2Volume::Symmetric).unwrap(),
        ),
    ];
    let mut scale = 0.0f64;
    for (a, b) in &pairs {
        assert_eq!(a.cells.len(), b.cells.len());
        for (p, q) in a.cells.iter().zip(&b.cells) {
            scale = scale.max((p.base - q.base).abs() / p.base.abs().max(1e-300));
            assert_eq!(p.kernel, q.kernel);
        }
    }
    if scale > 1e-12 {
        failures.push(format!("weight scaling changed a ratio by {scale:.1e}"));
    }

    let config = RunConfig::from_json(
        r#"{
            "graph": { "generate": { "family": "lattice", "dimension": 2, "size": 30,
                                     "weights": { "mode": "perturbed", "low": 1.0, "high": 2.0, "seed": 8 } } },
            "sites": { "rule": "random", "count": 4, "seed": 21 },
            "tasks": [
                { "task": "condition", "condition": "vc", "radii": [1, 2, 4] },
                { "task": "condition", "condition": "tc", "radii": [1, 2, 3] },
                { "task": "condition", "condition": "h", "radii": [1, 2] },
                { "task": "condition", "condition": "spmv", "radii": [2] },
                { "task": "condition", "condition": "phf", "radii": [1] },
                { "task": "estimate", "estimate": "ldue", "times": { "dyadic": { "lo": 2, "hi": 16 } } },
                { "task": "estimate", "estimate": "ue2", "times": { "list": [4, 8] },
                  "pairs": { "rule": "shells", "distances": [0, 3, 6], "per_shell": 2 } },
                { "task": "estimate", "estimate": "lef", "times": { "list": [4, 8] },
                  "pairs": { "rule": "shells", "distances": [0, 3], "per_shell": 2 }, "scale_radius": 6 }
            ]
        }"#,
    )
    .unwrap();
    let serial = run_with_workers(&config, 1).unwrap();
    let parallel = run_with_workers(&config, 8).unwrap();
    if !serial.succeeded() {
        failures.push(format!("run failures: {:?}", serial.failures().collect::<Vec<_>>()));
    }
    let diff = max_numeric_difference(
        &numeric_content(&serial).unwrap(),
        &numeric_content(&parallel).unwrap(),
    );
    match diff {
        Some(d) if d <= 1e-12 => {}
        other => failures.push(format!("1 vs 8 workers differ: {other:?}")),
    }

    let detail = if failures.is_empty() {
        format!(
            "conservation, reversibility, semigroup within 1e-12 on 2 graphs; weight scaling max change {scale:.1e}; \
             1 vs 8 workers max difference {:.1e} over {} cells",
            diff.unwrap_or(f64::NAN),
            serial.cell_count()
        )
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}

fn main() {
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let all: [(u32, &str, f64, fn() -> Verdict); 10] = [
        (1, "exit-time exactness (Z^1, L=64)", 5.0, exit_exactness),
        (2, "lattice exponents (Z^2, L=100)", 60.0, lattice_exponents),
        (3, "fractal exponents (gasket level 7)", 120.0, fractal_exponents),
        (4, "LDUE stability", 120.0, ldue_stability),
        (5, "diagonal lower bound", 120.0, diagonal_lower),
        (6, "kernel oracle (Z^1 profile)", 30.0, kernel_oracle),
        (7, "extremal dominance (H, MV, sPMV, PH_F)", 300.0, extremal_dominance),
        (8, "Gaussian shape (LEF cells on Z^2)", 120.0, gaussian),
        (9, "doubling failure (binary tree depth 14)", 10.0, doubling_failure),
        (10, "invariance suite", 120.0, invariance),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in all {
        if filter.is_some_and(|k| k != id) {
            continue;
        }
        if !criterion(id, name, budget, f) {
            failed += 1;
        }
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
