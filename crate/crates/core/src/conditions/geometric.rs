//! Volume and exit-time doubling and comparison, the uniformity constant of
//! the exit times, and `p_0`.

use rayon::prelude::*;

use super::{first_max, sweep, CellDetail, ConditionCell, ConditionId, ConditionReport};
use crate::error::{Error, Result};
use crate::exit_time::ExitTimes;
use crate::graph::{Vertex, WeightedGraph};

fn require_radius(radius: usize) -> Result<()> {
    if radius == 0 {
        Err(Error::InvalidRadius(0))
    } else {
        Ok(())
    }
}

/// Interior of `B(x, R)` after checking that `B(x, 2R)` is exact.
fn inner_ball(g: &WeightedGraph, x: Vertex, radius: usize) -> Result<Vec<Vertex>> {
    g.require_exact_ball(x, 2 * radius)?;
    let ball = g.ball(x, radius)?;
    Ok(ball.interior)
}

/// `V(x, 2R) / V(x, R)`.
pub fn vd_cell(g: &WeightedGraph, x: Vertex, radius: usize) -> Result<ConditionCell> {
    require_radius(radius)?;
    let value = g.volume(x, 2 * radius)? / g.volume(x, radius)?;
    Ok(ConditionCell {
        site: x,
        radius,
        value,
        detail: None,
    })
}

/// `max_{y ∈ B(x,R)} V(x, 2R) / V(y, R)`.
pub fn vc_cell(g: &WeightedGraph, x: Vertex, radius: usize) -> Result<ConditionCell> {
    require_radius(radius)?;
    let inner = inner_ball(g, x, radius)?;
    let top = g.volume(x, 2 * radius)?;
    let ratios: Vec<Option<(f64, Vertex)>> = inner
        .par_iter()
        .map(|&y| g.volume(y, radius).map(|v| Some((top / v, y))))
        .collect::<Result<_>>()?;
    let (value, y) = first_max(ratios).expect("ball interior is nonempty");
    Ok(ConditionCell {
        site: x,
        radius,
        value,
        detail: Some(CellDetail::Compared { other: y }),
    })
}

/// `E(x, 2R) / E(x, R)`.
pub fn td_cell<S: ExitTimes + ?Sized>(src: &S, x: Vertex, radius: usize) -> Result<ConditionCell> {
    require_radius(radius)?;
    let value = src.exit_time(x, 2 * radius)? / src.exit_time(x, radius)?;
    Ok(ConditionCell {
        site: x,
        radius,
        value,
        detail: None,
    })
}

/// `max_{y ∈ B(x,R)} E(x, 2R) / E(y, R)`.
pub fn tc_cell<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    x: Vertex,
    radius: usize,
) -> Result<ConditionCell> {
    require_radius(radius)?;
    let inner = inner_ball(g, x, radius)?;
    let top = src.exit_time(x, 2 * radius)?;
    let ratios: Vec<Option<(f64, Vertex)>> = inner
        .par_iter()
        .map(|&y| src.exit_time(y, radius).map(|e| Some((top / e, y))))
        .collect::<Result<_>>()?;
    let (value, y) = first_max(ratios).expect("ball interior is nonempty");
    Ok(ConditionCell {
        site: x,
        radius,
        value,
        detail: Some(CellDetail::Compared { other: y }),
    })
}

pub fn check_vd(g: &WeightedGraph, sites: &[Vertex], radii: &[usize]) -> Result<ConditionReport> {
    sweep(ConditionId::VD, sites, radii, |x, r| vd_cell(g, x, r))
}

pub fn check_vc(g: &WeightedGraph, sites: &[Vertex], radii: &[usize]) -> Result<ConditionReport> {
    sweep(ConditionId::VC, sites, radii, |x, r| vc_cell(g, x, r))
}

pub fn check_td<S: ExitTimes + ?Sized>(
    src: &S,
    sites: &[Vertex],
    radii: &[usize],
) -> Result<ConditionReport> {
    sweep(ConditionId::TD, sites, radii, |x, r| td_cell(src, x, r))
}

pub fn check_tc<S: ExitTimes + ?Sized>(
    g: &WeightedGraph,
    src: &S,
    sites: &[Vertex],
    radii: &[usize],
) -> Result<ConditionReport> {
    sweep(ConditionId::TC, sites, radii, |x, r| tc_cell(g, src, x, r))
}

/// One cell per radius: `max_x E(x, R) / min_x E(x, R)` over `sites`, with the
/// argmax as cell site and the argmin as `other`. A radius where some site
/// has no exact value is skipped as a whole.
pub fn check_e_uniform<S: ExitTimes + ?Sized>(
    src: &S,
    sites: &[Vertex],
    radii: &[usize],
) -> Result<ConditionReport> {
    if sites.is_empty() {
        return Err(Error::InvalidParameter("uniformity needs at least one site".into()));
    }
    let outcomes = radii
        .par_iter()
        .map(|&r| {
            let cell = (|| {
                require_radius(r)?;
                let values: Vec<f64> = sites
                    .iter()
                    .map(|&x| src.exit_time(x, r))
                    .collect::<Result<_>>()?;
                let (mut hi, mut lo) = (0, 0);
                for (i, &v) in values.iter().enumerate() {
                    if v > values[hi] {
                        hi = i;
                    }
                    if v < values[lo] {
                        lo = i;
                    }
                }
                Ok(ConditionCell {
                    site: sites[hi],
                    radius: r,
                    value: values[hi] / values[lo],
                    detail: Some(CellDetail::Compared { other: sites[lo] }),
                })
            })();
            ((sites[0], r), cell)
        })
        .collect();
    ConditionReport::assemble(ConditionId::E, sites, radii, outcomes)
}

/// `min_{y ~ x} P(x, y)` per site; the report constant is the min.
pub fn check_p0(g: &WeightedGraph, sites: &[Vertex]) -> Result<ConditionReport> {
    let outcomes = sites
        .iter()
        .map(|&x| {
            let cell = g.check_vertex(x).map(|_| {
                let (p, y) = g
                    .transitions(x)
                    .fold((f64::INFINITY, x), |acc, (y, p)| if p < acc.0 { (p, y) } else { acc });
                ConditionCell {
                    site: x,
                    radius: 1,
                    value: p,
                    detail: Some(CellDetail::Compared { other: y }),
                }
            });
            ((x, 1), cell)
        })
        .collect();
    ConditionReport::assemble(ConditionId::P0, sites, &[1], outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exit_time::{ExitTimeCache, UniformExitTimes};
    use crate::generators::{binary_tree, lattice, perturb_weights, sierpinski_gasket, DEFAULT_VERTEX_CAP};

    #[test]
    fn z1_volume_doubling_tends_to_two() {
        let g = lattice(1, 200, DEFAULT_VERTEX_CAP).unwrap();
        let c = g.center();
        for r in [1usize, 5, 20, 90] {
            let cell = vd_cell(&g, c, r).unwrap();
            let expected = (2.0 * (4 * r) as f64 - 2.0) / (2.0 * (2 * r) as f64 - 2.0);
            assert!((cell.value - expected).abs() < 1e-12, "R={r}");
        }
        assert!((vd_cell(&g, c, 90).unwrap().value - 2.0).abs() < 0.01);
    }

    #[test]
    fn single_radius_on_transitive_graph_is_one_plus_degree() {
        let g = lattice(2, 10, DEFAULT_VERTEX_CAP).unwrap();
        let cell = vd_cell(&g, g.center(), 1).unwrap();
        assert_eq!(cell.value, 5.0);
    }

    #[test]
    fn binary_tree_fails_doubling() {
        let g = binary_tree(14, DEFAULT_VERTEX_CAP).unwrap();
        let radii: Vec<usize> = (1..=10).collect();
        let r = check_vd(&g, &[0], &radii).unwrap();
        // Only R <= 7 keeps B(root, 2R) off the leaves.
        assert_eq!(r.cells.len(), 7);
        assert_eq!(r.domain.skipped.len(), 3);
        // Volume oracle: the root has measure 2 and each other vertex 3 except
        // leaves; inside the exact window every vertex is internal.
        let v = |r: usize| -> f64 {
            if r == 0 {
                return 0.0;
            }
            2.0 + 3.0 * ((1usize << r) - 2) as f64
        };
        for cell in &r.cells {
            let expected = v(2 * cell.radius) / v(cell.radius);
            assert!((cell.value - expected).abs() < 1e-9 * expected);
        }
        assert!(r.constant > 20.0);
    }

    #[test]
    fn comparison_dominates_doubling() {
        let g = lattice(2, 40, DEFAULT_VERTEX_CAP).unwrap();
        let g = perturb_weights(&g, 1.0, 4.0, 9).unwrap();
        let sites = [g.center(), g.center() + 3];
        let radii = [1, 2, 4, 8];
        let vd = check_vd(&g, &sites, &radii).unwrap();
        let vc = check_vc(&g, &sites, &radii).unwrap();
        assert!(vc.constant >= vd.constant);
        for (a, b) in vd.cells.iter().zip(&vc.cells) {
            assert!(b.value >= a.value);
        }
        let cache = ExitTimeCache::new(&g);
        let td = check_td(&cache, &sites, &radii).unwrap();
        let tc = check_tc(&g, &cache, &sites, &radii).unwrap();
        for (a, b) in td.cells.iter().zip(&tc.cells) {
            assert!(b.value >= a.value);
        }
    }

    #[test]
    fn z1_time_doubling_tends_to_four() {
        let src = UniformExitTimes::from_fn(64, |r| (r * r) as f64);
        let r = check_td(&src, &[0], &[1, 2, 4, 8, 16, 32]).unwrap();
        for cell in &r.cells {
            assert_eq!(cell.value, 4.0);
        }
    }

    #[test]
    fn gasket_time_doubling_is_near_five() {
        let g = sierpinski_gasket(6, DEFAULT_VERTEX_CAP).unwrap();
        let cache = ExitTimeCache::new(&g);
        let r = check_td(&cache, &[g.center()], &[4, 8, 16]).unwrap();
        for cell in &r.cells {
            assert!((cell.value - 5.0).abs() < 0.5, "R={} ratio {}", cell.radius, cell.value);
        }
    }

    #[test]
    fn uniformity_of_one_site_is_one() {
        let g = lattice(2, 20, DEFAULT_VERTEX_CAP).unwrap();
        let cache = ExitTimeCache::new(&g);
        let r = check_e_uniform(&cache, &[g.center()], &[2, 4, 8]).unwrap();
        assert_eq!(r.constant, 1.0);
    }

    #[test]
    fn perturbation_increases_nonuniformity() {
        let base = lattice(2, 30, DEFAULT_VERTEX_CAP).unwrap();
        let c = base.center();
        let sites: Vec<Vertex> = base.bfs(c, 3).into_iter().map(|(v, _)| v).collect();
        let radii = [2, 4, 8];
        let unit = ExitTimeCache::new(&base);
        let a = check_e_uniform(&unit, &sites, &radii).unwrap();
        let rough = perturb_weights(&base, 1.0, 10.0, 3).unwrap();
        let cache = ExitTimeCache::new(&rough);
        let b = check_e_uniform(&cache, &sites, &radii).unwrap();
        assert!(a.constant < 1.2);
        assert!(b.constant > a.constant);
    }

    #[test]
    fn p0_on_lattice_is_inverse_degree() {
        let g = lattice(2, 5, DEFAULT_VERTEX_CAP).unwrap();
        let r = check_p0(&g, &[g.center()]).unwrap();
        assert_eq!(r.constant, 0.25);
    }
}
