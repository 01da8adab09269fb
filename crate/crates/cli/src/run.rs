//! Executes a [`RunConfig`] against one graph.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use harnack_core::conditions::{
    check_e_uniform, check_harnack, check_mv, check_p0, check_phf, check_spmv, check_tc, check_td, check_vc,
    check_vd, ConditionId, ConditionReport,
};
use harnack_core::estimates::{
    fit_exponent, shell_pairs, verify_diag_lower, verify_ldue, verify_le2, verify_lue, verify_ndle,
    verify_semi_local, verify_ue2, EstimateId, EstimateReport, ExponentFit, FitQuantity, Sweep,
};
use harnack_core::exit_time::scale_function;
use harnack_core::rng::Lcg;
use harnack_core::{ExitTimeCache, ExitTimes, Vertex, WeightedGraph};

use crate::config::{KernelConfig, PairRule, RunConfig, SiteRule, Task};

/// Version of this tool; also the report schema version.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub generator: String,
    pub vertices: usize,
    pub edges: usize,
    pub center: Vertex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteExponents {
    pub site: Vertex,
    /// `(R, V(x, R))`.
    pub volumes: Vec<(usize, f64)>,
    /// `(R, E(x, R))`.
    pub exit_times: Vec<(usize, f64)>,
    /// `α`: slope of `log V` against `log R`.
    pub volume: ExponentFit,
    /// `β`: slope of `log E` against `log R`.
    pub exit_time: ExponentFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentsReport {
    pub radii: Vec<usize>,
    pub sites: Vec<SiteExponents>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "result")]
pub enum TaskOutcome {
    Condition(ConditionReport),
    Estimate(EstimateReport),
    Exponents(ExponentsReport),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub label: String,
    #[serde(flatten)]
    pub outcome: TaskOutcome,
}

impl TaskReport {
    /// Number of rows this task contributes to the CSV table.
    pub fn cell_count(&self) -> usize {
        match &self.outcome {
            TaskOutcome::Condition(r) => r.cells.len(),
            TaskOutcome::Estimate(r) => r.cells.len(),
            TaskOutcome::Exponents(r) => r.sites.iter().map(|s| s.volumes.len() + s.exit_times.len()).sum(),
            TaskOutcome::Failed(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub graph: GraphSummary,
    pub sites: Vec<Vertex>,
    pub tasks: Vec<TaskReport>,
    /// Wall-clock seconds per task, kept apart from the numeric content.
    pub timings: Vec<f64>,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.tasks.iter().filter_map(|t| match &t.outcome {
            TaskOutcome::Failed(msg) => Some((t.label.as_str(), msg.as_str())),
            _ => None,
        })
    }

    /// True when no task errored; `∞` constants are results, not errors.
    pub fn succeeded(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn cell_count(&self) -> usize {
        self.tasks.iter().map(TaskReport::cell_count).sum()
    }
}

/// Resolves the site rule. Random sites are drawn from the vertices whose
/// validity radius covers `margin`: repeated LCG index draws into the
/// remaining candidates, in vertex order, removing each pick.
pub fn select_sites(g: &WeightedGraph, rule: &SiteRule, margin: usize) -> Result<Vec<Vertex>> {
    match rule {
        SiteRule::Center => Ok(vec![g.center()]),
        SiteRule::Explicit { ids } => {
            for &x in ids {
                g.check_vertex(x)?;
            }
            Ok(ids.clone())
        }
        SiteRule::Random { count, seed } => {
            let Some(seed) = *seed else {
                bail!("random site selection needs a seed");
            };
            let mut candidates: Vec<Vertex> = (0..g.vertex_count())
                .filter(|&x| g.ball_is_exact(x, margin))
                .collect();
            if candidates.len() < *count {
                bail!(
                    "only {} vertices have validity radius >= {margin}, {count} requested",
                    candidates.len()
                );
            }
            let mut lcg = Lcg::new(seed);
            Ok((0..*count)
                .map(|_| candidates.remove(lcg.next_index(candidates.len())))
                .collect())
        }
    }
}

fn check_margin(g: &WeightedGraph, sites: &[Vertex], task: &Task, index: usize) -> Result<()> {
    let margin = task.margin();
    let mut referenced = sites.to_vec();
    if let Task::Estimate {
        pairs: PairRule::Explicit { pairs },
        ..
    } = task
    {
        referenced = pairs.iter().map(|&(x, _)| x).collect();
    }
    for x in referenced {
        g.check_vertex(x)?;
        if !g.ball_is_exact(x, margin) {
            let validity = g.validity_radius(x)?.unwrap_or(usize::MAX);
            bail!(
                "margin violation at site {x}: task {index} ({}) needs validity radius >= {margin}, \
                 site {x} has {validity}",
                task.label()
            );
        }
    }
    Ok(())
}

fn sweep_for(g: &WeightedGraph, sites: &[Vertex], pairs: &PairRule, times: Vec<usize>) -> Result<Sweep> {
    let pairs = match pairs {
        PairRule::Diagonal => sites.iter().map(|&x| (x, x)).collect(),
        PairRule::Shells { distances, per_shell } => {
            let mut all = Vec::new();
            for &x in sites {
                all.extend(shell_pairs(g, x, distances, *per_shell)?);
            }
            all
        }
        PairRule::Explicit { pairs } => pairs.clone(),
    };
    Ok(Sweep { pairs, times })
}

fn run_condition(
    g: &WeightedGraph,
    cache: &ExitTimeCache,
    sites: &[Vertex],
    kernel: &KernelConfig,
    condition: ConditionId,
    radii: &[usize],
) -> Result<ConditionReport> {
    let report = match condition {
        ConditionId::P0 => check_p0(g, sites)?,
        ConditionId::VD => check_vd(g, sites, radii)?,
        ConditionId::VC => check_vc(g, sites, radii)?,
        ConditionId::TD => check_td(cache, sites, radii)?,
        ConditionId::TC => check_tc(g, cache, sites, radii)?,
        ConditionId::E => check_e_uniform(cache, sites, radii)?,
        ConditionId::H => check_harnack(g, sites, radii)?,
        ConditionId::MV => check_mv(g, sites, radii)?,
        ConditionId::SPMV => check_spmv(g, cache, sites, radii, kernel.spmv_params())?,
        ConditionId::PHF => {
            let r_max = 4 * radii.iter().copied().max().unwrap_or(0);
            let sf = scale_function(g, sites, r_max)?;
            check_phf(g, &sf, sites, radii)?.with_note(format!("F from {} sites up to R = {r_max}", sites.len()))
        }
    };
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn run_estimate(
    g: &WeightedGraph,
    cache: &ExitTimeCache,
    sites: &[Vertex],
    kernel: &KernelConfig,
    estimate: EstimateId,
    sweep: Sweep,
    volume: harnack_core::estimates::Le2Volume,
    scale_radius: Option<usize>,
) -> Result<EstimateReport> {
    let params = kernel.kernel_params();
    let grid = &kernel.grid;
    let report = match estimate {
        EstimateId::LDUE => verify_ldue(g, cache, sites, &sweep.times)?,
        EstimateId::DLE => verify_diag_lower(g, cache, sites, &sweep.times)?,
        EstimateId::LUE => verify_lue(g, cache, &sweep, &params, grid)?,
        EstimateId::UE2 => verify_ue2(g, cache, &sweep, &params, grid)?,
        EstimateId::LE2 => verify_le2(g, cache, &sweep, &params, grid, volume)?,
        EstimateId::NDLE => verify_ndle(g, cache, &sweep)?,
        EstimateId::UEF | EstimateId::LEF => {
            let r_max = scale_radius.context("semi-local estimates need scale_radius")?;
            let sf = scale_function(g, sites, r_max)?;
            verify_semi_local(g, &sf, &sweep, kernel.q, grid, estimate)?
        }
    };
    Ok(report)
}

fn run_exponents(g: &WeightedGraph, cache: &ExitTimeCache, sites: &[Vertex], radii: &[usize]) -> Result<ExponentsReport> {
    let per_site = sites
        .par_iter()
        .map(|&x| {
            let volumes: Vec<(usize, f64)> = radii
                .iter()
                .map(|&r| Ok((r, g.volume(x, r)?)))
                .collect::<Result<_>>()?;
            let exit_times: Vec<(usize, f64)> = radii
                .iter()
                .map(|&r| Ok((r, cache.exit_time(x, r)?)))
                .collect::<Result<_>>()?;
            let as_f = |s: &[(usize, f64)]| s.iter().map(|&(r, v)| (r as f64, v)).collect::<Vec<_>>();
            Ok(SiteExponents {
                site: x,
                volume: fit_exponent(FitQuantity::Volume, &as_f(&volumes))?,
                exit_time: fit_exponent(FitQuantity::ExitTime, &as_f(&exit_times))?,
                volumes,
                exit_times,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExponentsReport {
        radii: radii.to_vec(),
        sites: per_site,
    })
}

fn run_task(g: &WeightedGraph, cache: &ExitTimeCache, sites: &[Vertex], config: &RunConfig, task: &Task) -> Result<TaskOutcome> {
    Ok(match task {
        Task::Condition { condition, radii } => {
            TaskOutcome::Condition(run_condition(g, cache, sites, &config.kernel, *condition, radii)?)
        }
        Task::Estimate {
            estimate,
            times,
            pairs,
            volume,
            scale_radius,
        } => {
            let sweep = sweep_for(g, sites, pairs, times.values())?;
            TaskOutcome::Estimate(run_estimate(
                g,
                cache,
                sites,
                &config.kernel,
                *estimate,
                sweep,
                *volume,
                *scale_radius,
            )?)
        }
        Task::Exponents { radii } => TaskOutcome::Exponents(run_exponents(g, cache, sites, radii)?),
    })
}

/// Validates the config, checks every site against every task's margin and
/// runs the tasks. Config, graph and margin problems are errors; a task
/// that fails on its own is recorded as [`TaskOutcome::Failed`].
pub fn run_experiment(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let g = config.graph.load(config.vertex_cap)?;
    run_on_graph(config, &g)
}

/// [`run_experiment`] on an already loaded graph.
pub fn run_on_graph(config: &RunConfig, g: &WeightedGraph) -> Result<RunReport> {
    config.validate()?;
    let sites = select_sites(g, &config.sites, config.margin()).context("site selection")?;
    for (i, task) in config.tasks.iter().enumerate() {
        check_margin(g, &sites, task, i)?;
    }
    let cache = ExitTimeCache::new(g);
    let results: Vec<(TaskReport, f64)> = config
        .tasks
        .par_iter()
        .map(|task| {
            let start = Instant::now();
            let outcome = run_task(g, &cache, &sites, config, task)
                .unwrap_or_else(|e| TaskOutcome::Failed(format!("{e:#}")));
            let report = TaskReport {
                label: task.label(),
                outcome,
            };
            (report, start.elapsed().as_secs_f64())
        })
        .collect();
    let (tasks, timings) = results.into_iter().unzip();
    Ok(RunReport {
        schema_version: TOOL_VERSION.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        config: config.clone(),
        graph: GraphSummary {
            generator: g.meta().generator.clone(),
            vertices: g.vertex_count(),
            edges: g.edge_count(),
            center: g.center(),
        },
        sites,
        tasks,
        timings,
    })
}

/// Runs on a dedicated pool of `workers` threads.
pub fn run_with_workers(config: &RunConfig, workers: usize) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    pool.install(|| run_experiment(config))
}
