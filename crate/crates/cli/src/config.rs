//! Run configuration: which graph, which sites, which tasks, where to write.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use harnack_core::conditions::{ConditionId, SpmvParams};
use harnack_core::estimates::{dyadic_times, EstimateId, Le2Volume, DEFAULT_GRID};
use harnack_core::generators::{GeneratorSpec, DEFAULT_VERTEX_CAP};
use harnack_core::kernels::KernelParams;
use harnack_core::{Vertex, WeightedGraph};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "HARNACK_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSource,
    #[serde(default = "default_cap")]
    pub vertex_cap: usize,
    #[serde(default)]
    pub sites: SiteRule,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_cap() -> usize {
    DEFAULT_VERTEX_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    /// A graph file; relative paths resolve against the config file.
    File(PathBuf),
    Generate(GeneratorSpec),
}

impl GraphSource {
    pub fn load(&self, cap: usize) -> Result<WeightedGraph> {
        match self {
            GraphSource::File(path) => {
                let file = std::fs::File::open(path)
                    .with_context(|| format!("opening graph file {}", path.display()))?;
                harnack_core::format::read_graph(std::io::BufReader::new(file))
                    .with_context(|| format!("reading graph file {}", path.display()))
            }
            GraphSource::Generate(spec) => Ok(spec.build(cap)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SiteRule {
    #[default]
    Center,
    Explicit {
        ids: Vec<Vertex>,
    },
    /// `count` distinct vertices whose validity radius covers every task's
    /// margin, drawn with the documented LCG.
    Random {
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "default_q")]
    pub q: f64,
    /// Chain constant `C` of `κ_C`.
    #[serde(default = "default_chain")]
    pub chain: usize,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    /// Constants at which two-constant estimates are tabulated.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
}

fn default_q() -> f64 {
    KernelParams::default().q
}
fn default_chain() -> usize {
    KernelParams::default().chain
}
fn default_c1() -> f64 {
    SpmvParams::default().c1
}
fn default_c2() -> f64 {
    SpmvParams::default().c2
}
fn default_grid() -> Vec<f64> {
    DEFAULT_GRID.to_vec()
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            q: default_q(),
            chain: default_chain(),
            c1: default_c1(),
            c2: default_c2(),
            grid: default_grid(),
        }
    }
}

impl KernelConfig {
    pub fn kernel_params(&self) -> KernelParams {
        KernelParams {
            q: self.q,
            chain: self.chain,
        }
    }

    pub fn spmv_params(&self) -> SpmvParams {
        SpmvParams {
            c1: self.c1,
            c2: self.c2,
        }
    }

    fn validate(&self) -> Result<()> {
        self.kernel_params().validate()?;
        self.spmv_params().validate()?;
        if let Some(c) = self.grid.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            bail!("constant grid entries must be finite and nonnegative, got {c}");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for the report files; `HARNACK_OUT_DIR` takes precedence.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_json")]
    pub json: String,
    #[serde(default = "default_csv")]
    pub csv: String,
}

fn default_json() -> String {
    "report.json".into()
}
fn default_csv() -> String {
    "cells.csv".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            json: default_json(),
            csv: default_csv(),
        }
    }
}

impl OutputConfig {
    /// The output directory after the environment override.
    pub fn resolved_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.dir.clone().unwrap_or_else(|| PathBuf::from(".")),
        }
    }
}

/// Sweep times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Times {
    List(Vec<usize>),
    /// Powers of two in `[lo, hi]`.
    Dyadic { lo: usize, hi: usize },
}

impl Times {
    pub fn values(&self) -> Vec<usize> {
        match self {
            Times::List(v) => v.clone(),
            Times::Dyadic { lo, hi } => dyadic_times(*lo, *hi),
        }
    }
}

/// Off-diagonal pairs, built around each selected site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum PairRule {
    #[default]
    Diagonal,
    /// Up to `per_shell` vertices at each listed distance from the site.
    Shells {
        distances: Vec<usize>,
        per_shell: usize,
    },
    Explicit {
        pairs: Vec<(Vertex, Vertex)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum Task {
    Condition {
        condition: ConditionId,
        #[serde(default)]
        radii: Vec<usize>,
    },
    Estimate {
        estimate: EstimateId,
        times: Times,
        #[serde(default)]
        pairs: PairRule,
        #[serde(default)]
        volume: Le2Volume,
        /// Largest radius of the scale function `F` (semi-local estimates).
        #[serde(default)]
        scale_radius: Option<usize>,
    },
    /// Log-log fits of `V(x, R)` and `E(x, R)` over the radii.
    Exponents { radii: Vec<usize> },
}

impl Task {
    pub fn label(&self) -> String {
        match self {
            Task::Condition { condition, .. } => condition.name().to_string(),
            Task::Estimate { estimate, .. } => estimate.name().to_string(),
            Task::Exponents { .. } => "exponents".to_string(),
        }
    }

    /// Radius of the ball around a site that must lie inside the exact
    /// window for this task.
    pub fn margin(&self) -> usize {
        match self {
            Task::Condition { condition, radii } => {
                let r = radii.iter().copied().max().unwrap_or(0);
                match condition {
                    ConditionId::P0 => 0,
                    ConditionId::E | ConditionId::MV => r,
                    ConditionId::VD | ConditionId::VC | ConditionId::TD | ConditionId::TC | ConditionId::H => 2 * r,
                    ConditionId::SPMV => (3 * r).saturating_sub(1),
                    // The scale function at 4R is taken over the sites.
                    ConditionId::PHF => 4 * r,
                }
            }
            Task::Estimate {
                estimate,
                times,
                pairs,
                scale_radius,
                ..
            } => {
                let n = times.values().into_iter().max().unwrap_or(0);
                let reach = match pairs {
                    PairRule::Shells { distances, .. } => distances.iter().copied().max().unwrap_or(0),
                    _ => 0,
                };
                // Heat rows are exact while n < validity, return
                // probabilities while n/2 < validity (DLE runs to 2n).
                let heat = match estimate {
                    EstimateId::LDUE => n / 2 + 1,
                    _ => n + 1,
                };
                // Chained kernels look at balls of radius d around y.
                let chained = matches!(estimate, EstimateId::LUE | EstimateId::UE2 | EstimateId::LE2);
                heat.max(if chained { 2 * reach } else { reach })
                    .max(scale_radius.unwrap_or(0))
            }
            Task::Exponents { radii } => radii.iter().copied().max().unwrap_or(0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Task::Condition { condition, radii } => {
                if *condition != ConditionId::P0 && radii.is_empty() {
                    bail!("condition {condition} needs at least one radius");
                }
                if radii.contains(&0) {
                    bail!("radii must be >= 1");
                }
            }
            Task::Estimate {
                estimate,
                times,
                pairs,
                scale_radius,
                ..
            } => {
                if matches!(estimate, EstimateId::LDUE | EstimateId::DLE) && *pairs != PairRule::Diagonal {
                    bail!("diagonal estimate {estimate} takes diagonal pairs only");
                }
                if times.values().is_empty() {
                    bail!("estimate {estimate} has an empty time grid");
                }
                if matches!(estimate, EstimateId::UEF | EstimateId::LEF) && scale_radius.is_none() {
                    bail!("semi-local estimate {estimate} needs scale_radius");
                }
            }
            Task::Exponents { radii } => {
                if radii.len() < 4 || radii.contains(&0) {
                    bail!("exponent fits need at least four radii, all >= 1");
                }
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("config schema violation")
    }

    /// Reads a config file; a relative graph path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        if let GraphSource::File(file) = &mut config.graph {
            if file.is_relative() {
                if let Some(parent) = path.parent() {
                    *file = parent.join(&*file);
                }
            }
        }
        Ok(config)
    }

    /// Checks everything that does not need the graph.
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        match &self.sites {
            SiteRule::Explicit { ids } if ids.is_empty() => bail!("explicit site list is empty"),
            SiteRule::Random { count: 0, .. } => bail!("random site selection with count 0"),
            SiteRule::Random { seed: None, .. } => {
                bail!("random site selection needs a seed (in the config or via --seed)")
            }
            _ => {}
        }
        for (i, task) in self.tasks.iter().enumerate() {
            task.validate().with_context(|| format!("task {i} ({})", task.label()))?;
        }
        Ok(())
    }

    /// Largest margin over all tasks.
    pub fn margin(&self) -> usize {
        self.tasks.iter().map(Task::margin).max().unwrap_or(0)
    }

    /// Sets the seed of a random site rule.
    pub fn override_seed(&mut self, seed: u64) {
        if let SiteRule::Random { seed: s, .. } = &mut self.sites {
            *s = Some(seed);
        }
    }
}
