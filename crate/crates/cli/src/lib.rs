//! Experiment runner: configs in, JSON reports and CSV tables out.

pub mod config;
pub mod report;
pub mod run;

pub use config::{GraphSource, KernelConfig, OutputConfig, PairRule, RunConfig, SiteRule, Task, Times, OUT_DIR_ENV};
pub use report::{emit_all, emit_report, load_report, max_numeric_difference, numeric_content, Format};
pub use run::{run_experiment, run_on_graph, run_with_workers, select_sites, RunReport, TaskOutcome, TaskReport, TOOL_VERSION};
