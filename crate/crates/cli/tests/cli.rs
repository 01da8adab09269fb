use std::path::Path;
use std::process::Command;

use harnack_cli::report::{from_json, to_json, write_csv};
use harnack_cli::{
    emit_all, max_numeric_difference, numeric_content, run_experiment, run_with_workers, select_sites, GraphSource,
    OutputConfig, RunConfig, SiteRule, TaskOutcome, TOOL_VERSION,
};
use harnack_core::generators::{lattice, DEFAULT_VERTEX_CAP};

fn small_config() -> RunConfig {
    RunConfig::from_json(
        r#"{
            "graph": { "generate": { "family": "lattice", "dimension": 2, "size": 24,
                                     "weights": { "mode": "perturbed", "low": 1.0, "high": 2.0, "seed": 3 } } },
            "sites": { "rule": "random", "count": 3, "seed": 11 },
            "tasks": [
                { "task": "condition", "condition": "vc", "radii": [1, 2, 4] },
                { "task": "condition", "condition": "tc", "radii": [1, 2] },
                { "task": "condition", "condition": "h", "radii": [1, 2] },
                { "task": "condition", "condition": "spmv", "radii": [2] },
                { "task": "condition", "condition": "p0" },
                { "task": "estimate", "estimate": "ldue", "times": { "list": [4, 8, 16] } },
                { "task": "estimate", "estimate": "le2", "times": { "list": [4, 8] },
                  "pairs": { "rule": "shells", "distances": [0, 2, 4], "per_shell": 2 } },
                { "task": "exponents", "radii": [2, 3, 4, 5] }
            ]
        }"#,
    )
    .unwrap()
}

#[test]
fn empty_task_list_gives_an_empty_report() {
    let config = RunConfig::from_json(r#"{ "graph": { "generate": { "family": "path", "size": 4 } } }"#).unwrap();
    let report = run_experiment(&config).unwrap();
    assert!(report.tasks.is_empty());
    assert!(report.succeeded());
    assert_eq!(report.cell_count(), 0);
}

#[test]
fn radius_beyond_validity_is_a_margin_error_naming_the_site() {
    let config = RunConfig::from_json(
        r#"{ "graph": { "generate": { "family": "lattice", "dimension": 1, "size": 10 } },
             "sites": { "rule": "explicit", "ids": [12] },
             "tasks": [ { "task": "condition", "condition": "vd", "radii": [5] } ] }"#,
    )
    .unwrap();
    // Vertex 12 is at coordinate 2, eight steps from the frontier.
    let err = format!("{:#}", run_experiment(&config).unwrap_err());
    assert!(err.contains("site 12"), "{err}");
    assert!(err.contains("margin"), "{err}");
}

#[test]
fn schema_violations_are_rejected() {
    assert!(RunConfig::from_json(r#"{ "graph": { "generate": { "family": "path", "size": 4 } }, "extra": 1 }"#).is_err());
    let unseeded = RunConfig::from_json(
        r#"{ "graph": { "generate": { "family": "path", "size": 4 } },
             "sites": { "rule": "random", "count": 1 } }"#,
    )
    .unwrap();
    assert!(format!("{:#}", run_experiment(&unseeded).unwrap_err()).contains("seed"));
}

#[test]
fn report_round_trips_through_json() {
    let report = run_experiment(&small_config()).unwrap();
    assert!(report.succeeded(), "{:?}", report.failures().collect::<Vec<_>>());
    let back = from_json(&to_json(&report).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn schema_version_matches_tool_version() {
    let report = run_experiment(&small_config()).unwrap();
    assert_eq!(report.schema_version, TOOL_VERSION);
    assert_eq!(report.tool_version, env!("CARGO_PKG_VERSION"));
    let v: serde_json::Value = serde_json::from_str(&to_json(&report).unwrap()).unwrap();
    assert_eq!(v["schema_version"], TOOL_VERSION);
}

#[test]
fn csv_has_one_row_per_cell() {
    let report = run_experiment(&small_config()).unwrap();
    let mut buf = Vec::new();
    write_csv(&report, &mut buf).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(reader.records().count(), report.cell_count());
    assert!(report.cell_count() > 20);
}

#[test]
fn reruns_are_deterministic() {
    let a = numeric_content(&run_experiment(&small_config()).unwrap()).unwrap();
    let b = numeric_content(&run_experiment(&small_config()).unwrap()).unwrap();
    assert!(max_numeric_difference(&a, &b).unwrap() <= 1e-9);
}

#[test]
fn one_worker_and_many_agree() {
    let serial = numeric_content(&run_with_workers(&small_config(), 1).unwrap()).unwrap();
    let parallel = numeric_content(&run_with_workers(&small_config(), 4).unwrap()).unwrap();
    assert!(max_numeric_difference(&serial, &parallel).unwrap() <= 1e-12);
}

#[test]
fn random_sites_respect_the_margin_and_the_seed() {
    let g = lattice(2, 20, DEFAULT_VERTEX_CAP).unwrap();
    let rule = SiteRule::Random {
        count: 5,
        seed: Some(99),
    };
    let sites = select_sites(&g, &rule, 12).unwrap();
    assert_eq!(sites, select_sites(&g, &rule, 12).unwrap());
    let mut unique = sites.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(unique.len(), 5);
    for x in sites {
        assert!(g.validity_radius(x).unwrap().unwrap() >= 12);
    }
    assert!(select_sites(&g, &rule, 21).is_err());
}

#[test]
fn infinite_constants_survive_json_and_csv() {
    let mut report = run_experiment(&small_config()).unwrap();
    let TaskOutcome::Condition(r) = &mut report.tasks[0].outcome else {
        panic!("expected a condition report");
    };
    r.cells[0].value = f64::INFINITY;
    r.constant = f64::INFINITY;
    let text = to_json(&report).unwrap();
    assert!(text.contains("\"inf\""));
    assert_eq!(from_json(&text).unwrap(), report);
    let mut buf = Vec::new();
    write_csv(&report, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().lines().nth(1).unwrap().contains(",inf,"));
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn binary_runs_a_config_and_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    write(
        &config,
        r#"{ "graph": { "generate": { "family": "lattice", "dimension": 2, "size": 12 } },
             "tasks": [ { "task": "condition", "condition": "vd", "radii": [1, 2, 3] },
                        { "task": "estimate", "estimate": "ldue", "times": { "dyadic": { "lo": 2, "hi": 16 } } } ],
             "output": { "dir": "ignored" } }"#,
    );
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_harnack"))
        .args(["--workers", "2", "run", "--config"])
        .arg(&config)
        .env("HARNACK_OUT_DIR", &out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = harnack_cli::load_report(&out.join("report.json")).unwrap();
    let rows = csv::Reader::from_path(out.join("cells.csv")).unwrap().records().count();
    assert_eq!(rows, report.cell_count());
    assert_eq!(rows, 3 + 4);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // A triangle without frontier: every ball of radius >= 2 covers it, so
    // the exit-time doubling sweep has no admissible cell and the task fails.
    let graph = dir.path().join("tri.graph");
    write(&graph, "# center: 0\n0 1 1\n1 2 1\n0 2 1\n");
    let bin = env!("CARGO_BIN_EXE_harnack");
    let failed = Command::new(bin)
        .args(["check", "--condition", "td", "--radii", "1", "--graph"])
        .arg(&graph)
        .output()
        .unwrap();
    assert_eq!(failed.status.code(), Some(1), "{}", String::from_utf8_lossy(&failed.stderr));

    let z1 = dir.path().join("z1.graph");
    let made = Command::new(bin)
        .args(["generate", "--family", "lattice", "--dimension", "1", "--size", "8", "--out"])
        .arg(&z1)
        .status()
        .unwrap();
    assert!(made.success());
    let margin = Command::new(bin)
        .args(["check", "--condition", "h", "--radii", "5", "--graph"])
        .arg(&z1)
        .output()
        .unwrap();
    assert_eq!(margin.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&margin.stderr).contains("site 8"));

    let exit = Command::new(bin)
        .args(["exit", "--rmax", "4", "--graph"])
        .arg(&z1)
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&exit.stdout), "R,E\n1,1\n2,4\n3,9\n4,16\n");
}

#[test]
fn emit_all_honours_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        graph: GraphSource::Generate(serde_json::from_str(r#"{ "family": "path", "size": 6 }"#).unwrap()),
        vertex_cap: DEFAULT_VERTEX_CAP,
        sites: SiteRule::Center,
        kernel: Default::default(),
        tasks: vec![serde_json::from_str(r#"{ "task": "condition", "condition": "vd", "radii": [1, 2] }"#).unwrap()],
        output: OutputConfig {
            dir: Some(dir.path().join("nested")),
            ..Default::default()
        },
    };
    let report = run_experiment(&config).unwrap();
    if std::env::var_os(harnack_cli::OUT_DIR_ENV).is_none() {
        let (json, csv) = emit_all(&report, &config.output).unwrap();
        assert!(json.starts_with(dir.path()) && json.exists() && csv.exists());
    }
}
