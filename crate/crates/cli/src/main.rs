use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use harnack_cli::{
    emit_all, emit_report, run_on_graph, Format, GraphSource, KernelConfig, OutputConfig, PairRule, RunConfig,
    RunReport, SiteRule, Task, Times, OUT_DIR_ENV,
};
use harnack_core::conditions::ConditionId;
use harnack_core::estimates::{EstimateId, Le2Volume};
use harnack_core::exit_time::{exit_profile, scale_function};
use harnack_core::format::{read_graph, write_graph};
use harnack_core::generators::{Family, GeneratorSpec, WeightMode, DEFAULT_VERTEX_CAP};
use harnack_core::heat::{diagonal_series, HeatPropagator, Mode, Window};
use harnack_core::kernels::{self, k_scan, KernelParams};
use harnack_core::{ExitTimeCache, Vertex, WeightedGraph};

#[derive(Parser)]
#[command(name = "harnack", version, about = "Exact heat kernels, exit times and Harnack-type checks on weighted graphs")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for perturbations and random site selection.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Lattice,
    SierpinskiGasket,
    VicsekTree,
    BinaryTree,
    Path,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelWhich {
    Local,
    Global,
    KappaC,
    Kappa,
    Ell,
    Delta,
    Nu,
}

#[derive(Clone, Copy, ValueEnum)]
enum VolumeArg {
    Single,
    Symmetric,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus graph and write it in the text format.
    Generate {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Halfwidth, level or depth.
        #[arg(long)]
        size: usize,
        /// Lattice dimension.
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        /// Multiply weights by factors in `a,b` (needs --seed).
        #[arg(long)]
        perturb: Option<String>,
        #[arg(long, default_value_t = DEFAULT_VERTEX_CAP)]
        cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write `(n, y, P_n(x, y))` rows, or `(n, P_n(x, x))` with --diagonal.
    Heat {
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to the graph's center.
        #[arg(long)]
        origin: Option<Vertex>,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        diagonal: bool,
        /// Compute past the exactness window on the finite graph.
        #[arg(long)]
        override_window: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `(R, E(x, R))` for `R = 1..=rmax`.
    Exit {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        site: Option<Vertex>,
        #[arg(long)]
        rmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one condition over sites and radii.
    Check {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        condition: ConditionId,
        /// `center`, `random:K` or a comma list of ids.
        #[arg(long, default_value = "center")]
        sites: String,
        /// Comma list, or `a..b` inclusive.
        #[arg(long, default_value = "")]
        radii: String,
        #[arg(long)]
        c1: Option<f64>,
        #[arg(long)]
        c2: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate a kernel function and print the witness k-scan.
    Kernel {
        #[arg(long)]
        graph: PathBuf,
        /// `x,y`.
        #[arg(long)]
        pair: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 3)]
        chain: usize,
        #[arg(long, value_enum)]
        which: KernelWhich,
        /// Radius for `local` and `global`; defaults to d(x, y).
        #[arg(long)]
        radius: Option<usize>,
        /// Largest radius of F for `global`.
        #[arg(long)]
        scale_radius: Option<usize>,
    },
    /// Verify one heat-kernel estimate over a sweep.
    Estimate {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        which: EstimateId,
        /// Take sites, kernel parameters and the sweep from this run config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "center")]
        sites: String,
        /// Comma list, or `a..b` for the powers of two in between.
        #[arg(long, default_value = "16..1024")]
        times: String,
        /// Pair distances (off-diagonal estimates); empty for diagonal pairs.
        #[arg(long, default_value = "")]
        distances: String,
        #[arg(long, default_value_t = 4)]
        per_shell: usize,
        #[arg(long)]
        scale_radius: Option<usize>,
        #[arg(long, value_enum, default_value = "single")]
        volume: VolumeArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run every task of a config and write the JSON report and CSV table.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (HARNACK_OUT_DIR takes precedence).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load_graph(path: &Path) -> Result<WeightedGraph> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_graph(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn parse_list(text: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("bad integer {t:?}")))
        .collect()
}

fn parse_times(text: &str) -> Result<Times> {
    Ok(match text.split_once("..") {
        Some((a, b)) => Times::Dyadic {
            lo: a.trim().parse()?,
            hi: b.trim().parse()?,
        },
        None => Times::List(parse_list(text)?),
    })
}

fn parse_sites(text: &str, seed: Option<u64>) -> Result<SiteRule> {
    Ok(match text.trim() {
        "center" => SiteRule::Center,
        t => match t.strip_prefix("random:") {
            Some(k) => SiteRule::Random {
                count: k.parse()?,
                seed,
            },
            None => SiteRule::Explicit { ids: parse_list(t)? },
        },
    })
}

fn parse_range(text: &str) -> Result<(f64, f64)> {
    let (a, b) = text.split_once(',').context("expected `a,b`")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

/// Runs a single-task config on a loaded graph and writes the outputs.
fn run_single(g: &WeightedGraph, config: RunConfig, out: &Option<PathBuf>, csv: &Option<PathBuf>) -> Result<bool> {
    let report = run_on_graph(&config, g)?;
    match out {
        Some(p) => emit_report(&report, Format::Json, p)?,
        None => println!("{}", harnack_cli::report::to_json(&report)?),
    }
    if let Some(p) = csv {
        emit_report(&report, Format::Csv, p)?;
    }
    Ok(report_failures(&report))
}

fn report_failures(report: &RunReport) -> bool {
    for (label, msg) in report.failures() {
        eprintln!("task {label} failed: {msg}");
    }
    report.succeeded()
}

fn generate(
    family: FamilyArg,
    size: usize,
    dimension: usize,
    perturb: Option<String>,
    cap: usize,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let family = match family {
        FamilyArg::Lattice => Family::Lattice { dimension },
        FamilyArg::SierpinskiGasket => Family::SierpinskiGasket,
        FamilyArg::VicsekTree => Family::VicsekTree,
        FamilyArg::BinaryTree => Family::BinaryTree,
        FamilyArg::Path => Family::Path,
    };
    let weights = match perturb {
        None => WeightMode::Unit,
        Some(range) => {
            let (low, high) = parse_range(&range)?;
            let seed = seed.context("--perturb needs --seed")?;
            WeightMode::Perturbed { low, high, seed }
        }
    };
    let g = GeneratorSpec { family, size, weights }.build(cap)?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_graph(&g, BufWriter::new(file))?;
    eprintln!("wrote {} vertices, {} edges to {}", g.vertex_count(), g.edge_count(), out.display());
    Ok(())
}

fn heat(g: &WeightedGraph, origin: Vertex, steps: usize, diagonal: bool, window: Window, out: &Option<PathBuf>) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink(out)?);
    if diagonal {
        if window == Window::Override {
            bail!("--diagonal always enforces the exactness window");
        }
        w.write_record(["n", "p_diag"])?;
        for (n, p) in diagonal_series(g, origin, steps)? {
            w.write_record([n.to_string(), p.to_string()])?;
        }
    } else {
        w.write_record(["n", "y", "P_n"])?;
        let mut prop = HeatPropagator::new(g, origin, steps, Mode::Row, window)?;
        loop {
            let state = prop.state();
            for &(y, m) in &state.mass {
                w.write_record([state.time.to_string(), y.to_string(), m.to_string()])?;
            }
            if prop.time() == steps {
                break;
            }
            prop.step();
        }
    }
    w.flush()?;
    Ok(())
}

fn exit(g: &WeightedGraph, site: Vertex, rmax: usize, out: &Option<PathBuf>) -> Result<()> {
    let profile = exit_profile(g, site, rmax)?;
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(["R", "E"])?;
    for r in 1..=rmax {
        let e = profile.value(r).context("profile shorter than rmax")?;
        w.write_record([r.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn kernel(
    g: &WeightedGraph,
    pair: &str,
    n: usize,
    q: f64,
    chain: usize,
    which: KernelWhich,
    radius: Option<usize>,
    scale_radius: Option<usize>,
) -> Result<()> {
    let (x, y) = {
        let ids = parse_list(pair)?;
        let [x, y] = ids[..] else {
            bail!("--pair expects `x,y`");
        };
        (x, y)
    };
    let params = KernelParams { q, chain };
    params.validate()?;
    let cache = ExitTimeCache::new(g);
    let d = g.distance(x, y)?;
    let r = radius.unwrap_or(d);
    // (value, witness, scan arguments at the witness)
    let (value, scan) = match which {
        KernelWhich::Local => (
            json!(kernels::local_kernel(&cache, x, n, r, q)?),
            Some((x, n, r)),
        ),
        KernelWhich::Global => {
            let r_max = scale_radius.context("global kernel needs --scale-radius")?;
            let sf = scale_function(g, &[x], r_max)?;
            (json!(kernels::global_kernel(&sf, n, r, q)?), None)
        }
        KernelWhich::KappaC => {
            let v = kernels::kappa_c(g, &cache, x, y, n, &params)?;
            (json!(v), (v.value > 0).then_some((v.witness, chain * n, d / chain)))
        }
        KernelWhich::Kappa => {
            let v = kernels::kappa(g, &cache, x, y, n, &params)?;
            (json!(v), (v.value > 0).then_some((v.witness, 3 * n, d / 3)))
        }
        KernelWhich::Ell => {
            let v = kernels::ell(g, &cache, x, y, n, &params)?;
            (json!(v), Some((v.witness, n, d)))
        }
        KernelWhich::Delta => {
            let set = kernels::chain_set(g, x, y)?;
            (json!(kernels::delta(&cache, &set, n)?), None)
        }
        KernelWhich::Nu => (json!(kernels::nu(g, &cache, x, y, n, &params)?), None),
    };
    let scan = match scan {
        Some((z, m, rr)) => json!({
            "site": z,
            "n": m,
            "radius": rr,
            "rows": k_scan(&cache, z, m, rr, q)?,
        }),
        None => serde_json::Value::Null,
    };
    let out = json!({ "x": x, "y": y, "distance": d, "n": n, "q": q, "chain": chain, "value": value, "scan": scan });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring workers")?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Generate {
            family,
            size,
            dimension,
            perturb,
            cap,
            out,
        } => generate(family, size, dimension, perturb, cap, seed, &out).map(|_| true),
        Command::Heat {
            graph,
            origin,
            steps,
            diagonal,
            override_window,
            out,
        } => {
            let g = load_graph(&graph)?;
            let window = if override_window { Window::Override } else { Window::Enforce };
            heat(&g, origin.unwrap_or(g.center()), steps, diagonal, window, &out).map(|_| true)
        }
        Command::Exit { graph, site, rmax, out } => {
            let g = load_graph(&graph)?;
            exit(&g, site.unwrap_or(g.center()), rmax, &out).map(|_| true)
        }
        Command::Check {
            graph,
            condition,
            sites,
            radii,
            c1,
            c2,
            out,
            csv,
        } => {
            let g = load_graph(&graph)?;
            let mut kernel = KernelConfig::default();
            kernel.c1 = c1.unwrap_or(kernel.c1);
            kernel.c2 = c2.unwrap_or(kernel.c2);
            let config = RunConfig {
                graph: GraphSource::File(graph),
                vertex_cap: DEFAULT_VERTEX_CAP,
                sites: parse_sites(&sites, seed)?,
                kernel,
                tasks: vec![Task::Condition {
                    condition,
                    radii: parse_list(&radii)?,
                }],
                output: OutputConfig::default(),
            };
            run_single(&g, config, &out, &csv)
        }
        Command::Kernel {
            graph,
            pair,
            n,
            q,
            chain,
            which,
            radius,
            scale_radius,
        } => {
            let g = load_graph(&graph)?;
            kernel(&g, &pair, n, q, chain, which, radius, scale_radius).map(|_| true)
        }
        Command::Estimate {
            graph,
            which,
            config,
            sites,
            times,
            distances,
            per_shell,
            scale_radius,
            volume,
            out,
            csv,
        } => {
            let mut run = match &config {
                Some(path) => {
                    let mut c = RunConfig::load(path)?;
                    let task = c
                        .tasks
                        .iter()
                        .find(|t| matches!(t, Task::Estimate { estimate, .. } if *estimate == which))
                        .cloned()
                        .with_context(|| format!("{} has no {which} task", path.display()))?;
                    c.tasks = vec![task];
                    c
                }
                None => {
                    let distances = parse_list(&distances)?;
                    let pairs = if distances.is_empty() {
                        PairRule::Diagonal
                    } else {
                        PairRule::Shells { distances, per_shell }
                    };
                    RunConfig {
                        graph: GraphSource::File(graph.clone().context("--graph or --config is required")?),
                        vertex_cap: DEFAULT_VERTEX_CAP,
                        sites: parse_sites(&sites, seed)?,
                        kernel: KernelConfig::default(),
                        tasks: vec![Task::Estimate {
                            estimate: which,
                            times: parse_times(&times)?,
                            pairs,
                            volume: match volume {
                                VolumeArg::Single => Le2Volume::Single,
                                VolumeArg::Symmetric => Le2Volume::Symmetric,
                            },
                            scale_radius,
                        }],
                        output: OutputConfig::default(),
                    }
                }
            };
            if let Some(path) = graph {
                run.graph = GraphSource::File(path);
            }
            if let Some(s) = seed {
                run.override_seed(s);
            }
            let g = run.graph.load(run.vertex_cap)?;
            run_single(&g, run, &out, &csv)
        }
        Command::Run { config, out_dir } => {
            let mut run = RunConfig::load(&config)?;
            if let Some(s) = seed {
                run.override_seed(s);
            }
            if std::env::var_os(OUT_DIR_ENV).is_none() {
                if let Some(dir) = out_dir {
                    run.output.dir = Some(dir);
                }
            }
            let report = harnack_cli::run_experiment(&run)?;
            let (json_path, csv_path) = emit_all(&report, &run.output)?;
            eprintln!(
                "{} tasks, {} cells -> {} and {}",
                report.tasks.len(),
                report.cell_count(),
                json_path.display(),
                csv_path.display()
            );
            Ok(report_failures(&report))
        }
    }
}
