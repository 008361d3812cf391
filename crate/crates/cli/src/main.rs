//! `energy-suff`: run scenarios, compare ES-CBF against the threshold baseline, plot traces.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use energy_sufficiency::plot::{render, Panel};
use energy_sufficiency::scenario_file::load_scenario;
use energy_sufficiency::sim::{derive_seeds, ControllerKind, RunStatus, Variant};
use energy_sufficiency::trace::{read_jsonl, write_csv, write_jsonl};
use energy_sufficiency::unicycle::UnicycleParams;
use energy_sufficiency::{run, BaselineConfig, Error, Metrics, RunOutput, Scenario, Vec2, WaypointPath};
use rayon::prelude::*;
use serde::Serialize;

const EX_VIOLATION: u8 = 2;
const EX_INFEASIBLE: u8 = 3;
const EX_USAGE: u8 = 64;
const EX_DATAERR: u8 = 65;
const EX_IOERR: u8 = 74;

#[derive(Parser)]
#[command(name = "energy-suff", version, about = "Energy-sufficient return-to-base simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.jsonl, trace.csv, metrics.json and path.json.
    Run(RunArgs),
    /// Run N seeds with ES-CBF and the baseline at each tau, then summarise.
    Compare(CompareArgs),
    /// Render SVG panels from a trace.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Number of seeds.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Master seed the per-run seeds are derived from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Baseline thresholds, comma separated.
    #[arg(long = "tau", value_delimiter = ',', default_values_t = [0.3, 0.5])]
    taus: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    trace: PathBuf,
    /// One or more of he, E, s, L, traj (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    panel: Vec<String>,
    /// Output file for a single panel, directory for several.
    #[arg(long)]
    out: PathBuf,
    /// Waypoint file (JSON array of [x, y]) drawn on the traj panel.
    #[arg(long)]
    path: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Escbf,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Integrator,
    Unicycle,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: EX_USAGE, msg: msg.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: EX_IOERR, msg: format!("{}: {e}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => EX_IOERR,
            _ => EX_DATAERR,
        };
        Self { code, msg: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EX_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run_command(&a),
        Command::Compare(a) => compare_command(&a),
        Command::Plot(a) => plot_command(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("energy-suff: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn read_scenario(path: &Path) -> CliResult<Scenario> {
    load_scenario(path).map_err(|e| match e {
        Error::Io(io) => Failure::io(path, io),
        other => Failure { code: EX_DATAERR, msg: format!("{}: {other}", path.display()) },
    })
}

fn apply_common(sc: &mut Scenario, common: &CommonArgs) -> CliResult<()> {
    if let Some(dt) = common.dt {
        if !(dt > 0.0 && dt <= 1e-2) {
            return Err(Failure::usage(format!("--dt must lie in (0, 0.01], got {dt}")));
        }
        sc.dt = dt;
    }
    match common.model {
        Some(ModelArg::Integrator) => sc.variant = Variant::SingleIntegrator,
        Some(ModelArg::Unicycle) if matches!(sc.variant, Variant::SingleIntegrator) => {
            let to_station = sc.station - sc.initial_x;
            let theta0 = if to_station.norm() > 0.0 { to_station.y.atan2(to_station.x) } else { 0.0 };
            sc.variant = Variant::Unicycle { theta0, params: UnicycleParams::default(), slowing: true };
        }
        _ => {}
    }
    Ok(())
}

fn apply_controller(sc: &mut Scenario, controller: Option<ControllerArg>, tau: Option<f64>) -> CliResult<()> {
    let baseline = |tau: f64| BaselineConfig::new(tau).map_err(|e| Failure::usage(e.to_string()));
    match (controller, tau) {
        (Some(ControllerArg::Escbf), Some(_)) => return Err(Failure::usage("--tau only applies to --controller baseline")),
        (Some(ControllerArg::Escbf), None) => sc.controller = ControllerKind::Escbf,
        (Some(ControllerArg::Baseline), Some(t)) => sc.controller = ControllerKind::Baseline(baseline(t)?),
        (Some(ControllerArg::Baseline), None) => {
            if !matches!(sc.controller, ControllerKind::Baseline(_)) {
                return Err(Failure::usage("--controller baseline needs --tau"));
            }
        }
        (None, Some(t)) => match &mut sc.controller {
            ControllerKind::Baseline(b) => b.tau = baseline(t)?.tau,
            ControllerKind::Escbf => return Err(Failure::usage("--tau only applies to the baseline controller")),
        },
        (None, None) => {}
    }
    Ok(())
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let res = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    res.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Failure::io(path, e)
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

#[derive(Serialize)]
struct RunReport<'a> {
    seed: u64,
    status: RunStatus,
    #[serde(flatten)]
    metrics: &'a Metrics,
    eoa_fraction: Option<f64>,
    warnings: &'a [String],
}

fn exit_code_for(out: &RunOutput) -> u8 {
    if out.status == RunStatus::QpInfeasible {
        EX_INFEASIBLE
    } else if out.metrics.budget_violated {
        EX_VIOLATION
    } else {
        0
    }
}

fn run_command(a: &RunArgs) -> CliResult<u8> {
    let mut sc = read_scenario(&a.scenario)?;
    apply_controller(&mut sc, a.controller, a.tau)?;
    apply_common(&mut sc, &a.common)?;
    let out = run(&sc, a.seed)?;
    create_dir(&a.out)?;
    let to_io = |e: Error| match e {
        Error::Io(io) => io,
        other => std::io::Error::other(other),
    };
    write_atomic(&a.out.join("trace.jsonl"), |w| write_jsonl(w, &out.trace).map_err(to_io))?;
    write_atomic(&a.out.join("trace.csv"), |w| write_csv(w, &out.trace).map_err(to_io))?;
    let report = RunReport {
        seed: a.seed,
        status: out.status,
        metrics: &out.metrics,
        eoa_fraction: out.metrics.eoa_fraction(),
        warnings: &out.warnings,
    };
    write_json(&a.out.join("metrics.json"), &report)?;
    write_json(&a.out.join("path.json"), &out.final_path.waypoints())?;
    if !a.common.quiet {
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
        let eoa = out.metrics.eoa.map_or("n/a".into(), |e| format!("{e:.3} J ({:.3}%)", 100.0 * e / out.metrics.budget));
        println!(
            "status {:?}, EOA {eoa}, min h_e {:.4} J, violated {}, distance {:.2} m, {} steps",
            out.status, out.metrics.min_h_e, out.metrics.budget_violated, out.metrics.distance_traveled, out.metrics.steps
        );
    }
    Ok(exit_code_for(&out))
}

#[derive(Serialize, Clone)]
struct ColumnSummary {
    controller: String,
    runs: usize,
    arrived: usize,
    violations: usize,
    infeasible: usize,
    eoa_min: Option<f64>,
    eoa_median: Option<f64>,
    eoa_max: Option<f64>,
    distance_mean: f64,
    distance_max: f64,
}

#[derive(Serialize)]
struct CompareSummary {
    scenario: String,
    master_seed: u64,
    seeds: Vec<u64>,
    columns: Vec<ColumnSummary>,
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

fn summarise(label: &str, runs: &[(RunStatus, Metrics)]) -> ColumnSummary {
    let mut eoa: Vec<f64> = runs.iter().filter_map(|(_, m)| m.eoa_fraction()).collect();
    eoa.sort_by(f64::total_cmp);
    let dist: Vec<f64> = runs.iter().map(|(_, m)| m.distance_traveled).collect();
    ColumnSummary {
        controller: label.to_string(),
        runs: runs.len(),
        arrived: eoa.len(),
        violations: runs.iter().filter(|(_, m)| m.budget_violated).count(),
        infeasible: runs.iter().filter(|(s, _)| *s == RunStatus::QpInfeasible).count(),
        eoa_min: eoa.first().copied(),
        eoa_median: median(&eoa),
        eoa_max: eoa.last().copied(),
        distance_mean: if dist.is_empty() { 0.0 } else { dist.iter().sum::<f64>() / dist.len() as f64 },
        distance_max: dist.iter().copied().fold(0.0, f64::max),
    }
}

fn format_table(columns: &[ColumnSummary]) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.3}%", 100.0 * x));
    let header = ["controller", "runs", "arrived", "violations", "infeasible", "EOA min", "EOA median", "EOA max", "dist mean", "dist max"];
    let rows: Vec<Vec<String>> = columns
        .iter()
        .map(|c| {
            vec![
                c.controller.clone(),
                c.runs.to_string(),
                c.arrived.to_string(),
                c.violations.to_string(),
                c.infeasible.to_string(),
                pct(c.eoa_min),
                pct(c.eoa_median),
                pct(c.eoa_max),
                format!("{:.2}", c.distance_mean),
                format!("{:.2}", c.distance_max),
            ]
        })
        .collect();
    let widths: Vec<usize> =
        (0..header.len()).map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0)).collect();
    let line = |cells: Vec<String>| {
        cells.iter().enumerate().map(|(i, c)| format!("{c:>w$}", w = widths[i])).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn thread_count() -> CliResult<Option<usize>> {
    match std::env::var("ENERGY_SUFF_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::usage(format!("ENERGY_SUFF_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

fn compare_command(a: &CompareArgs) -> CliResult<u8> {
    if a.seeds == 0 {
        return Err(Failure::usage("--seeds must be at least 1"));
    }
    let mut base = read_scenario(&a.scenario)?;
    apply_common(&mut base, &a.common)?;
    let mut variants: Vec<(String, Scenario)> = Vec::new();
    let mut escbf = base.clone();
    escbf.controller = ControllerKind::Escbf;
    variants.push(("escbf".into(), escbf));
    for &tau in &a.taus {
        let b = BaselineConfig::new(tau).map_err(|e| Failure::usage(e.to_string()))?;
        let mut sc = base.clone();
        sc.controller = ControllerKind::Baseline(b);
        variants.push((format!("baseline-{tau}"), sc));
    }
    let seeds = derive_seeds(a.seed, a.seeds);
    let runs_dir = a.out.join("runs");
    create_dir(&runs_dir)?;

    let jobs: Vec<(usize, usize)> = (0..variants.len()).flat_map(|v| (0..seeds.len()).map(move |s| (v, s))).collect();
    let work = || {
        jobs.par_iter()
            .map(|&(v, s)| -> CliResult<(usize, RunStatus, Metrics)> {
                let (label, sc) = &variants[v];
                let out = run(sc, seeds[s])?;
                let report = RunReport {
                    seed: seeds[s],
                    status: out.status,
                    metrics: &out.metrics,
                    eoa_fraction: out.metrics.eoa_fraction(),
                    warnings: &out.warnings,
                };
                write_json(&runs_dir.join(format!("{label}-seed{s}.json")), &report)?;
                Ok((v, out.status, out.metrics))
            })
            .collect::<Vec<_>>()
    };
    let results = match thread_count()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure { code: EX_IOERR, msg: e.to_string() })?
            .install(work),
        None => work(),
    };
    let mut per_variant: Vec<Vec<(RunStatus, Metrics)>> = vec![Vec::new(); variants.len()];
    for r in results {
        let (v, status, m) = r?;
        per_variant[v].push((status, m));
    }
    let columns: Vec<ColumnSummary> = variants.iter().zip(&per_variant).map(|((label, _), runs)| summarise(label, runs)).collect();
    let summary = CompareSummary { scenario: a.scenario.display().to_string(), master_seed: a.seed, seeds, columns };
    write_json(&a.out.join("summary.json"), &summary)?;
    let table = format_table(&summary.columns);
    write_atomic(&a.out.join("summary.txt"), |w| w.write_all(table.as_bytes()))?;
    if !a.common.quiet {
        print!("{table}");
    }
    let es = &summary.columns[0];
    Ok(if es.infeasible > 0 {
        EX_INFEASIBLE
    } else if es.violations > 0 {
        EX_VIOLATION
    } else {
        0
    })
}

fn plot_command(a: &PlotArgs) -> CliResult<u8> {
    let panels = a
        .panel
        .iter()
        .map(|p| p.parse::<Panel>().map_err(|e| Failure::usage(e.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    let file = File::open(&a.trace).map_err(|e| Failure::io(&a.trace, e))?;
    let trace = read_jsonl(BufReader::new(file))?;
    let path = match &a.path {
        None => None,
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
            let pts: Vec<Vec2> = serde_json::from_str(&text)
                .map_err(|e| Failure { code: EX_DATAERR, msg: format!("{}: {e}", p.display()) })?;
            Some(WaypointPath::new(pts)?)
        }
    };
    let targets: Vec<(Panel, PathBuf)> = if panels.len() == 1 {
        vec![(panels[0], a.out.clone())]
    } else {
        create_dir(&a.out)?;
        panels.iter().map(|p| (*p, a.out.join(format!("{}.svg", p.name())))).collect()
    };
    for (panel, target) in targets {
        let svg = render(&trace, panel, path.as_ref())?;
        write_atomic(&target, |w| w.write_all(svg.as_bytes()))?;
    }
    Ok(0)
}
