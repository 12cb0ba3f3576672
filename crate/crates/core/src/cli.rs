//! Command-line surface. [`main_with`] parses arguments, dispatches and
//! returns the process exit code.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::bench::connector_bench;
use crate::config::{apply_overrides, Override};
use crate::error::{Error, Result};
use crate::oracle::{run_suite, SUITES};
use crate::params::PlannerParams;
use crate::replan::Mode;
use crate::scenes;
use crate::sim::{self, frames_csv, trace_jsonl, RunReport};
use crate::world::{Scenario, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;

#[derive(Parser, Debug)]
#[command(name = "visia", version, about = "Visibility-aware local replanning for aerial target scanning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fly a scenario closed-loop and write report, trace and plot data.
    Run(RunArgs),
    /// Check a scenario file and print its summary.
    Validate(ScenarioArgs),
    /// Run both modes on the same seeds and print a comparison table.
    Compare(CompareArgs),
    /// Connector benchmark against the clearance-only baseline.
    Bench(BenchArgs),
    /// Cross-check the fast algorithms against brute-force oracles.
    Oracle(OracleArgs),
    /// Write the resolved scenario, voxels and a flight as plot-ready CSV.
    Export(RunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ScenarioArgs {
    /// Scenario file, or `builtin:<name>`.
    #[arg(long)]
    pub scenario: String,
    /// Override any scenario or `planner.*` field.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<Override>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-call replanning budget.
    #[arg(long)]
    pub budget_ms: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value = "visibility-aware")]
    pub mode: Mode,
    #[arg(long, default_value = "visia-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Number of seeds, starting at `--seed` (default 0).
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    /// Also write the per-trial reports here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    /// Scenes to benchmark (default: the corridor and pillar scenes).
    #[arg(long)]
    pub scenario: Vec<String>,
    /// Start/goal pairs per scene.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<Override>,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// Restrict to one suite.
    #[arg(long)]
    pub suite: Option<String>,
    /// Instances per suite (default: each suite's own size).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn scenario_doc(spec: &str) -> Result<ScenarioFile> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return scenes::builtin_doc(name);
    }
    let text = std::fs::read_to_string(spec).map_err(|source| Error::Io {
        path: spec.to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{spec}: {e}")))
}

/// Loads the scenario and applies seed, budget and dotted overrides.
pub fn resolve(args: &ScenarioArgs) -> Result<(Scenario, PlannerParams)> {
    let mut doc = scenario_doc(&args.scenario)?;
    let mut params = PlannerParams::default();
    apply_overrides(&mut doc, &mut params, &args.set)?;
    if let Some(s) = args.seed {
        doc.seed = s;
    }
    if let Some(b) = args.budget_ms {
        params.budget_ms = b;
        params.validate()?;
    }
    Ok((Scenario::from_doc(doc)?, params))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn summary(r: &RunReport) -> serde_json::Value {
    json!({
        "mode": r.mode, "seed": r.seed, "status": r.status,
        "ft": r.ft, "cr": r.cr, "or": r.or, "vae": r.vae,
        "cl_mean": r.cl_mean, "cl_max": r.cl_max, "replans": r.replans.len(),
    })
}

fn cmd_run(a: &RunArgs) -> Result<i32> {
    let (scenario, params) = resolve(&a.scenario)?;
    let out = sim::run(&scenario, &params, a.mode)?;
    mkdir(&a.out)?;
    write(&a.out, "report.json", &serde_json::to_string_pretty(&out.report).expect("report serializes"))?;
    write(&a.out, "trace.jsonl", &trace_jsonl(&out))?;
    write(&a.out, "frames.csv", &frames_csv(&out.frames))?;
    log::info!("wrote {}", a.out.display());
    println!("{}", summary(&out.report));
    Ok(out.report.status.exit_code())
}

fn cmd_validate(a: &ScenarioArgs) -> Result<i32> {
    let (s, _) = resolve(a)?;
    println!(
        "{}",
        json!({
            "valid": true,
            "dims": s.base_grid.dims(),
            "target_elements": s.surface.len(),
            "obstacle_sets": s.obstacles.len(),
            "hidden_voxels": s.hidden_voxel_count(),
            "nominal_nodes": s.nominal.len(),
        })
    );
    Ok(EXIT_OK)
}

#[derive(Default, Clone, Copy)]
struct Row {
    ft: f64,
    cr: f64,
    or: f64,
    vae: f64,
    cl: f64,
}

fn cmd_compare(a: &CompareArgs) -> Result<i32> {
    let (scenario, params) = resolve(&a.scenario)?;
    let first = a.scenario.seed.unwrap_or(0);
    let trials = a.trials.max(1);
    let modes = [Mode::ClearanceOnly, Mode::VisibilityAware];
    let mut rows = [Row::default(); 2];
    let mut reports = Vec::new();
    for seed in first..first + trials {
        let s = scenario.with_seed(seed)?;
        for (i, m) in modes.iter().enumerate() {
            let r = sim::run(&s, &params, *m)?.report;
            rows[i].ft += r.ft;
            rows[i].cr += r.cr;
            rows[i].or += r.or;
            rows[i].vae += r.vae;
            rows[i].cl += r.cl_mean;
            reports.push(r);
        }
    }
    let n = trials as f64;
    println!("{:<18} {:>9} {:>8} {:>8} {:>9} {:>8}", "method", "FT(s)", "CR(%)", "OR(%)", "VaE", "CL(ms)");
    for (m, r) in modes.iter().zip(rows) {
        println!("{:<18} {:>9.2} {:>8.2} {:>8.2} {:>9.2} {:>8.2}", m.to_string(), r.ft / n, r.cr / n, r.or / n, r.vae / n, r.cl / n);
    }
    if let Some(dir) = &a.out {
        mkdir(dir)?;
        write(dir, "compare.json", &serde_json::to_string_pretty(&reports).expect("reports serialize"))?;
    }
    Ok(EXIT_OK)
}

fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let names = if a.scenario.is_empty() {
        vec!["builtin:corridor".to_string(), "builtin:pillars".to_string()]
    } else {
        a.scenario.clone()
    };
    for name in names {
        let (s, params) = resolve(&ScenarioArgs {
            scenario: name.clone(),
            set: a.set.clone(),
            seed: None,
            budget_ms: None,
        })?;
        let b = connector_bench(&s, &params, a.n, a.seed);
        let solved = b.pairs.iter().filter(|p| p.vis_ok).count();
        println!(
            "{}",
            json!({
                "scenario": name, "pairs": b.pairs.len(), "solved": solved,
                "vis_or": b.vis_or, "clr_or": b.clr_or, "len_ratio": b.len_ratio,
                "warm_ratio": b.warm_ratio, "all_valid": b.all_valid, "wall_ms": b.wall_ms,
            })
        );
    }
    Ok(EXIT_OK)
}

fn cmd_oracle(a: &OracleArgs) -> Result<i32> {
    let suites: Vec<&str> = match &a.suite {
        Some(s) => vec![s.as_str()],
        None => SUITES.to_vec(),
    };
    let mut code = EXIT_OK;
    for s in suites {
        let r = run_suite(s, a.n, a.seed)?;
        if !r.passed() {
            code = EXIT_ERROR;
        }
        println!("{}", serde_json::to_string(&r).expect("suite report serializes"));
    }
    Ok(code)
}

fn cmd_export(a: &RunArgs) -> Result<i32> {
    let (scenario, params) = resolve(&a.scenario)?;
    mkdir(&a.out)?;
    write(&a.out, "scenario.json", &scenario.to_json())?;
    let mut vox = String::from("x,y,z,label\n");
    let g = scenario.ground_truth_grid();
    for (label, filter) in [("target", crate::world::LabelFilter::Target), ("obstacle", crate::world::LabelFilter::Obstacle)] {
        for c in g.occupied_centers(filter) {
            vox.push_str(&format!("{:.4},{:.4},{:.4},{label}\n", c.x, c.y, c.z));
        }
    }
    write(&a.out, "voxels.csv", &vox)?;
    let out = sim::run(&scenario, &params, a.mode)?;
    write(&a.out, "frames.csv", &frames_csv(&out.frames))?;
    println!("{}", json!({ "out": a.out.display().to_string(), "frames": out.frames.len() }));
    Ok(EXIT_OK)
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Export(a) => cmd_export(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
