use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pcbench_core::circuit::{is_breadboard_type, serialize_circuit_pretty};
use pcbench_core::{
    new_sim, parse_circuit, parse_program, parse_testproc, reduce_to_logical, run_procedure, serialize_circuit,
    validate, BoardProfile, CircuitDoc, CircuitKind, StaticBridgeTable, Verdict,
};
use pcbench_harness::dataset::project_dirs;
use pcbench_harness::report::{dataset_metrics, dataset_metrics_csv, render_markdown, write_reports, BenchmarkReport};
use pcbench_harness::{
    run_benchmark, AdapterSpec, EvalConfig, ProjectBundle, PromptOptions, RunPlan, TaskKind, DATASET_ENV,
    DEFAULT_TRIALS,
};

/// Exit status for a check that ran and found problems.
const FAILED: u8 = 1;
/// Exit status for usage, I/O and parse errors.
const ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "pcbench", version, about = "Evaluate generated circuits and firmware against reference projects")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check a circuit against a reference. Exits 1 when any error is found.
    Validate(ValidateArgs),
    /// Rewrite a physical layout as a logical circuit.
    Reduce(ReduceArgs),
    /// Run firmware on a circuit under a test procedure. Exits 1 on failure.
    Simulate(SimulateArgs),
    /// Run benchmark tasks over a dataset through an adapter.
    Run(RunArgs),
    /// Per-level size statistics of a dataset, as CSV.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    /// Physical when a breadboard is declared, logical otherwise.
    Auto,
    Logical,
    Physical,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    candidate: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    kind: KindArg,
    #[arg(long)]
    pretty: bool,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    physical: PathBuf,
    #[arg(long)]
    pretty: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    firmware: PathBuf,
    #[arg(long)]
    testproc: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    kind: KindArg,
    /// Built-in board name or a profile JSON file.
    #[arg(long, default_value = "arduino-uno")]
    profile: String,
    /// Write the observable event log (JSON lines) here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, env = DATASET_ENV, default_value = "dataset")]
    dataset: PathBuf,
    /// replay:DIR, exec:CMD, http:URL or reference.
    #[arg(long, default_value = "reference")]
    adapter: AdapterSpec,
    #[arg(long, default_value_t = DEFAULT_TRIALS, value_parser = positive)]
    trials: usize,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    parallelism: usize,
    /// Only projects of these levels (repeatable).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    level: Vec<u8>,
    /// Only these tasks (repeatable).
    #[arg(long)]
    task: Vec<TaskKind>,
    /// Run refinement loops of up to this many turns instead of single samples.
    #[arg(long, value_parser = positive)]
    refine_turns: Option<usize>,
    /// Ask for an intermediate logical circuit on the physical tasks.
    #[arg(long)]
    logical_first: bool,
    #[arg(long, default_value = "arduino-uno")]
    profile: String,
    /// Directory for the Markdown, CSV and JSONL reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the Markdown report instead of JSON.
    #[arg(long)]
    pretty: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long, env = DATASET_ENV, default_value = "dataset")]
    dataset: PathBuf,
    /// Print an aligned table instead of CSV.
    #[arg(long)]
    pretty: bool,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

/// Writes to stdout; a closed pipe (`| head`) ends the process quietly.
fn emit(text: &str) {
    if let Err(e) = io::stdout().lock().write_all(text.as_bytes()) {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write output: {e}");
        std::process::exit(i32::from(ERROR));
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn detect_kind(text: &str, kind: KindArg) -> Result<CircuitKind> {
    Ok(match kind {
        KindArg::Logical => CircuitKind::Logical,
        KindArg::Physical => CircuitKind::Physical,
        KindArg::Auto => {
            let v: serde_json::Value = serde_json::from_str(text).context("circuit is not JSON")?;
            let has_board = v["components"]
                .as_array()
                .is_some_and(|cs| cs.iter().any(|c| c["type"].as_str().is_some_and(is_breadboard_type)));
            if has_board {
                CircuitKind::Physical
            } else {
                CircuitKind::Logical
            }
        }
    })
}

fn load_circuit(path: &Path, kind: KindArg) -> Result<CircuitDoc> {
    let text = read(path)?;
    let kind = detect_kind(&text, kind)?;
    parse_circuit(&text, kind).with_context(|| format!("{} is not a valid circuit", path.display()))
}

fn load_profile(spec: &str) -> Result<BoardProfile> {
    if let Some(p) = BoardProfile::builtin(spec) {
        return Ok(p);
    }
    BoardProfile::load(Path::new(spec)).with_context(|| format!("`{spec}` is neither a built-in board nor a profile file"))
}

fn to_json<T: serde::Serialize>(value: &T, pretty: bool) -> String {
    if pretty {
        serde_json::to_string_pretty(value).expect("serializable")
    } else {
        serde_json::to_string(value).expect("serializable")
    }
}

fn cmd_validate(a: &ValidateArgs) -> Result<u8> {
    let candidate = load_circuit(&a.candidate, a.kind)?;
    let reference = load_circuit(&a.reference, a.kind)?;
    let report = validate(&candidate, &reference, candidate.kind);
    emit(&format!("{}\n", to_json(&report, a.pretty)));
    Ok(if report.is_clean() { 0 } else { FAILED })
}

fn cmd_reduce(a: &ReduceArgs) -> Result<u8> {
    let physical = parse_circuit(&read(&a.physical)?, CircuitKind::Physical)
        .with_context(|| format!("{} is not a valid physical circuit", a.physical.display()))?;
    let logical = reduce_to_logical(&physical, &StaticBridgeTable::standard());
    if a.pretty {
        emit(&format!("{}\n", serialize_circuit_pretty(&logical)));
    } else {
        emit(&format!("{}\n", serialize_circuit(&logical)));
    }
    Ok(0)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<u8> {
    let circuit = load_circuit(&a.circuit, a.kind)?;
    let source = read(&a.firmware)?;
    let procedure = parse_testproc(&read(&a.testproc)?)
        .with_context(|| format!("{} is not a valid test procedure", a.testproc.display()))?;
    let profile = load_profile(&a.profile)?;
    // firmware and setup problems are verdicts, not usage errors
    let verdict = match parse_program(&source) {
        Ok(program) => match new_sim(&circuit, &program, &profile) {
            Ok(sim) => run_procedure(&procedure, sim),
            Err(e) => Verdict::setup_failure(format!("simulation setup failed: {e}")),
        },
        Err(e) => Verdict::setup_failure(format!("firmware does not compile: {e}")),
    };
    if let Some(path) = &a.trace {
        fs::write(path, verdict.trace_jsonl()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    emit(&format!("{}\n", to_json(&verdict, a.pretty)));
    Ok(if verdict.passed { 0 } else { FAILED })
}

fn load_projects(root: &Path) -> Result<(Vec<ProjectBundle>, Vec<String>)> {
    let mut projects = Vec::new();
    let mut errors = Vec::new();
    for dir in project_dirs(root)? {
        match ProjectBundle::load(&dir) {
            Ok(p) => projects.push(p),
            Err(e) => errors.push(e.to_string()),
        }
    }
    Ok((projects, errors))
}

fn cmd_run(a: &RunArgs) -> Result<u8> {
    let (mut projects, errors) = load_projects(&a.dataset)?;
    if !errors.is_empty() {
        bail!("dataset has broken projects:\n  {}", errors.join("\n  "));
    }
    if !a.level.is_empty() {
        projects.retain(|p| a.level.contains(&p.level));
    }
    let mut tasks = if a.task.is_empty() { TaskKind::ALL.to_vec() } else { a.task.clone() };
    tasks.sort();
    tasks.dedup();
    let plan = RunPlan {
        tasks,
        trials: a.trials,
        parallelism: a.parallelism,
        refine_turns: a.refine_turns,
    };
    let config = EvalConfig {
        profile: load_profile(&a.profile)?,
        prompt: PromptOptions {
            logical_first: a.logical_first,
        },
    };
    let adapter = a.adapter.build(a.parallelism);
    let results = run_benchmark(&projects, adapter.as_ref(), &plan, &config);
    for r in results.iter().filter(|r| r.transport_error.is_some()) {
        eprintln!(
            "warning: {} {} trial {}: {}",
            r.project,
            r.task,
            r.trial,
            r.transport_error.as_deref().unwrap_or_default()
        );
    }
    let report = BenchmarkReport::build(adapter.name(), plan.trials, &projects, &results);
    if let Some(dir) = &a.out {
        write_reports(dir, &report, &results).with_context(|| format!("cannot write reports to {}", dir.display()))?;
    }
    if a.pretty {
        emit(&render_markdown(&report));
    } else {
        emit(&format!("{}\n", to_json(&report, false)));
    }
    Ok(0)
}

fn cmd_metrics(a: &MetricsArgs) -> Result<u8> {
    let (projects, errors) = load_projects(&a.dataset)?;
    for e in &errors {
        eprintln!("error: {e}");
    }
    let levels = dataset_metrics(&projects);
    let csv = dataset_metrics_csv(&levels)?;
    if a.pretty {
        for line in csv.lines() {
            let cells: Vec<String> = line.split(',').map(|c| format!("{c:>22}")).collect();
            emit(&format!("{}\n", cells.join("")));
        }
    } else {
        emit(&csv);
    }
    Ok(if errors.is_empty() { 0 } else { FAILED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Validate(a) => cmd_validate(a),
        Cmd::Reduce(a) => cmd_reduce(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Metrics(a) => cmd_metrics(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ERROR)
        }
    }
}
