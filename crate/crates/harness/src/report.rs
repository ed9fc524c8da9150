//! Aggregation of sample results and the Markdown/CSV emitters.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use pcbench_core::circuit_stats;
use pcbench_core::firmware::code_metrics;
use pcbench_core::validate::ErrorCategory;
use serde::Serialize;

use crate::dataset::ProjectBundle;
use crate::evaluate::SampleResult;
use crate::task::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub samples: usize,
    pub tasks: BTreeMap<TaskKind, f64>,
    /// Mean of the circuit-generation task rates present.
    pub circuit_overall: Option<f64>,
    /// Mean of the code-generation task rates present.
    pub code_overall: Option<f64>,
    /// Mean of every task rate present. Unweighted: a task counts once
    /// however many samples it has.
    pub total_overall: Option<f64>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl RateRow {
    pub fn from_task_rates(tasks: BTreeMap<TaskKind, f64>, samples: usize) -> RateRow {
        let pick = |circuit: bool| {
            tasks
                .iter()
                .filter(move |(t, _)| t.generates_circuit() == circuit)
                .map(|(_, r)| *r)
        };
        RateRow {
            samples,
            circuit_overall: mean(pick(true)),
            code_overall: mean(pick(false)),
            total_overall: mean(tasks.values().copied()),
            tasks,
        }
    }

    fn from_results<'a>(results: impl IntoIterator<Item = &'a SampleResult>) -> RateRow {
        let mut tally: BTreeMap<TaskKind, (usize, usize)> = BTreeMap::new();
        let mut samples = 0;
        for r in results {
            let e = tally.entry(r.task).or_default();
            e.0 += r.gated_success as usize;
            e.1 += 1;
            samples += 1;
        }
        let tasks = tally
            .into_iter()
            .map(|(t, (ok, n))| (t, ok as f64 / n as f64))
            .collect();
        RateRow::from_task_rates(tasks, samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub overall: RateRow,
    pub by_level: BTreeMap<u8, RateRow>,
}

/// Per-task gated success rates over all samples, overall and per level.
pub fn aggregate(results: &[SampleResult]) -> Aggregate {
    let mut levels: BTreeMap<u8, Vec<&SampleResult>> = BTreeMap::new();
    for r in results {
        levels.entry(r.level).or_default().push(r);
    }
    Aggregate {
        overall: RateRow::from_results(results),
        by_level: levels
            .into_iter()
            .map(|(level, rs)| (level, RateRow::from_results(rs)))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryMeans {
    pub samples: usize,
    pub means: BTreeMap<ErrorCategory, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorStats {
    pub logical: CategoryMeans,
    pub physical: CategoryMeans,
}

fn category_means<'a>(reports: impl Iterator<Item = &'a pcbench_core::ValidationReport>, physical: bool) -> CategoryMeans {
    let cats: Vec<ErrorCategory> = ErrorCategory::ALL
        .into_iter()
        .filter(|c| physical || !c.physical_only())
        .collect();
    let mut sums: BTreeMap<ErrorCategory, usize> = cats.iter().map(|c| (*c, 0)).collect();
    let mut samples = 0;
    for report in reports {
        samples += 1;
        for c in &cats {
            *sums.get_mut(c).expect("category present") += report.count(*c);
        }
    }
    let means = sums
        .into_iter()
        .map(|(c, s)| (c, if samples == 0 { 0.0 } else { s as f64 / samples as f64 }))
        .collect();
    CategoryMeans { samples, means }
}

/// Mean error count per category over circuit-task samples that produced a
/// validation report. Samples whose output did not parse have no report and
/// are left out.
pub fn error_stats(results: &[SampleResult]) -> ErrorStats {
    let of = |task: TaskKind| {
        results
            .iter()
            .filter(move |r| r.task == task)
            .filter_map(|r| r.validation.as_ref())
    };
    ErrorStats {
        logical: category_means(of(TaskKind::GenLogical), false),
        physical: category_means(of(TaskKind::GenPhysical), true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessBreakdown {
    pub samples: usize,
    pub functional: f64,
    pub no_bypass: f64,
    pub no_conflict: f64,
    pub both: f64,
}

/// Physical-layout success under each filter. `both` never exceeds either
/// single filter and neither exceeds `functional`; the two single filters
/// are not ordered relative to each other.
pub fn success_breakdown(results: &[SampleResult]) -> SuccessBreakdown {
    let phys: Vec<&SampleResult> = results.iter().filter(|r| r.task == TaskKind::GenPhysical).collect();
    let n = phys.len();
    let rate = |f: fn(&SampleResult) -> bool| {
        if n == 0 {
            0.0
        } else {
            phys.iter().filter(|r| f(r)).count() as f64 / n as f64
        }
    };
    SuccessBreakdown {
        samples: n,
        functional: rate(|r| r.filters.functional),
        no_bypass: rate(|r| r.filters.no_bypass),
        no_conflict: rate(|r| r.filters.no_conflict),
        both: rate(|r| r.filters.both),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectRow {
    pub id: String,
    pub level: u8,
    pub logical_components: usize,
    pub logical_connections: usize,
    pub physical_components: usize,
    pub physical_connections: usize,
    pub lines_of_code: usize,
    pub cyclomatic_complexity: usize,
    pub rates: BTreeMap<TaskKind, f64>,
}

/// One row per project: size metrics next to that project's task rates.
pub fn project_rows(projects: &[ProjectBundle], results: &[SampleResult]) -> Vec<ProjectRow> {
    projects
        .iter()
        .map(|p| {
            let l = circuit_stats(&p.logical);
            let ph = circuit_stats(&p.physical);
            let m = code_metrics(&p.code, &p.program);
            let row = RateRow::from_results(results.iter().filter(|r| r.project == p.id));
            ProjectRow {
                id: p.id.clone(),
                level: p.level,
                logical_components: l.num_components,
                logical_connections: l.num_connections,
                physical_components: ph.num_components,
                physical_connections: ph.num_connections,
                lines_of_code: m.lines_of_code,
                cyclomatic_complexity: m.cyclomatic_complexity,
                rates: row.tasks,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelMetrics {
    pub level: u8,
    pub projects: usize,
    pub lines_of_code: f64,
    pub cyclomatic_complexity: f64,
    pub logical_components: f64,
    pub logical_connections: f64,
    pub physical_components: f64,
    pub physical_connections: f64,
}

/// Per-level means of the dataset's size metrics.
pub fn dataset_metrics(projects: &[ProjectBundle]) -> Vec<LevelMetrics> {
    let rows = project_rows(projects, &[]);
    let mut levels: BTreeMap<u8, Vec<&ProjectRow>> = BTreeMap::new();
    for r in &rows {
        levels.entry(r.level).or_default().push(r);
    }
    levels
        .into_iter()
        .map(|(level, rs)| {
            let avg = |f: fn(&ProjectRow) -> usize| mean(rs.iter().map(|r| f(r) as f64)).unwrap_or(0.0);
            LevelMetrics {
                level,
                projects: rs.len(),
                lines_of_code: avg(|r| r.lines_of_code),
                cyclomatic_complexity: avg(|r| r.cyclomatic_complexity),
                logical_components: avg(|r| r.logical_components),
                logical_connections: avg(|r| r.logical_connections),
                physical_components: avg(|r| r.physical_components),
                physical_connections: avg(|r| r.physical_connections),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub adapter: String,
    pub trials: usize,
    pub aggregate: Aggregate,
    pub error_stats: ErrorStats,
    pub success_breakdown: SuccessBreakdown,
    pub projects: Vec<ProjectRow>,
}

impl BenchmarkReport {
    pub fn build(adapter: String, trials: usize, projects: &[ProjectBundle], results: &[SampleResult]) -> Self {
        BenchmarkReport {
            adapter,
            trials,
            aggregate: aggregate(results),
            error_stats: error_stats(results),
            success_breakdown: success_breakdown(results),
            projects: project_rows(projects, results),
        }
    }
}

fn pct(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{:.1}", v * 100.0),
        None => "-".into(),
    }
}

fn frac(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:.4}"),
        None => String::new(),
    }
}

fn rate_cells(row: &RateRow) -> Vec<Option<f64>> {
    let mut cells: Vec<Option<f64>> = TaskKind::ALL.iter().map(|t| row.tasks.get(t).copied()).collect();
    cells.push(row.circuit_overall);
    cells.push(row.code_overall);
    cells.push(row.total_overall);
    cells
}

const RATE_HEADERS: [&str; 7] = [
    "gen_logical",
    "gen_physical",
    "code_from_logical",
    "code_from_physical",
    "circuit_overall",
    "code_overall",
    "total_overall",
];

pub fn render_markdown(report: &BenchmarkReport) -> String {
    let mut s = String::new();
    s.push_str("# Benchmark report\n\n");
    s.push_str(&format!("Adapter: `{}`. Trials per task: {}.\n\n", report.adapter, report.trials));

    s.push_str("## Success rate (%)\n\n");
    s.push_str("| scope | samples | ");
    s.push_str(&RATE_HEADERS.join(" | "));
    s.push_str(" |\n|---|---|");
    s.push_str(&"---|".repeat(RATE_HEADERS.len()));
    s.push('\n');
    let mut rows = vec![("all".to_string(), &report.aggregate.overall)];
    for (level, row) in &report.aggregate.by_level {
        rows.push((format!("level {level}"), row));
    }
    for (scope, row) in rows {
        let cells: Vec<String> = rate_cells(row).into_iter().map(pct).collect();
        s.push_str(&format!("| {scope} | {} | {} |\n", row.samples, cells.join(" | ")));
    }

    s.push_str("\n## Mean error counts\n\n| category | logical | physical |\n|---|---|---|\n");
    for c in ErrorCategory::ALL {
        let l = report
            .error_stats
            .logical
            .means
            .get(&c)
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".into());
        let p = format!("{:.2}", report.error_stats.physical.means.get(&c).copied().unwrap_or(0.0));
        s.push_str(&format!("| {c} | {l} | {p} |\n"));
    }
    s.push_str(&format!(
        "\nSamples with a report: {} logical, {} physical.\n",
        report.error_stats.logical.samples, report.error_stats.physical.samples
    ));

    let b = &report.success_breakdown;
    s.push_str("\n## Physical layout success by filter (%)\n\n");
    s.push_str("| samples | functional | no bypass | no pin conflict | both |\n|---|---|---|---|---|\n");
    s.push_str(&format!(
        "| {} | {} | {} | {} | {} |\n",
        b.samples,
        pct(Some(b.functional)),
        pct(Some(b.no_bypass)),
        pct(Some(b.no_conflict)),
        pct(Some(b.both))
    ));
    s
}

pub fn rates_csv(report: &BenchmarkReport) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scope", "samples"];
    header.extend(RATE_HEADERS);
    w.write_record(&header)?;
    let mut rows = vec![("all".to_string(), &report.aggregate.overall)];
    for (level, row) in &report.aggregate.by_level {
        rows.push((format!("level{level}"), row));
    }
    for (scope, row) in rows {
        let mut rec = vec![scope, row.samples.to_string()];
        rec.extend(rate_cells(row).into_iter().map(frac));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn error_stats_csv(stats: &ErrorStats) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["circuit", "samples", "category", "mean"])?;
    for (name, m) in [("logical", &stats.logical), ("physical", &stats.physical)] {
        for (c, v) in &m.means {
            w.write_record([name.to_string(), m.samples.to_string(), c.to_string(), format!("{v:.4}")])?;
        }
    }
    finish(w)
}

pub fn breakdown_csv(b: &SuccessBreakdown) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["samples", "functional", "no_bypass", "no_conflict", "both"])?;
    w.write_record([
        b.samples.to_string(),
        format!("{:.4}", b.functional),
        format!("{:.4}", b.no_bypass),
        format!("{:.4}", b.no_conflict),
        format!("{:.4}", b.both),
    ])?;
    finish(w)
}

pub fn projects_csv(rows: &[ProjectRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "project",
        "level",
        "logical_components",
        "logical_connections",
        "physical_components",
        "physical_connections",
        "lines_of_code",
        "cyclomatic_complexity",
    ];
    header.extend(TaskKind::ALL.iter().map(|t| t.as_str()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.id.clone(),
            r.level.to_string(),
            r.logical_components.to_string(),
            r.logical_connections.to_string(),
            r.physical_components.to_string(),
            r.physical_connections.to_string(),
            r.lines_of_code.to_string(),
            r.cyclomatic_complexity.to_string(),
        ];
        rec.extend(TaskKind::ALL.iter().map(|t| frac(r.rates.get(t).copied())));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn dataset_metrics_csv(levels: &[LevelMetrics]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "level",
        "projects",
        "lines_of_code",
        "cyclomatic_complexity",
        "logical_components",
        "logical_connections",
        "physical_components",
        "physical_connections",
    ])?;
    for l in levels {
        let f = |v: f64| format!("{v:.2}");
        w.write_record([
            l.level.to_string(),
            l.projects.to_string(),
            f(l.lines_of_code),
            f(l.cyclomatic_complexity),
            f(l.logical_components),
            f(l.logical_connections),
            f(l.physical_components),
            f(l.physical_connections),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, csv::Error> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Sample results as JSON lines, in the given order.
pub fn results_jsonl(results: &[SampleResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("results serialize"));
        out.push('\n');
    }
    out
}

/// Files written by [`write_reports`], relative to the output directory.
pub const REPORT_FILES: [&str; 6] = [
    "report.md",
    "rates.csv",
    "error_stats.csv",
    "success_breakdown.csv",
    "projects.csv",
    "results.jsonl",
];

pub fn write_reports(dir: &Path, report: &BenchmarkReport, results: &[SampleResult]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let csv_err = |e: csv::Error| io::Error::other(e.to_string());
    let contents = [
        render_markdown(report),
        rates_csv(report).map_err(csv_err)?,
        error_stats_csv(&report.error_stats).map_err(csv_err)?,
        breakdown_csv(&report.success_breakdown).map_err(csv_err)?,
        projects_csv(&report.projects).map_err(csv_err)?,
        results_jsonl(results),
    ];
    for (name, body) in REPORT_FILES.iter().zip(contents) {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}
