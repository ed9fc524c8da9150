use std::fs;

use pcbench_harness::adapter::ExecAdapter;
use pcbench_harness::report::{error_stats, success_breakdown, BenchmarkReport};
use pcbench_harness::trials::success_rate;
use pcbench_harness::{
    aggregate, bundled_dataset_root, load_dataset, refine_loop, run_trials, EvalConfig, Filters, ProjectBundle,
    ReferenceAdapter, ReplayAdapter, Role, SampleResult, TaskKind, DEFAULT_TRIALS,
};
use pcbench_core::validate::{ErrorCategory, Finding};
use pcbench_core::{ValidationReport, Verdict};

fn project(id: &str) -> ProjectBundle {
    load_dataset(&bundled_dataset_root())
        .unwrap()
        .into_iter()
        .find(|p| p.id == id)
        .unwrap()
}

fn synthetic(task: TaskKind, level: u8, success: bool) -> SampleResult {
    let mut verdict = Verdict::setup_failure("synthetic");
    verdict.passed = success;
    verdict.sim_errors.clear();
    SampleResult {
        project: format!("p{level}"),
        level,
        task,
        trial: 1,
        turns: 1,
        verdict,
        parse_error: None,
        validation: None,
        filters: Filters::from_parts(success, None),
        gated_success: success,
        transport_error: None,
    }
}

#[test]
fn replay_three_of_five_is_point_six() {
    let p = project("blink");
    let dir = tempfile::tempdir().unwrap();
    let task_dir = dir.path().join("blink").join("code_from_logical");
    fs::create_dir_all(&task_dir).unwrap();
    for (k, body) in [(1, p.code.as_str()), (2, "garbage"), (3, p.code.as_str()), (4, ""), (5, p.code.as_str())] {
        fs::write(task_dir.join(format!("trial{k}.txt")), body).unwrap();
    }
    let out = run_trials(&p, TaskKind::CodeFromLogical, &ReplayAdapter::new(dir.path()), DEFAULT_TRIALS, &EvalConfig::default());
    assert_eq!(DEFAULT_TRIALS, 5);
    assert_eq!(out.results.len(), 5);
    assert_eq!(out.rate, 0.6);
}

#[test]
fn missing_replay_file_is_a_failed_trial() {
    let p = project("blink");
    let dir = tempfile::tempdir().unwrap();
    let out = run_trials(&p, TaskKind::GenLogical, &ReplayAdapter::new(dir.path()), 2, &EvalConfig::default());
    assert_eq!(out.rate, 0.0);
    assert!(out.results.iter().all(|r| r.transport_error.is_some()));
}

#[test]
fn reference_echo_single_trial() {
    let p = project("traffic_light");
    for task in TaskKind::ALL {
        assert_eq!(run_trials(&p, task, &ReferenceAdapter, 1, &EvalConfig::default()).rate, 1.0);
    }
}

#[test]
fn refine_succeeds_on_third_turn() {
    let p = project("button_led");
    let m = p.mutants.clone().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let task_dir = dir.path().join("button_led").join("code_from_physical");
    fs::create_dir_all(&task_dir).unwrap();
    fs::write(task_dir.join("trial1.txt"), "I cannot do that.").unwrap();
    fs::write(task_dir.join("trial1.turn2.txt"), p.code.replacen(&m.firmware.from, &m.firmware.to, 1)).unwrap();
    fs::write(task_dir.join("trial1.turn3.txt"), format!("Fixed:\n```cpp\n{}```\n", p.code)).unwrap();
    let adapter = ReplayAdapter::new(dir.path());
    let out = refine_loop(&p, TaskKind::CodeFromPhysical, 1, &adapter, 5, &EvalConfig::default());
    assert!(out.result.gated_success);
    assert_eq!(out.result.turns, 3);
    assert_eq!(out.transcript.len(), 6);
    assert_eq!(out.transcript[0].role, Role::User);
    assert_eq!(out.transcript[1].role, Role::Assistant);
    assert!(out.transcript[2].content.contains("parse_error"));
    assert!(out.transcript[4].content.contains("failed_steps"));
    assert!(out.transcript[4].content.contains("led_lit"));
}

#[test]
fn refine_first_turn_success_and_exhaustion() {
    let p = project("blink");
    let out = refine_loop(&p, TaskKind::GenPhysical, 1, &ReferenceAdapter, 5, &EvalConfig::default());
    assert_eq!((out.result.turns, out.transcript.len()), (1, 2));

    let exec = ExecAdapter {
        command: "cat >/dev/null; printf '{\"artifact\": \"nope\"}'".into(),
        concurrency: 1,
    };
    let out = refine_loop(&p, TaskKind::GenPhysical, 1, &exec, 5, &EvalConfig::default());
    assert!(!out.result.gated_success);
    assert_eq!(out.result.turns, 5);
    assert_eq!(out.transcript.len(), 10);
}

#[test]
fn exec_adapter_round_trip() {
    let p = project("blink");
    let dir = tempfile::tempdir().unwrap();
    let resp = dir.path().join("resp.json");
    fs::write(&resp, serde_json::json!({ "artifact": p.code }).to_string()).unwrap();
    let req = dir.path().join("req.json");
    let exec = ExecAdapter {
        command: format!("cat > '{}'; cat '{}'", req.display(), resp.display()),
        concurrency: 2,
    };
    let out = run_trials(&p, TaskKind::CodeFromLogical, &exec, 1, &EvalConfig::default());
    assert_eq!(out.rate, 1.0);
    let sent: serde_json::Value = serde_json::from_str(&fs::read_to_string(&req).unwrap()).unwrap();
    assert_eq!(sent["task"], "code_from_logical");
    assert!(sent["prompt"].as_str().unwrap().contains("Logical Hardware"));
    assert_eq!(sent["transcript"], serde_json::json!([]));

    let failing = ExecAdapter {
        command: "echo boom >&2; exit 3".into(),
        concurrency: 1,
    };
    let out = run_trials(&p, TaskKind::CodeFromLogical, &failing, 1, &EvalConfig::default());
    assert!(out.results[0].transport_error.as_deref().unwrap().contains("boom"));
}

#[test]
fn overall_columns_are_unweighted_task_means() {
    let mut results = Vec::new();
    for (task, ok) in [
        (TaskKind::GenLogical, 480),
        (TaskKind::GenPhysical, 12),
        (TaskKind::CodeFromLogical, 492),
        (TaskKind::CodeFromPhysical, 512),
    ] {
        for i in 0..1000 {
            results.push(synthetic(task, 1, i < ok));
        }
    }
    let row = aggregate(&results).overall;
    assert!((row.circuit_overall.unwrap() - 0.246).abs() < 1e-9);
    assert!((row.code_overall.unwrap() - 0.502).abs() < 1e-9);
    assert!((row.total_overall.unwrap() - 0.374).abs() < 1e-9);
}

#[test]
fn level_split_matches_hand_partition() {
    // level 1: GL 2/2, CL 1/2; level 3: GL 0/1, CL 1/1
    let results = vec![
        synthetic(TaskKind::GenLogical, 1, true),
        synthetic(TaskKind::GenLogical, 1, true),
        synthetic(TaskKind::CodeFromLogical, 1, true),
        synthetic(TaskKind::CodeFromLogical, 1, false),
        synthetic(TaskKind::GenLogical, 3, false),
        synthetic(TaskKind::CodeFromLogical, 3, true),
    ];
    let agg = aggregate(&results);
    let l1 = &agg.by_level[&1];
    assert_eq!(l1.tasks[&TaskKind::GenLogical], 1.0);
    assert_eq!(l1.tasks[&TaskKind::CodeFromLogical], 0.5);
    assert_eq!(l1.total_overall, Some(0.75));
    let l3 = &agg.by_level[&3];
    assert_eq!(l3.total_overall, Some(0.5));
    assert_eq!(agg.overall.tasks[&TaskKind::GenLogical], 2.0 / 3.0);
    assert_eq!(agg.overall.circuit_overall, Some(2.0 / 3.0));
    assert!(!agg.by_level.contains_key(&2));
    assert_eq!(success_rate(&results), 4.0 / 6.0);
}

fn with_report(task: TaskKind, redundant: usize) -> SampleResult {
    let mut r = synthetic(task, 2, true);
    r.validation = Some(ValidationReport::from_findings(
        (0..redundant)
            .map(|_| Finding {
                category: ErrorCategory::RedundantConnection,
                subject: "a <-> b".into(),
                note: String::new(),
            })
            .collect(),
    ));
    r
}

#[test]
fn error_means() {
    let mut results: Vec<SampleResult> = [0, 0, 1, 1].iter().map(|&k| with_report(TaskKind::GenLogical, k)).collect();
    // no report: left out of the means
    results.push(synthetic(TaskKind::GenLogical, 2, false));
    results.push(with_report(TaskKind::GenPhysical, 0));
    let stats = error_stats(&results);
    assert_eq!(stats.logical.samples, 4);
    assert_eq!(stats.logical.means[&ErrorCategory::RedundantConnection], 0.5);
    assert!(!stats.logical.means.contains_key(&ErrorCategory::PinConflict));
    assert_eq!(stats.physical.samples, 1);
    assert!(stats.physical.means.values().all(|v| *v == 0.0));
    assert_eq!(stats.physical.means.len(), 6);
}

#[test]
fn clean_breakdown_is_flat() {
    let results: Vec<SampleResult> = (0..4).map(|i| synthetic(TaskKind::GenPhysical, 1, i % 2 == 0)).collect();
    let b = success_breakdown(&results);
    assert_eq!((b.functional, b.no_bypass, b.no_conflict, b.both), (0.5, 0.5, 0.5, 0.5));
}

#[test]
fn report_files_are_written() {
    let projects = load_dataset(&bundled_dataset_root()).unwrap();
    let results: Vec<SampleResult> = projects
        .iter()
        .flat_map(|p| TaskKind::ALL.map(|t| {
            let mut r = synthetic(t, p.level, true);
            r.project = p.id.clone();
            r
        }))
        .collect();
    let report = BenchmarkReport::build("reference".into(), 1, &projects, &results);
    let dir = tempfile::tempdir().unwrap();
    pcbench_harness::report::write_reports(dir.path(), &report, &results).unwrap();
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("| all | 40 | 100.0 | 100.0 | 100.0 | 100.0 | 100.0 | 100.0 | 100.0 |"), "{md}");
    let projects_csv = fs::read_to_string(dir.path().join("projects.csv")).unwrap();
    assert_eq!(projects_csv.lines().count(), projects.len() + 1);
    assert!(projects_csv.starts_with("project,level,logical_components"));
}
