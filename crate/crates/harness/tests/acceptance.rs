//! Acceptance criteria, one line each. Runs as a plain binary so the lines
//! print under `cargo test` without `--nocapture`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::time::{Duration, Instant};

use pcbench_core::netlist::point_of;
use pcbench_core::validate::ErrorCategory;
use pcbench_core::{
    build_nets, new_sim, parse_program, run_procedure, validate, BoardProfile, CircuitDoc, CircuitKind, ComponentDecl,
    Connection, Endpoint, Rail, StaticBridgeTable,
};
use pcbench_harness::report::{success_breakdown, write_reports, BenchmarkReport, REPORT_FILES};
use pcbench_harness::{
    aggregate, bundled_dataset_root, evaluate_sample, load_dataset, run_benchmark, run_trials, EvalConfig, Filters,
    ProjectBundle, ReplayAdapter, RunPlan, SampleResult, TaskKind, DEFAULT_TRIALS,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const BREADBOARD_LIMIT: Duration = Duration::from_secs(1);
const ORACLE_LIMIT: Duration = Duration::from_secs(5);
const FIXED_POINT_LIMIT: Duration = Duration::from_secs(30);
const SUITE_LIMIT: Duration = Duration::from_secs(60);
const RANDOM_CIRCUITS: usize = 200;
const ARITHMETIC_TOLERANCE: f64 = 0.001;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn corpus() -> Result<Vec<ProjectBundle>, String> {
    load_dataset(&bundled_dataset_root()).map_err(|e| e.to_string())
}

fn board(components: &mut Vec<ComponentDecl>) {
    components.push(ComponentDecl::new("breadboard1", "Breadboard"));
}

// 1. Every hole and rail position gets its own probe wire; the resulting
// nets must match the strip rules exactly.
fn breadboard_rules() -> Outcome {
    let start = Instant::now();
    let mut components = Vec::new();
    board(&mut components);
    let mut connections = Vec::new();
    let mut expected: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut n = 0;
    let mut probe = |target: Endpoint, group: String, components: &mut Vec<ComponentDecl>| {
        n += 1;
        let id = format!("probe{n}");
        components.push(ComponentDecl::new(id.clone(), "Probe"));
        connections.push(Connection::new(Endpoint::pin(id.clone(), "x"), target));
        expected.entry(group).or_default().insert(format!("{id}.x"));
    };
    for column in 1..=60u8 {
        for row in 'a'..='j' {
            let half = if row <= 'e' { "top" } else { "bottom" };
            probe(Endpoint::hole("breadboard1", column, row), format!("{column}/{half}"), &mut components);
        }
    }
    for rail in Rail::ALL {
        for index in 1..=50u8 {
            probe(Endpoint::rail("breadboard1", rail, index), rail.as_str().to_string(), &mut components);
        }
    }
    let doc = CircuitDoc {
        kind: CircuitKind::Physical,
        components,
        connections,
    };
    let got = build_nets(&doc, &StaticBridgeTable::standard()).component_pin_partition();
    let want: BTreeSet<BTreeSet<String>> = expected.into_values().collect();
    let elapsed = start.elapsed();
    ensure(got == want, || {
        let wrong = want.symmetric_difference(&got).next().map(|s| format!("{s:?}")).unwrap_or_default();
        format!("{} nets, expected {}; first mismatch {wrong}", got.len(), want.len())
    })?;
    within(elapsed, BREADBOARD_LIMIT)?;
    Ok(format!("{n} probes, {} strips and rails, {elapsed:.2?}", want.len()))
}

const KINDS: [(&str, &[&str]); 5] = [
    ("LED", &["anode", "cathode"]),
    ("Resistor", &["pin1", "pin2"]),
    ("Push button", &["pin1.l", "pin1.r", "pin2.l", "pin2.r"]),
    ("Servo", &["pwm", "v+", "gnd"]),
    ("Potentiometer", &["vcc", "sig", "gnd"]),
];

fn random_circuit(rng: &mut StdRng) -> CircuitDoc {
    let mut components = Vec::new();
    board(&mut components);
    let parts = rng.random_range(1..=9);
    let kinds: Vec<usize> = (0..parts).map(|_| rng.random_range(0..KINDS.len())).collect();
    for (i, k) in kinds.iter().enumerate() {
        components.push(ComponentDecl::new(format!("part{}", i + 1), KINDS[*k].0));
    }
    let endpoint = |rng: &mut StdRng| match rng.random_range(0..3) {
        0 => {
            let c = rng.random_range(0..parts);
            let pins = KINDS[kinds[c]].1;
            Endpoint::pin(format!("part{}", c + 1), pins[rng.random_range(0..pins.len())])
        }
        1 => Endpoint::hole("breadboard1", rng.random_range(1..=6), (b'a' + rng.random_range(0..10u8)) as char),
        _ => Endpoint::rail("breadboard1", Rail::ALL[rng.random_range(0..4)], rng.random_range(1..=5)),
    };
    let wires = rng.random_range(0..=40);
    let mut connections = Vec::new();
    for _ in 0..wires {
        let (a, b) = (endpoint(rng), endpoint(rng));
        if a != b {
            connections.push(Connection::new(a, b));
        }
    }
    CircuitDoc {
        kind: CircuitKind::Physical,
        components,
        connections,
    }
}

/// Strip, rail or internal bridge shared by two endpoints, from the rules.
fn joined(circuit: &CircuitDoc, a: &Endpoint, b: &Endpoint) -> bool {
    match (a, b) {
        (Endpoint::Hole { column: ca, row: ra, .. }, Endpoint::Hole { column: cb, row: rb, .. }) => {
            ca == cb && ((*ra <= 'e') == (*rb <= 'e'))
        }
        (Endpoint::RailPos { rail: ra, .. }, Endpoint::RailPos { rail: rb, .. }) => ra == rb,
        (Endpoint::Pin { component: ca, pin: pa }, Endpoint::Pin { component: cb, pin: pb }) if ca == cb => {
            let pair = |x: &str, y: &str| (pa == x && pb == y) || (pa == y && pb == x);
            match circuit.component(ca).map(|c| c.type_name.as_str()) {
                Some("Resistor") => pair("pin1", "pin2"),
                Some("Push button") => pair("pin1.l", "pin1.r") || pair("pin2.l", "pin2.r"),
                _ => false,
            }
        }
        _ => false,
    }
}

fn bfs_labels(circuit: &CircuitDoc) -> Vec<(Endpoint, usize)> {
    let mut nodes: BTreeSet<Endpoint> = circuit.endpoints().cloned().collect();
    for c in &circuit.components {
        let pins: &[&str] = match c.type_name.as_str() {
            "Resistor" => &["pin1", "pin2"],
            "Push button" => &["pin1.l", "pin1.r", "pin2.l", "pin2.r"],
            _ => &[],
        };
        if nodes.iter().any(|e| e.component_id() == c.id) {
            nodes.extend(pins.iter().map(|p| Endpoint::pin(c.id.clone(), p)));
        }
    }
    let nodes: Vec<Endpoint> = nodes.into_iter().collect();
    let mut adj = vec![Vec::new(); nodes.len()];
    let idx = |e: &Endpoint| nodes.binary_search(e).expect("node present");
    for c in &circuit.connections {
        let (a, b) = (idx(&c.a), idx(&c.b));
        adj[a].push(b);
        adj[b].push(a);
    }
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if joined(circuit, &nodes[i], &nodes[j]) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut label = vec![usize::MAX; nodes.len()];
    for start in 0..nodes.len() {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if label[m] == usize::MAX {
                    label[m] = start;
                    queue.push_back(m);
                }
            }
        }
    }
    nodes.into_iter().zip(label).collect()
}

// 2. The two labelings must induce the same equivalence relation.
fn net_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let bridges = StaticBridgeTable::standard();
    let mut endpoints = 0;
    for case in 0..RANDOM_CIRCUITS {
        let circuit = random_circuit(&mut rng);
        let partition = build_nets(&circuit, &bridges);
        let mut fwd: HashMap<usize, Option<usize>> = HashMap::new();
        let mut back: HashMap<Option<usize>, usize> = HashMap::new();
        for (i, (ep, bfs)) in bfs_labels(&circuit).into_iter().enumerate() {
            endpoints += 1;
            // endpoints absent from the partition are singletons
            let net = partition.net_of(&point_of(&ep)).map(|n| n.0).or(Some(usize::MAX - i));
            let consistent = *fwd.entry(bfs).or_insert(net) == net && *back.entry(net).or_insert(bfs) == bfs;
            ensure(consistent, || format!("case {case}: {ep} disagrees with the BFS oracle"))?;
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, ORACLE_LIMIT)?;
    Ok(format!("{RANDOM_CIRCUITS} circuits, {endpoints} endpoints agree, {elapsed:.2?}"))
}

fn clean_fixture() -> CircuitDoc {
    let mut components = vec![ComponentDecl::new("arduino1", "Arduino Uno")];
    board(&mut components);
    let mut connections = Vec::new();
    let bb = "breadboard1";
    for i in 1..=3u8 {
        components.push(ComponentDecl::new(format!("led{i}"), "LED"));
        components.push(ComponentDecl::new(format!("resistor{i}"), "Resistor"));
        let c = 10 * i;
        let mut wire = |a: Endpoint, b: Endpoint| connections.push(Connection::new(a, b));
        wire(Endpoint::pin("arduino1", format!("pin{}", 8 + i)), Endpoint::hole(bb, c, 'a'));
        wire(Endpoint::pin(format!("resistor{i}"), "pin1"), Endpoint::hole(bb, c, 'b'));
        wire(Endpoint::pin(format!("resistor{i}"), "pin2"), Endpoint::hole(bb, c + 2, 'b'));
        wire(Endpoint::pin(format!("led{i}"), "anode"), Endpoint::hole(bb, c + 2, 'c'));
        wire(Endpoint::pin(format!("led{i}"), "cathode"), Endpoint::hole(bb, c + 4, 'c'));
        wire(Endpoint::hole(bb, c + 4, 'a'), Endpoint::rail(bb, Rail::Tn, i));
    }
    connections.push(Connection::new(Endpoint::pin("arduino1", "gnd1"), Endpoint::rail("breadboard1", Rail::Tn, 20)));
    CircuitDoc {
        kind: CircuitKind::Physical,
        components,
        connections,
    }
}

fn inject(clean: &CircuitDoc, category: ErrorCategory, k: u8) -> CircuitDoc {
    let mut doc = clean.clone();
    let bb = "breadboard1";
    for i in 1..=k {
        match category {
            ErrorCategory::RedundantConnection => {
                let dup = clean.connections[usize::from(i - 1) * 6].clone();
                doc.connections.push(dup);
            }
            ErrorCategory::ExtraneousComponent => {
                let id = format!("extra{i}");
                doc.components.push(ComponentDecl::new(id.clone(), "Buzzer"));
                doc.connections.push(Connection::new(Endpoint::pin(id, "pin1"), Endpoint::hole(bb, 40 + i, 'a')));
            }
            ErrorCategory::MissingComponent => {
                let id = format!("led{i}");
                doc.components.retain(|c| c.id != id);
                doc.connections.retain(|c| c.a.component_id() != id && c.b.component_id() != id);
            }
            ErrorCategory::IsolatedComponent => {
                let id = format!("led{i}");
                doc.connections.retain(|c| c.a.component_id() != id && c.b.component_id() != id);
            }
            ErrorCategory::PinConflict => {
                let pin = Endpoint::pin("arduino1", format!("pin{}", 8 + i));
                doc.connections.push(Connection::new(pin, Endpoint::hole(bb, 50 + i, 'a')));
            }
            ErrorCategory::BreadboardBypass => {
                doc.connections.push(Connection::new(
                    Endpoint::pin("arduino1", format!("pin{}", 1 + i)),
                    Endpoint::pin("arduino1", format!("a{i}")),
                ));
            }
        }
    }
    doc
}

// 3. k seeded instances of one category give count k there and 0 elsewhere.
fn validator_injection() -> Outcome {
    let clean = clean_fixture();
    let base = validate(&clean, &clean, CircuitKind::Physical);
    ensure(base.is_clean(), || format!("fixture is not clean: {:?}", base.findings))?;
    let mut passed = 0;
    let mut failures = Vec::new();
    for category in ErrorCategory::ALL {
        for k in 1..=3u8 {
            let report = validate(&inject(&clean, category, k), &clean, CircuitKind::Physical);
            let ok = ErrorCategory::ALL.iter().all(|c| {
                let want = if *c == category { usize::from(k) } else { 0 };
                report.count(*c) == want
            });
            if ok {
                passed += 1;
            } else {
                failures.push(format!("{category} k={k}: {:?}", report.counts));
            }
        }
    }
    ensure(failures.is_empty(), || format!("{passed}/18; {}", failures.join("; ")))?;
    Ok(format!("{passed}/18 cases"))
}

fn reference_text(p: &ProjectBundle, task: TaskKind) -> &str {
    match task {
        TaskKind::GenLogical => &p.logical_text,
        TaskKind::GenPhysical => &p.physical_text,
        _ => &p.code,
    }
}

// 4.
fn reference_fixed_point() -> Outcome {
    let start = Instant::now();
    let projects = corpus()?;
    let profile = BoardProfile::arduino_uno();
    let mut n = 0;
    for p in &projects {
        for task in TaskKind::ALL {
            let r = evaluate_sample(p, task, 1, reference_text(p, task), &profile);
            ensure(r.gated_success, || format!("{} {task} fails", p.id))?;
            n += 1;
        }
    }
    let levels: BTreeSet<u8> = projects.iter().map(|p| p.level).collect();
    ensure(levels.len() == 4, || format!("corpus covers levels {levels:?}"))?;
    let elapsed = start.elapsed();
    within(elapsed, FIXED_POINT_LIMIT)?;
    Ok(format!("{n}/{n} samples across {} projects, {elapsed:.2?}", projects.len()))
}

fn run_reference(p: &ProjectBundle, circuit: &CircuitDoc, code: &str) -> Result<(bool, String), String> {
    let program = parse_program(code).map_err(|e| format!("{}: {e}", p.id))?;
    let sim = new_sim(circuit, &program, &BoardProfile::arduino_uno()).map_err(|e| format!("{}: {e}", p.id))?;
    let v = run_procedure(&p.testproc, sim);
    Ok((v.passed, v.trace_jsonl()))
}

/// Rebases event times on the first event so logs compare independent of
/// absolute start time.
fn normalize_times(jsonl: &str) -> String {
    let events: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).expect("event json")).collect();
    let t0 = events.first().and_then(|e| e["t_us"].as_u64()).unwrap_or(0);
    let mut out = String::new();
    for mut e in events {
        let t = e["t_us"].as_u64().unwrap_or(0);
        e["t_us"] = (t - t0).into();
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

// 5.
fn logical_physical_equivalence() -> Outcome {
    let mut events = 0;
    let projects = corpus()?;
    for p in &projects {
        let (lp, l) = run_reference(p, &p.logical, &p.code)?;
        let (pp, ph) = run_reference(p, &p.physical, &p.code)?;
        ensure(lp && pp, || format!("{}: reference fails", p.id))?;
        ensure(!l.is_empty(), || format!("{}: no observable events", p.id))?;
        ensure(normalize_times(&l) == normalize_times(&ph), || format!("{}: event logs differ", p.id))?;
        events += l.lines().count();
    }
    Ok(format!("{} projects, {events} events byte-identical", projects.len()))
}

// 6. Blink's physical layout plus one extra wire from the LED pin to a
// free hole: still blinks, one pin conflict.
fn gating_rule() -> Outcome {
    let projects = corpus()?;
    let p = projects.iter().find(|p| p.id == "blink").ok_or("no blink project")?;
    let mut doc: serde_json::Value = serde_json::from_str(&p.physical_text).map_err(|e| e.to_string())?;
    let used = p
        .physical
        .connections
        .iter()
        .flat_map(|c| c.endpoints())
        .find(|e| e.component_id() == "arduino1" && e.is_component_pin())
        .ok_or("no arduino pin in blink")?
        .to_string();
    doc["connections"]
        .as_array_mut()
        .ok_or("connections is not an array")?
        .push(serde_json::json!([used, "breadboard1.60j"]));
    let r = evaluate_sample(p, TaskKind::GenPhysical, 1, &doc.to_string(), &BoardProfile::arduino_uno());
    let conflicts = r.validation.as_ref().map_or(0, |v| v.count(ErrorCategory::PinConflict));
    ensure(conflicts == 1, || format!("{conflicts} pin conflicts"))?;
    ensure(r.filters.functional && !r.gated_success, || {
        format!("functional={} gated={}", r.filters.functional, r.gated_success)
    })?;
    let b = success_breakdown(std::slice::from_ref(&r));
    let row = (b.functional, b.no_bypass, b.no_conflict, b.both);
    ensure(row == (1.0, 1.0, 0.0, 0.0), || format!("breakdown {row:?}"))?;
    Ok("functional=true gated=false breakdown (1,1,0,0)".into())
}

fn synthetic(task: TaskKind, success: bool) -> SampleResult {
    let mut verdict = pcbench_core::Verdict::setup_failure("synthetic");
    verdict.passed = success;
    verdict.sim_errors.clear();
    SampleResult {
        project: "synthetic".into(),
        level: 1,
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

// 7.
fn table_arithmetic() -> Outcome {
    let mut results = Vec::new();
    for (task, ok) in [
        (TaskKind::GenLogical, 480),
        (TaskKind::GenPhysical, 12),
        (TaskKind::CodeFromLogical, 492),
        (TaskKind::CodeFromPhysical, 512),
    ] {
        results.extend((0..1000).map(|i| synthetic(task, i < ok)));
    }
    let row = aggregate(&results).overall;
    let got = [row.circuit_overall, row.code_overall, row.total_overall].map(|x| x.unwrap_or(f64::NAN));
    let want = [0.246, 0.502, 0.374];
    ensure(got.iter().zip(want).all(|(g, w)| (g - w).abs() <= ARITHMETIC_TOLERANCE), || {
        format!("got {got:?}, want {want:?}")
    })?;
    Ok(format!(
        "circuit {:.3} code {:.3} total {:.3} (tolerance {ARITHMETIC_TOLERANCE})",
        got[0], got[1], got[2]
    ))
}

fn drop_pair(doc: &CircuitDoc, pair: &[String; 2]) -> Result<CircuitDoc, String> {
    let mut out = doc.clone();
    out.connections.retain(|c| {
        let (a, b) = (c.a.to_string(), c.b.to_string());
        !((a == pair[0] && b == pair[1]) || (a == pair[1] && b == pair[0]))
    });
    ensure(out.connections.len() + 1 == doc.connections.len(), || format!("{pair:?} names no single connection"))?;
    Ok(out)
}

// 8.
fn mutation_sensitivity() -> Outcome {
    let projects = corpus()?;
    let mut killed = 0;
    for p in &projects {
        let m = p.mutants.as_ref().ok_or_else(|| format!("{}: no documented mutants", p.id))?;
        ensure(p.code.contains(&m.firmware.from), || format!("{}: firmware edit does not apply", p.id))?;
        let code = p.code.replacen(&m.firmware.from, &m.firmware.to, 1);
        let cases = [
            ("firmware on L", run_reference(p, &p.logical, &code)?),
            ("firmware on P", run_reference(p, &p.physical, &code)?),
            ("dropped L wire", run_reference(p, &drop_pair(&p.logical, &m.logical_drop)?, &p.code)?),
            ("dropped P wire", run_reference(p, &drop_pair(&p.physical, &m.physical_drop)?, &p.code)?),
        ];
        for (name, (passed, _)) in cases {
            ensure(!passed, || format!("{}: {name} mutant passes", p.id))?;
            killed += 1;
        }
    }
    Ok(format!("{killed}/{killed} mutants fail, 0 false passes"))
}

// 9.
fn trial_protocol() -> Outcome {
    let projects = corpus()?;
    let p = projects.iter().find(|p| p.id == "blink").ok_or("no blink project")?;
    let adapter = ReplayAdapter::new(bundled_dataset_root().join("replay"));
    let out = run_trials(p, TaskKind::CodeFromLogical, &adapter, DEFAULT_TRIALS, &EvalConfig::default());
    ensure(DEFAULT_TRIALS == 5 && out.results.len() == 5, || format!("{} trials", out.results.len()))?;
    ensure(out.rate == 0.6, || format!("rate {}", out.rate))?;
    Ok(format!("n={DEFAULT_TRIALS}, 3 passing replay files give {}", out.rate))
}

fn full_replay_run(parallelism: usize) -> Result<BTreeMap<&'static str, Vec<u8>>, String> {
    let projects = corpus()?;
    let adapter = ReplayAdapter::new(bundled_dataset_root().join("replay"));
    let plan = RunPlan {
        parallelism,
        ..RunPlan::default()
    };
    let results = run_benchmark(&projects, &adapter, &plan, &EvalConfig::default());
    let report = BenchmarkReport::build("replay".into(), plan.trials, &projects, &results);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_reports(dir.path(), &report, &results).map_err(|e| e.to_string())?;
    REPORT_FILES
        .iter()
        .map(|name| Ok((*name, fs::read(dir.path().join(name)).map_err(|e| e.to_string())?)))
        .collect()
}

// 10. Second run uses a different worker count, so scheduling differs too.
fn determinism(suite_start: Instant) -> Outcome {
    let a = full_replay_run(1)?;
    let b = full_replay_run(4)?;
    for (name, bytes) in &a {
        ensure(b.get(name) == Some(bytes), || format!("{name} differs between runs"))?;
    }
    let elapsed = suite_start.elapsed();
    within(elapsed, SUITE_LIMIT)?;
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} report files ({bytes} bytes) identical; suite {elapsed:.2?}", a.len()))
}

fn main() {
    let suite_start = Instant::now();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("breadboard rule conformance", Box::new(breadboard_rules)),
        ("net oracle equivalence", Box::new(net_oracle)),
        ("validator injection", Box::new(validator_injection)),
        ("reference fixed point", Box::new(reference_fixed_point)),
        ("logical/physical simulation equivalence", Box::new(logical_physical_equivalence)),
        ("gating rule", Box::new(gating_rule)),
        ("overall-rate arithmetic", Box::new(table_arithmetic)),
        ("mutation sensitivity", Box::new(mutation_sensitivity)),
        ("trial protocol", Box::new(trial_protocol)),
        ("determinism", Box::new(move || determinism(suite_start))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
