//! Test procedures: timed actions and assertions run against a simulation.
//!
//! ```json
//! {"timeout_ms": 1000,
//!  "steps": [
//!    {"at_ms": 100, "action": {"press": "button1"}},
//!    {"at_ms": 150, "assert": {"led_lit": "led1", "expected": true, "window_ms": 50}}
//!  ]}
//! ```

use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::firmware::{IDLE_LOOP_MICROS, RuntimeErrorKind};
use crate::sim::{Event, SimAction, SimInstance, SimIssue};

#[derive(Debug, Clone, PartialEq)]
pub struct TestProcedure {
    pub timeout_ms: u64,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub at_ms: u64,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Action(SimAction),
    Assert(Assertion),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub check: Check,
    pub window_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    LedLit { component: String, expected: bool },
    PinLevel { pin: String, expected: bool },
    SerialContains { text: String },
    SerialLineEquals { index: usize, text: String },
    ServoAngle { component: String, degrees: f64, tolerance: f64 },
    BuzzerActive { component: String, expected: bool },
    SevenSegmentShows { component: String, digit: u8 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TestProcError {
    #[error("malformed test procedure JSON: {0}")]
    Json(String),
    #[error("{0}")]
    Schema(String),
    #[error("step {step}: {message}")]
    Step { step: usize, message: String },
    #[error("step {step} at {at_ms} ms comes before the previous step at {previous_ms} ms")]
    Order { step: usize, at_ms: u64, previous_ms: u64 },
    #[error("timeout {timeout_ms} ms is earlier than the last step at {last_ms} ms")]
    Timeout { timeout_ms: u64, last_ms: u64 },
}

const ACTION_KINDS: [&str; 5] = ["press", "release", "set_sensor", "set_analog", "serial_send"];
const ASSERT_KINDS: [&str; 7] = [
    "led_lit",
    "pin_level",
    "serial_contains",
    "serial_line_equals",
    "servo_angle",
    "buzzer_active",
    "seven_segment_shows",
];

pub fn parse_testproc(text: &str) -> Result<TestProcedure, TestProcError> {
    let root: Value = serde_json::from_str(text).map_err(|e| TestProcError::Json(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| TestProcError::Schema("top level must be an object".into()))?;
    for key in obj.keys() {
        if key != "timeout_ms" && key != "steps" {
            return Err(TestProcError::Schema(format!("unknown field `{key}`")));
        }
    }
    let timeout_ms = obj
        .get("timeout_ms")
        .and_then(Value::as_u64)
        .ok_or_else(|| TestProcError::Schema("`timeout_ms` must be a non-negative integer".into()))?;
    let raw_steps = obj
        .get("steps")
        .and_then(Value::as_array)
        .ok_or_else(|| TestProcError::Schema("`steps` must be an array".into()))?;

    let mut steps = Vec::with_capacity(raw_steps.len());
    for (i, raw) in raw_steps.iter().enumerate() {
        let step = parse_step(raw).map_err(|message| TestProcError::Step { step: i, message })?;
        if let Some(prev) = steps.last().map(|s: &Step| s.at_ms) {
            if step.at_ms < prev {
                return Err(TestProcError::Order {
                    step: i,
                    at_ms: step.at_ms,
                    previous_ms: prev,
                });
            }
        }
        steps.push(step);
    }
    if let Some(last) = steps.last() {
        if timeout_ms < last.at_ms {
            return Err(TestProcError::Timeout {
                timeout_ms,
                last_ms: last.at_ms,
            });
        }
    }
    Ok(TestProcedure { timeout_ms, steps })
}

fn parse_step(raw: &Value) -> Result<Step, String> {
    let obj = raw.as_object().ok_or("step must be an object")?;
    let at_ms = obj
        .get("at_ms")
        .and_then(Value::as_u64)
        .ok_or("`at_ms` must be a non-negative integer")?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "at_ms" | "action" | "assert") {
            return Err(format!("unknown field `{key}`"));
        }
    }
    let payload = match (obj.get("action"), obj.get("assert")) {
        (Some(a), None) => Payload::Action(parse_action(a)?),
        (None, Some(a)) => Payload::Assert(parse_assertion(a)?),
        (Some(_), Some(_)) => return Err("step has both `action` and `assert`".into()),
        (None, None) => return Err("step needs `action` or `assert`".into()),
    };
    Ok(Step { at_ms, payload })
}

/// Field access for one action or assertion object.
struct Fields<'a> {
    obj: &'a Map<String, Value>,
    kind: &'static str,
}

impl<'a> Fields<'a> {
    fn open(raw: &'a Value, kinds: &[&'static str], what: &str, extra: &[&str]) -> Result<Self, String> {
        let obj = raw.as_object().ok_or_else(|| format!("{what} must be an object"))?;
        let present: Vec<&'static str> = kinds.iter().copied().filter(|k| obj.contains_key(*k)).collect();
        let kind = match present.as_slice() {
            [k] => *k,
            [] => {
                let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
                return Err(format!("unknown {what} kind (fields: {})", keys.join(", ")));
            }
            _ => return Err(format!("{what} names more than one kind: {}", present.join(", "))),
        };
        for key in obj.keys() {
            if key != kind && !extra.contains(&key.as_str()) {
                return Err(format!("unexpected field `{key}` in {kind}"));
            }
        }
        Ok(Fields { obj, kind })
    }

    fn str(&self, key: &str) -> Result<String, String> {
        self.obj
            .get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| format!("{}: `{key}` must be a string", self.kind))
    }

    fn bool(&self, key: &str) -> Result<bool, String> {
        self.obj
            .get(key)
            .and_then(Value::as_bool)
            .ok_or_else(|| format!("{}: `{key}` must be a boolean", self.kind))
    }

    fn num(&self, key: &str) -> Result<f64, String> {
        self.obj
            .get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| format!("{}: `{key}` must be a number", self.kind))
    }

    fn uint(&self, key: &str) -> Result<u64, String> {
        self.obj
            .get(key)
            .and_then(Value::as_u64)
            .ok_or_else(|| format!("{}: `{key}` must be a non-negative integer", self.kind))
    }

    fn opt_num(&self, key: &str, default: f64) -> Result<f64, String> {
        match self.obj.get(key) {
            None => Ok(default),
            Some(_) => self.num(key),
        }
    }
}

fn parse_action(raw: &Value) -> Result<SimAction, String> {
    let extra = ["field", "value", "volts"];
    let f = Fields::open(raw, &ACTION_KINDS, "action", &extra)?;
    let subject = f.str(f.kind)?;
    let allowed: &[&str] = match f.kind {
        "set_sensor" => &["field", "value"],
        "set_analog" => &["volts"],
        _ => &[],
    };
    if let Some(k) = f.obj.keys().find(|k| *k != f.kind && !allowed.contains(&k.as_str())) {
        return Err(format!("unexpected field `{k}` in {}", f.kind));
    }
    Ok(match f.kind {
        "press" => SimAction::Press { component: subject },
        "release" => SimAction::Release { component: subject },
        "set_sensor" => SimAction::SetSensor {
            component: subject,
            field: f.str("field")?,
            value: f.num("value")?,
        },
        "set_analog" => SimAction::SetAnalog {
            component: subject,
            volts: f.num("volts")?,
        },
        "serial_send" => SimAction::SerialSend { text: subject },
        _ => unreachable!("kind comes from ACTION_KINDS"),
    })
}

fn parse_assertion(raw: &Value) -> Result<Assertion, String> {
    let extra = ["expected", "index", "degrees", "tolerance", "digit", "window_ms"];
    let f = Fields::open(raw, &ASSERT_KINDS, "assertion", &extra)?;
    let allowed: &[&str] = match f.kind {
        "led_lit" | "pin_level" | "buzzer_active" => &["expected"],
        "serial_line_equals" => &["index"],
        "servo_angle" => &["degrees", "tolerance"],
        "seven_segment_shows" => &["digit"],
        _ => &[],
    };
    if let Some(k) = f
        .obj
        .keys()
        .find(|k| *k != f.kind && *k != "window_ms" && !allowed.contains(&k.as_str()))
    {
        return Err(format!("unexpected field `{k}` in {}", f.kind));
    }
    let subject = f.str(f.kind)?;
    let check = match f.kind {
        "led_lit" => Check::LedLit {
            component: subject,
            expected: f.bool("expected")?,
        },
        "pin_level" => Check::PinLevel {
            pin: subject,
            expected: f.bool("expected")?,
        },
        "serial_contains" => Check::SerialContains { text: subject },
        "serial_line_equals" => Check::SerialLineEquals {
            index: f.uint("index")? as usize,
            text: subject,
        },
        "servo_angle" => {
            let tolerance = f.opt_num("tolerance", 0.0)?;
            if tolerance < 0.0 {
                return Err("servo_angle: `tolerance` must be ≥ 0".into());
            }
            Check::ServoAngle {
                component: subject,
                degrees: f.num("degrees")?,
                tolerance,
            }
        }
        "buzzer_active" => Check::BuzzerActive {
            component: subject,
            expected: f.bool("expected")?,
        },
        "seven_segment_shows" => {
            let digit = f.uint("digit")?;
            if digit > 9 {
                return Err("seven_segment_shows: `digit` must be 0-9".into());
            }
            Check::SevenSegmentShows {
                component: subject,
                digit: digit as u8,
            }
        }
        _ => unreachable!("kind comes from ASSERT_KINDS"),
    };
    let window_ms = match f.obj.get("window_ms") {
        None => 0,
        Some(_) => f.uint("window_ms")?,
    };
    Ok(Assertion { check, window_ms })
}

impl TestProcedure {
    /// The procedure in its JSON form; parses back to an equal value.
    pub fn to_json(&self) -> Value {
        let steps: Vec<Value> = self.steps.iter().map(Step::to_json).collect();
        json!({"timeout_ms": self.timeout_ms, "steps": steps})
    }

    pub fn assertion_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s.payload, Payload::Assert(_))).count()
    }
}

impl Step {
    fn to_json(&self) -> Value {
        match &self.payload {
            Payload::Action(a) => json!({"at_ms": self.at_ms, "action": action_json(a)}),
            Payload::Assert(a) => {
                let mut body = check_json(&a.check);
                if a.window_ms > 0 {
                    body["window_ms"] = json!(a.window_ms);
                }
                json!({"at_ms": self.at_ms, "assert": body})
            }
        }
    }
}

fn action_json(a: &SimAction) -> Value {
    match a {
        SimAction::Press { component } => json!({"press": component}),
        SimAction::Release { component } => json!({"release": component}),
        SimAction::SetSensor { component, field, value } => {
            json!({"set_sensor": component, "field": field, "value": value})
        }
        SimAction::SetAnalog { component, volts } => json!({"set_analog": component, "volts": volts}),
        SimAction::SerialSend { text } => json!({"serial_send": text}),
    }
}

fn check_json(c: &Check) -> Value {
    match c {
        Check::LedLit { component, expected } => json!({"led_lit": component, "expected": expected}),
        Check::PinLevel { pin, expected } => json!({"pin_level": pin, "expected": expected}),
        Check::SerialContains { text } => json!({"serial_contains": text}),
        Check::SerialLineEquals { index, text } => json!({"serial_line_equals": text, "index": index}),
        Check::ServoAngle {
            component,
            degrees,
            tolerance,
        } => json!({"servo_angle": component, "degrees": degrees, "tolerance": tolerance}),
        Check::BuzzerActive { component, expected } => json!({"buzzer_active": component, "expected": expected}),
        Check::SevenSegmentShows { component, digit } => json!({"seven_segment_shows": component, "digit": digit}),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedStep {
    pub step: usize,
    pub at_ms: u64,
    pub assertion: Value,
    pub observed: Value,
    pub expected: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    pub failed_steps: Vec<FailedStep>,
    pub sim_errors: Vec<SimIssue>,
    /// The firmware exhausted its step budget without letting time pass.
    pub timed_out: bool,
    #[serde(skip)]
    pub trace: Vec<Event>,
}

impl Verdict {
    /// A failed verdict for a run that could not start.
    pub fn setup_failure(message: impl Into<String>) -> Verdict {
        Verdict {
            passed: false,
            failed_steps: Vec::new(),
            sim_errors: vec![SimIssue::Setup { message: message.into() }],
            timed_out: false,
            trace: Vec::new(),
        }
    }

    pub fn trace_jsonl(&self) -> String {
        crate::sim::events_to_jsonl(&self.trace)
    }
}

/// Runs `procedure` against a fresh simulation.
///
/// Actions at a timestamp apply in listed order before assertions at that
/// timestamp. An assertion with a window passes if it holds at any instant
/// in `[at, at + window]`; the window is explored on a copy of the
/// simulation so later steps see the undisturbed timeline.
pub fn run_procedure(procedure: &TestProcedure, mut sim: SimInstance) -> Verdict {
    let mut failed_steps = Vec::new();
    for (i, step) in procedure.steps.iter().enumerate() {
        let at_us = step.at_ms * 1000;
        sim.advance(at_us);
        match &step.payload {
            Payload::Action(action) => sim.schedule(at_us, action.clone()),
            Payload::Assert(assertion) => {
                if let Err((observed, expected)) = check_window(&sim, assertion) {
                    failed_steps.push(FailedStep {
                        step: i,
                        at_ms: step.at_ms,
                        assertion: check_json(&assertion.check),
                        observed,
                        expected,
                    });
                }
            }
        }
    }
    sim.advance(procedure.timeout_ms * 1000);

    let timed_out = sim
        .machine()
        .error()
        .is_some_and(|e| matches!(e.kind, RuntimeErrorKind::StepBudget(_)));
    let sim_errors = sim.issues().to_vec();
    Verdict {
        passed: failed_steps.is_empty() && sim_errors.is_empty() && !timed_out,
        failed_steps,
        sim_errors,
        timed_out,
        trace: sim.events().to_vec(),
    }
}

fn check_window(sim: &SimInstance, assertion: &Assertion) -> Result<(), (Value, Value)> {
    let first = evaluate(sim, &assertion.check);
    if first.is_ok() || assertion.window_ms == 0 {
        return first;
    }
    let end = sim.now_us() + assertion.window_ms * 1000;
    let mut probe = sim.clone();
    while probe.now_us() <= end {
        let now = probe.now_us();
        let next = probe
            .next_wake()
            .filter(|&t| t > now)
            .unwrap_or(now + IDLE_LOOP_MICROS)
            .min(end + 1);
        probe.advance(next);
        if evaluate(&probe, &assertion.check).is_ok() {
            return Ok(());
        }
    }
    first
}

/// Checks one assertion now; on failure returns (observed, expected).
fn evaluate(sim: &SimInstance, check: &Check) -> Result<(), (Value, Value)> {
    let err = |e: crate::sim::SimError| json!({"error": e.to_string()});
    match check {
        Check::LedLit { component, expected } => match sim.led_lit(component) {
            Ok(v) if v == *expected => Ok(()),
            Ok(v) => Err((json!(v), json!(expected))),
            Err(e) => Err((err(e), json!(expected))),
        },
        Check::PinLevel { pin, expected } => match sim.pin_level(pin) {
            Ok(v) if v == *expected => Ok(()),
            Ok(v) => Err((json!(v), json!(expected))),
            Err(e) => Err((err(e), json!(expected))),
        },
        Check::BuzzerActive { component, expected } => match sim.buzzer_active(component) {
            Ok(v) if v == *expected => Ok(()),
            Ok(v) => Err((json!(v), json!(expected))),
            Err(e) => Err((err(e), json!(expected))),
        },
        Check::SerialContains { text } => {
            let out = sim.serial_output();
            if out.contains(text.as_str()) {
                Ok(())
            } else {
                Err((json!(out), json!({"contains": text})))
            }
        }
        Check::SerialLineEquals { index, text } => {
            let line = sim.serial_output().split('\n').nth(*index).map(|l| l.trim_end_matches('\r'));
            if line == Some(text.as_str()) {
                Ok(())
            } else {
                Err((json!(line), json!(text)))
            }
        }
        Check::ServoAngle {
            component,
            degrees,
            tolerance,
        } => match sim.servo_angle(component) {
            Ok(Some(a)) if (a as f64 - degrees).abs() <= *tolerance => Ok(()),
            Ok(a) => Err((json!(a), json!({"degrees": degrees, "tolerance": tolerance}))),
            Err(e) => Err((err(e), json!(degrees))),
        },
        Check::SevenSegmentShows { component, digit } => match sim.seven_segment_digit(component) {
            Ok(Some(d)) if d == *digit => Ok(()),
            Ok(d) => Err((json!(d), json!(digit))),
            Err(e) => Err((err(e), json!(digit))),
        },
    }
}
