use std::collections::{BTreeMap, VecDeque};

use super::*;

/// Minimal HAL that records every call.
#[derive(Default)]
struct TraceHal {
    now: u64,
    trace: Vec<String>,
    levels: BTreeMap<i64, bool>,
    serial_in: VecDeque<String>,
    serial_out: String,
}

impl Hal for TraceHal {
    fn pin_mode(&mut self, pin: i64, mode: PinMode) -> Result<(), HalError> {
        self.trace.push(format!("{} pin_mode {pin} {mode:?}", self.now));
        Ok(())
    }
    fn digital_write(&mut self, pin: i64, high: bool) -> Result<(), HalError> {
        self.trace.push(format!("{} write {pin} {high}", self.now));
        self.levels.insert(pin, high);
        Ok(())
    }
    fn digital_read(&mut self, pin: i64) -> Result<bool, HalError> {
        if pin == 99 {
            return Err(HalError("no pin 99".into()));
        }
        Ok(self.levels.get(&pin).copied().unwrap_or(false))
    }
    fn analog_read(&mut self, _pin: i64) -> Result<i64, HalError> {
        Ok(512)
    }
    fn analog_write(&mut self, pin: i64, duty: i64) -> Result<(), HalError> {
        self.trace.push(format!("{} pwm {pin} {duty}", self.now));
        Ok(())
    }
    fn now_micros(&self) -> u64 {
        self.now
    }
    fn sleep(&mut self, micros: u64) {
        self.now += micros;
    }
    fn serial_write(&mut self, text: &str) {
        self.trace.push(format!("{} serial {text:?}", self.now));
        self.serial_out.push_str(text);
    }
    fn serial_available(&self) -> i64 {
        self.serial_in.front().map_or(0, |s| s.len() as i64 + 1)
    }
    fn serial_read_line(&mut self) -> String {
        self.serial_in.pop_front().unwrap_or_default()
    }
    fn tone(&mut self, pin: i64, hz: i64) -> Result<(), HalError> {
        self.trace.push(format!("{} tone {pin} {hz}", self.now));
        Ok(())
    }
    fn no_tone(&mut self, pin: i64) -> Result<(), HalError> {
        self.trace.push(format!("{} notone {pin}", self.now));
        Ok(())
    }
    fn servo_attach(&mut self, pin: i64) -> Result<(), HalError> {
        self.trace.push(format!("{} attach {pin}", self.now));
        Ok(())
    }
    fn servo_write(&mut self, pin: i64, degrees: i64) -> Result<(), HalError> {
        self.trace.push(format!("{} servo {pin} {degrees}", self.now));
        Ok(())
    }
    fn read_dht(&mut self, _pin: i64, field: DhtField) -> Result<f64, HalError> {
        Ok(match field {
            DhtField::Temperature => 24.5,
            DhtField::Humidity => 40.0,
        })
    }
}

const BLINK: &str = "\
// Blink an LED on pin 13
void setup() {
  pinMode(13, OUTPUT);
}

void loop() {
  digitalWrite(13, HIGH);
  delay(500);
  digitalWrite(13, LOW);
  delay(500);
}
";

fn run(src: &str, t_end: u64) -> (TraceHal, Result<RunReport, RuntimeError>) {
    let prog = parse_program(src).unwrap();
    let mut m = prog.machine();
    let mut hal = TraceHal::default();
    let r = m.run_until(&mut hal, t_end);
    (hal, r)
}

fn output(src: &str) -> String {
    let (hal, r) = run(src, 0);
    r.unwrap();
    hal.serial_out
}

#[test]
fn blink_parses_into_two_functions() {
    let p = parse_program(BLINK).unwrap();
    assert_eq!(p.functions().len(), 2);
    assert!(p.function("setup").is_some());
    assert!(p.function("loop").is_some());
}

#[test]
fn empty_source_is_missing_setup() {
    assert_eq!(parse_program("").unwrap_err(), FirmwareError::MissingFunction { name: "setup" });
}

#[test]
fn syntax_error_points_at_offending_token() {
    let err = parse_program("void setup() {\n  int x = 2;\n  if (x > 1 {\n  }\n}\nvoid loop() {}").unwrap_err();
    match err {
        FirmwareError::Syntax { pos, message } => {
            assert_eq!(pos, Pos { line: 3, col: 13 });
            assert!(message.contains("`)`"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn duplicate_and_unknown_names() {
    let err = parse_program("void setup(){}\nvoid loop(){}\nvoid loop(){}").unwrap_err();
    assert!(matches!(err, FirmwareError::DuplicateFunction { ref name, pos: Pos { line: 3, .. } } if name == "loop"));
    let err = parse_program("void setup(){ y = 1; }\nvoid loop(){}").unwrap_err();
    assert!(matches!(err, FirmwareError::Resolve { pos: Pos { line: 1, col: 15 }, .. }), "{err:?}");
    assert!(parse_program("void setup(){ foo(); }\nvoid loop(){}").is_err());
    assert!(parse_program("void setup(){ HIGH = 2; }\nvoid loop(){}").is_err());
    assert!(parse_program("const int P = 3;\nvoid setup(){ P = 2; }\nvoid loop(){}").is_err());
    assert!(parse_program("void setup(){ break; }\nvoid loop(){}").is_err());
    assert!(parse_program("void setup(){ digitalWrite(1); }\nvoid loop(){}").is_err());
    assert!(parse_program("void setup(int x){}\nvoid loop(){}").is_err());
}

#[test]
fn delay_loop_entry_count() {
    let (_, r) = run("void setup(){}\nvoid loop(){ delay(500); }", 1_600_000);
    assert_eq!(r.unwrap().loop_entries, 4);
}

#[test]
fn zero_end_time_runs_setup_only() {
    let (hal, r) = run("void setup(){ Serial.print(\"hi\"); }\nvoid loop(){ Serial.print(\"x\"); }", 0);
    let r = r.unwrap();
    assert_eq!(r.loop_entries, 0);
    assert_eq!(r.phase, Phase::Loop);
    assert_eq!(hal.trace.iter().filter(|t| t.contains("serial")).count(), 1);
}

#[test]
fn blink_trace_is_deterministic_and_timed() {
    let (a, _) = run(BLINK, 2_000_000);
    let (b, _) = run(BLINK, 2_000_000);
    assert_eq!(a.trace, b.trace);
    assert_eq!(
        &a.trace[..5],
        &[
            "0 pin_mode 13 Output",
            "0 write 13 true",
            "500000 write 13 false",
            "1000000 write 13 true",
            "1500000 write 13 false",
        ]
    );
    assert_eq!(a.now, 2_000_000);
}

#[test]
fn run_until_resumes_inside_delay() {
    let prog = parse_program("void setup(){ delay(100); Serial.print(\"a\"); }\nvoid loop(){ delay(1000); }").unwrap();
    let mut m = prog.machine();
    let mut hal = TraceHal::default();
    m.run_until(&mut hal, 50_000).unwrap();
    assert_eq!(hal.serial_out, "");
    assert_eq!(m.pending_wake(), Some(100_000));
    m.run_until(&mut hal, 100_000).unwrap();
    // code scheduled exactly at t_end has not run yet
    assert_eq!(hal.serial_out, "");
    m.run_until(&mut hal, 100_001).unwrap();
    assert_eq!(hal.serial_out, "a");
    assert_eq!(m.loop_entries(), 1);
}

#[test]
fn idle_loop_advances_clock() {
    let (hal, r) = run("int n = 0;\nvoid setup(){}\nvoid loop(){ n++; }", 1000);
    assert_eq!(r.unwrap().loop_entries, 10);
    assert_eq!(hal.now, 1000);
}

#[test]
fn runaway_loop_hits_step_budget() {
    let prog = parse_program("void setup(){ while (true) { } }\nvoid loop(){}").unwrap();
    let mut m = prog.machine().with_step_budget(10_000);
    let mut hal = TraceHal::default();
    let err = m.run_until(&mut hal, 1000).unwrap_err();
    assert_eq!(err.kind, RuntimeErrorKind::StepBudget(10_000));
    assert!(m.is_halted());
    // later calls are inert
    assert!(m.run_until(&mut hal, 5000).is_ok());
    // a polling loop that lets time pass is not runaway
    let prog = parse_program("void setup(){}\nvoid loop(){ int i = 0; while (i < 50) { i++; } }").unwrap();
    let mut m = prog.machine().with_step_budget(1000);
    assert!(m.run_until(&mut TraceHal::default(), 1_000_000).is_ok());
}

#[test]
fn delay_zero_does_not_count_as_progress() {
    let prog = parse_program("void setup(){}\nvoid loop(){ delay(0); }").unwrap();
    let mut m = prog.machine().with_step_budget(100);
    let mut hal = TraceHal::default();
    m.run_until(&mut hal, 10_000).unwrap();
    assert_eq!(hal.now, 10_000);
}

#[test]
fn clock_observed_by_program_never_decreases() {
    let (hal, r) = run(
        "unsigned long last = 0;\nvoid setup(){}\nvoid loop(){\n unsigned long t = micros();\n if (t < last) { Serial.print(\"back\"); }\n last = t;\n delay(3);\n}",
        200_000,
    );
    r.unwrap();
    assert_eq!(hal.serial_out, "");
}

#[test]
fn runtime_errors_carry_positions() {
    let (_, r) = run("void setup(){\n  int z = 0;\n  int y = 5 / z;\n}\nvoid loop(){}", 0);
    let err = r.unwrap_err();
    assert_eq!(err.kind, RuntimeErrorKind::DivisionByZero);
    assert_eq!(err.pos, Pos { line: 3, col: 7 });
    let (_, r) = run("void setup(){ String s = \"a\"; int n = s - 1; }\nvoid loop(){}", 0);
    assert!(matches!(r.unwrap_err().kind, RuntimeErrorKind::Type(_)));
    let (_, r) = run("int a[3];\nvoid setup(){ a[3] = 1; }\nvoid loop(){}", 0);
    assert!(matches!(r.unwrap_err().kind, RuntimeErrorKind::IndexOutOfBounds { index: 3, len: 3 }));
    let (_, r) = run("int f(int n){ return f(n + 1); }\nvoid setup(){ f(0); }\nvoid loop(){}", 0);
    assert_eq!(r.unwrap_err().kind, RuntimeErrorKind::StackOverflow);
    let (_, r) = run("void setup(){ digitalRead(99); }\nvoid loop(){}", 0);
    assert!(matches!(r.unwrap_err().kind, RuntimeErrorKind::Hal(_)));
}

#[test]
fn language_features() {
    let src = r#"
const int PINS[] = {2, 3, 4};
int total = 0;

int square(int x) { return x * x; }

float half(int x) { return x / 2.0; }

void setup() {
  for (int i = 0; i < 3; i++) {
    if (i == 1) continue;
    total += PINS[i];
  }
  Serial.println(total);
  int k = 0;
  while (true) {
    k++;
    if (k >= 5) break;
  }
  Serial.println(k);
  do { k -= 2; } while (k > 0);
  Serial.println(k);
  Serial.println(square(7));
  Serial.println(half(5));
  Serial.println(7 / 2);
  Serial.println(7 % 3);
  Serial.println(-7 / 2);
  Serial.println((int) 3.9);
  Serial.println(int(2.5) + 1);
  Serial.println(map(512, 0, 1023, 0, 180));
  Serial.println(constrain(300, 0, 255));
  Serial.println(true ? "yes" : "no");
  Serial.println(1 << 4 | 1);
  String s = "v=" + String(3) + ";";
  Serial.println(s);
  Serial.println(s.length());
  Serial.println(" 42 ".toInt());
  Serial.println(dhtRead(2, "temperature"));
  Serial.println(dhtRead(2, HUMIDITY), 1);
  switch (k) {
    case -1:
      Serial.println("neg");
    case 0:
      Serial.println("fall");
      break;
    default:
      Serial.println("other");
  }
  bool b = 5;
  Serial.println(b);
  long big = 100000L * 100000L;
  Serial.println(big);
}

void loop() {}
"#;
    assert_eq!(
        output(src),
        "6\n5\n-1\n49\n2.50\n3\n1\n-3\n3\n3\n90\n255\nyes\n17\nv=3;\n4\n42\n24.50\n40.0\nneg\nfall\n1\n10000000000\n"
    );
}

#[test]
fn serial_input_round_trip() {
    let prog = parse_program(
        "void setup(){ Serial.begin(9600); }\nvoid loop(){ if (Serial.available() > 0) { String l = Serial.readLine(); Serial.println(l.toInt() * 2); } delay(10); }",
    )
    .unwrap();
    let mut m = prog.machine();
    let mut hal = TraceHal::default();
    hal.serial_in.push_back("21".into());
    m.run_until(&mut hal, 50_000).unwrap();
    assert_eq!(hal.serial_out, "42\n");
}

#[test]
fn cyclomatic_by_definition() {
    let p = parse_program(BLINK).unwrap();
    assert_eq!(cyclomatic_complexity(&p), 1);
    let p = parse_program(
        "int x = 0;\nvoid setup(){ if (x) {} if (x > 2) {} else {} while (x < 0) {} }\nvoid loop(){}",
    )
    .unwrap();
    assert_eq!(cyclomatic_complexity(&p), 4);
    let p = parse_program(
        "int x = 0;\nvoid setup(){ if (x && x || x) {} else if (x) {} for (;;) { break; } x = x ? 1 : 2; }\nvoid loop(){}",
    )
    .unwrap();
    // if, &&, ||, else-if, for, ternary
    assert_eq!(cyclomatic_complexity(&p), 7);
}

#[test]
fn lines_of_code_by_definition() {
    assert_eq!(lines_of_code(""), 0);
    assert_eq!(lines_of_code("a;\n\nb;\n// note\n\nc;\n"), 3);
    assert_eq!(lines_of_code("/* a\n b */ x;\n"), 1);
    assert_eq!(lines_of_code("s = \"// not a comment\";\n"), 1);
    assert_eq!(lines_of_code("x; /* trailing\n still comment */\n"), 1);
    // blink: 2 signatures, 5 statements, 2 closing braces
    assert_eq!(lines_of_code(BLINK), 9);
}

#[test]
fn trim_and_case_modify_receiver() {
    let src = "String g = \"  Ab \";\nvoid setup(){ Serial.begin(9600); String s = \" x \"; s.trim(); g.toUpperCase(); g.trim(); Serial.println(s + \"|\" + g); String t = \" q \"; Serial.println(t.trim()); }\nvoid loop(){}";
    assert_eq!(output(src), "x|AB\nq\n");
}
