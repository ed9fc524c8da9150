use super::*;
use crate::circuit::{parse_circuit, CircuitKind};
use crate::firmware::parse_program;

fn circuit(json: &str) -> CircuitDoc {
    parse_circuit(json, CircuitKind::Logical).unwrap()
}

fn sim(json: &str, firmware: &str) -> SimInstance {
    let program = parse_program(firmware).unwrap();
    new_sim(&circuit(json), &program, &BoardProfile::arduino_uno()).unwrap()
}

const BLINK_CIRCUIT: &str = r#"{
  "components": [
    {"id": "arduino1", "type": "Arduino Uno"},
    {"id": "led1", "type": "LED"},
    {"id": "resistor1", "type": "Resistor", "properties": {"resistance": "220"}}
  ],
  "connections": [
    ["arduino1.pin13", "resistor1.pin1"],
    ["resistor1.pin2", "led1.anode"],
    ["led1.cathode", "arduino1.GND"]
  ]
}"#;

const BLINK: &str = "
void setup() { pinMode(13, OUTPUT); }
void loop() {
  digitalWrite(13, HIGH);
  delay(500);
  digitalWrite(13, LOW);
  delay(500);
}";

const BUTTON_CIRCUIT: &str = r#"{
  "components": [
    {"id": "arduino1", "type": "Arduino Uno"},
    {"id": "button1", "type": "Push button"},
    {"id": "led1", "type": "LED"}
  ],
  "connections": [
    ["arduino1.pin2", "button1.pin1.l"],
    ["button1.pin2.r", "arduino1.gnd2"],
    ["arduino1.pin9", "led1.anode"],
    ["led1.cathode", "arduino1.gnd1"]
  ]
}"#;

const BUTTON_FW: &str = "
void setup() { pinMode(2, INPUT_PULLUP); pinMode(9, OUTPUT); }
void loop() {
  if (digitalRead(2) == LOW) { digitalWrite(9, HIGH); } else { digitalWrite(9, LOW); }
  delay(10);
}";

#[test]
fn blink_toggles_led_through_resistor() {
    let mut s = sim(BLINK_CIRCUIT, BLINK);
    s.advance(100_000);
    assert!(s.led_lit("led1").unwrap());
    s.advance(600_000);
    assert!(!s.led_lit("led1").unwrap());
    s.advance(1_100_000);
    assert!(s.led_lit("led1").unwrap());
    let leds: Vec<_> = s.events().iter().filter(|e| e.kind == EventKind::Led).collect();
    assert_eq!(leds.len(), 3);
    assert_eq!(leds[0].t_us, 0);
    assert_eq!(leds[1].t_us, 500_000);
    assert_eq!(leds[2].t_us, 1_000_000);
    assert!(s.issues().is_empty());
}

#[test]
fn blink_touches_two_nets_on_the_board() {
    let s = sim(BLINK_CIRCUIT, BLINK);
    let touching = s
        .partition()
        .nets()
        .filter(|(_, pts)| pts.iter().any(|p| p.component_pin().is_some_and(|(c, _)| c == "arduino1")))
        .count();
    assert_eq!(touching, 2);
}

#[test]
fn reversed_led_stays_dark() {
    let json = BLINK_CIRCUIT
        .replace("\"resistor1.pin2\", \"led1.anode\"", "\"resistor1.pin2\", \"led1.cathode\"")
        .replace("\"led1.cathode\", \"arduino1.GND\"", "\"led1.anode\", \"arduino1.GND\"");
    let mut s = sim(&json, BLINK);
    s.advance(100_000);
    assert!(!s.led_lit("led1").unwrap());
}

#[test]
fn button_with_pullup() {
    let mut s = sim(BUTTON_CIRCUIT, BUTTON_FW);
    s.advance(50_000);
    assert!(!s.led_lit("led1").unwrap());
    assert!(s.pin_level("pin2").unwrap());
    s.apply(&SimAction::Press { component: "button1".into() }).unwrap();
    assert!(!s.pin_level("pin2").unwrap());
    s.advance(100_000);
    assert!(s.led_lit("led1").unwrap());
    s.schedule(150_000, SimAction::Release { component: "button1".into() });
    s.advance(200_000);
    assert!(!s.led_lit("led1").unwrap());
}

#[test]
fn floating_input_without_pullup_reads_low() {
    let fw = BUTTON_FW.replace("INPUT_PULLUP", "INPUT");
    let mut s = sim(BUTTON_CIRCUIT, &fw);
    s.advance(50_000);
    // floating reads LOW, so the LED turns on without a press
    assert!(s.led_lit("led1").unwrap());
}

#[test]
fn output_short_is_a_conflict() {
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"}],
        "connections":[["arduino1.pin7","arduino1.gnd1"]]}"#;
    let fw = "void setup() { pinMode(7, OUTPUT); digitalWrite(7, HIGH); } void loop() { delay(100); }";
    let mut s = sim(json, fw);
    s.advance(1000);
    assert_eq!(s.issues().len(), 1);
    assert!(matches!(s.issues()[0], SimIssue::Conflict { .. }));
    assert!(s.events().iter().any(|e| e.kind == EventKind::Conflict));
}

#[test]
fn pull_resistors_are_weak() {
    // pin4 pulled down through a resistor, pin5 drives the same LED net
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},
        {"id":"resistor1","type":"Resistor"},{"id":"led1","type":"LED"}],
        "connections":[["arduino1.pin5","led1.anode"],["led1.anode","resistor1.pin1"],
        ["resistor1.pin2","arduino1.gnd1"],["led1.cathode","arduino1.gnd2"]]}"#;
    let fw = "void setup() { pinMode(5, OUTPUT); digitalWrite(5, HIGH); } void loop() { delay(100); }";
    let mut s = sim(json, fw);
    s.advance(1000);
    assert!(s.led_lit("led1").unwrap());
    assert!(s.issues().is_empty());
}

#[test]
fn servo_and_potentiometer() {
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},
        {"id":"servo1","type":"Servo"},{"id":"potentiometer1","type":"Potentiometer"}],
        "connections":[["arduino1.pin9","servo1.pwm"],["servo1.v+","arduino1.5v"],["servo1.gnd","arduino1.gnd1"],
        ["potentiometer1.vcc","arduino1.5v"],["potentiometer1.gnd","arduino1.gnd2"],["potentiometer1.sig","arduino1.A0"]]}"#;
    let fw = "void setup() { servoAttach(9); }
        void loop() { int v = analogRead(A0); servoWrite(9, map(v, 0, 1023, 0, 180)); delay(20); }";
    let mut s = sim(json, fw);
    assert_eq!(s.servo_angle("servo1").unwrap(), None);
    s.advance(100_000);
    assert_eq!(s.servo_angle("servo1").unwrap(), Some(0));
    s.apply(&SimAction::SetAnalog { component: "potentiometer1".into(), volts: 2.5 }).unwrap();
    s.advance(200_000);
    // 2.5 V reads 511, mapped to 89
    assert_eq!(s.servo_angle("servo1").unwrap(), Some(89));
    assert!(s.led_lit("servo1").is_err());
}

#[test]
fn unpowered_servo_reports_no_angle() {
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"servo1","type":"Servo"}],
        "connections":[["arduino1.pin9","servo1.pwm"],["servo1.gnd","arduino1.gnd1"]]}"#;
    let mut s = sim(json, "void setup() { servoAttach(9); servoWrite(9, 45); } void loop() { delay(10); }");
    s.advance(50_000);
    assert_eq!(s.servo_angle("servo1").unwrap(), None);
}

#[test]
fn buzzer_tone() {
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"buzzer1","type":"Piezo Buzzer"}],
        "connections":[["arduino1.pin8","buzzer1.pin1"],["buzzer1.pin2","arduino1.gnd1"]]}"#;
    let fw = "void setup() {} void loop() { tone(8, 440); delay(100); noTone(8); delay(100); }";
    let mut s = sim(json, fw);
    s.advance(50_000);
    assert!(s.buzzer_active("buzzer1").unwrap());
    s.advance(150_000);
    assert!(!s.buzzer_active("buzzer1").unwrap());
}

#[test]
fn seven_segment_digit() {
    let mut conns = vec![r#"["sevseg1.com","arduino1.gnd1"]"#.to_string()];
    for (i, seg) in ["a", "b", "c", "d", "e", "f", "g"].iter().enumerate() {
        conns.push(format!(r#"["arduino1.pin{}","sevseg1.{seg}"]"#, i + 2));
    }
    let json = format!(
        r#"{{"components":[{{"id":"arduino1","type":"Arduino Uno"}},{{"id":"sevseg1","type":"7-segment display"}}],
        "connections":[{}]}}"#,
        conns.join(",")
    );
    // digit 7 lights a, b, c on pins 2, 3, 4
    let fw = "void setup() { for (int p = 2; p <= 8; p++) { pinMode(p, OUTPUT); }
        digitalWrite(2, HIGH); digitalWrite(3, HIGH); digitalWrite(4, HIGH); } void loop() { delay(100); }";
    let mut s = sim(&json, fw);
    s.advance(1000);
    assert_eq!(s.seven_segment_digit("sevseg1").unwrap(), Some(7));
}

#[test]
fn dht_and_serial() {
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"dht1","type":"DHT22"}],
        "connections":[["dht1.vcc","arduino1.5v"],["dht1.gnd","arduino1.gnd1"],["dht1.sda","arduino1.pin2"]]}"#;
    let fw = r#"void setup() { Serial.begin(9600); }
        void loop() {
          if (Serial.available() > 0) {
            String cmd = Serial.readLine();
            if (cmd == "t") { Serial.println(dhtRead(2, TEMPERATURE)); }
          }
          delay(50);
        }"#;
    let mut s = sim(json, fw);
    s.schedule(100_000, SimAction::SerialSend { text: "t".into() });
    s.schedule(
        200_000,
        SimAction::SetSensor { component: "dht1".into(), field: "temperature".into(), value: 30.5 },
    );
    s.schedule(300_000, SimAction::SerialSend { text: "t".into() });
    s.advance(400_000);
    assert_eq!(s.serial_output(), "24.00\n30.50\n");
}

#[test]
fn unwired_dht_reads_nan() {
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"dht1","type":"DHT22"}],"connections":[]}"#;
    let fw = "void setup() { float t = dhtRead(2, TEMPERATURE); if (t != t) { Serial.print(\"nan\"); } } void loop() { delay(10); }";
    let mut s = sim(json, fw);
    s.advance(1000);
    assert_eq!(s.serial_output(), "nan");
}

#[test]
fn rgb_and_bar_graph_channels() {
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"rgb_led1","type":"RGB LED"},
        {"id":"bar_graph1","type":"LED bar graph"}],
        "connections":[["arduino1.pin9","rgb_led1.g"],["rgb_led1.com","arduino1.gnd1"],
        ["arduino1.pin4","bar_graph1.a3"],["bar_graph1.c3","arduino1.gnd2"]]}"#;
    let fw = "void setup() { analogWrite(9, 128); pinMode(4, OUTPUT); digitalWrite(4, HIGH); } void loop() { delay(10); }";
    let mut s = sim(json, fw);
    s.advance(1000);
    assert!(s.led_lit("rgb_led1.g").unwrap());
    assert!(!s.led_lit("rgb_led1.r").unwrap());
    assert!(s.led_lit("rgb_led1").unwrap());
    assert!(s.led_lit("bar_graph1.3").unwrap());
    assert!(!s.led_lit("bar_graph1.4").unwrap());
}

#[test]
fn runtime_error_is_recorded_and_halts() {
    let mut s = sim(BLINK_CIRCUIT, "void setup() {} void loop() { int z = 0; int x = 1 / z; }");
    s.advance(1000);
    assert_eq!(s.issues().len(), 1);
    assert!(matches!(s.issues()[0], SimIssue::Runtime { .. }));
    s.advance(2000);
    assert_eq!(s.issues().len(), 1);
    assert_eq!(s.now_us(), 2000);
}

#[test]
fn invalid_hal_pin_is_runtime_error() {
    let mut s = sim(BLINK_CIRCUIT, "void setup() { pinMode(40, OUTPUT); } void loop() {}");
    s.advance(10);
    assert!(matches!(&s.issues()[0], SimIssue::Runtime { message, .. } if message.contains("pin 40")));
}

#[test]
fn construction_errors() {
    let program = parse_program(BLINK).unwrap();
    let uno = BoardProfile::arduino_uno();
    let bad_pin = circuit(
        r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"led1","type":"LED"}],
        "connections":[["arduino1.pin42","led1.anode"]]}"#,
    );
    assert!(matches!(new_sim(&bad_pin, &program, &uno), Err(SimError::UnknownPin { .. })));
    let bad_led = circuit(
        r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"led1","type":"LED"}],
        "connections":[["arduino1.pin4","led1.plus"]]}"#,
    );
    assert!(matches!(new_sim(&bad_led, &program, &uno), Err(SimError::UnknownPin { .. })));
    let unknown = circuit(r#"{"components":[{"id":"lcd1","type":"LCD 16x2"}],"connections":[]}"#);
    assert!(matches!(new_sim(&unknown, &program, &uno), Err(SimError::UnsupportedComponent { .. })));
    let two = circuit(
        r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"arduino2","type":"Arduino Uno"}],"connections":[]}"#,
    );
    assert!(matches!(new_sim(&two, &program, &uno), Err(SimError::MultipleMicrocontrollers(_))));
}

#[test]
fn physical_breadboard_circuit() {
    let json = r#"{"components":[{"id":"arduino1","type":"Arduino Uno"},{"id":"breadboard1","type":"Breadboard"},
        {"id":"led1","type":"LED"},{"id":"resistor1","type":"Resistor"}],
        "connections":[["arduino1.pin13","breadboard1.10a"],["resistor1.pin1","breadboard1.10c"],
        ["resistor1.pin2","breadboard1.14c"],["led1.anode","breadboard1.14e"],["led1.cathode","breadboard1.15e"],
        ["breadboard1.15a","breadboard1.tn.1"],["breadboard1.tn.20","arduino1.gnd1"]]}"#;
    let doc = parse_circuit(json, CircuitKind::Physical).unwrap();
    let program = parse_program(BLINK).unwrap();
    let mut s = new_sim(&doc, &program, &BoardProfile::arduino_uno()).unwrap();
    s.advance(100_000);
    assert!(s.led_lit("led1").unwrap());
}

#[test]
fn clones_run_independently_and_deterministically() {
    let mut a = sim(BUTTON_CIRCUIT, BUTTON_FW);
    a.advance(30_000);
    let mut b = a.clone();
    b.apply(&SimAction::Press { component: "button1".into() }).unwrap();
    b.advance(60_000);
    a.advance(60_000);
    assert!(b.led_lit("led1").unwrap());
    assert!(!a.led_lit("led1").unwrap());

    let mut c = sim(BUTTON_CIRCUIT, BUTTON_FW);
    c.advance(30_000);
    c.apply(&SimAction::Press { component: "button1".into() }).unwrap();
    c.advance(60_000);
    assert_eq!(c.event_log_jsonl(), b.event_log_jsonl());
}

#[test]
fn event_log_is_json_lines() {
    let mut s = sim(BLINK_CIRCUIT, BLINK);
    s.advance(1_200_000);
    let log = s.event_log_jsonl();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "led");
    assert_eq!(first["subject"], "led1");
    assert_eq!(first["value"], true);
}
