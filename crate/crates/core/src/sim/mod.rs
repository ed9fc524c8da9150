//! Digital-abstraction circuit simulator hosting the firmware interpreter.
//!
//! Nets come from wiring, breadboard strips and conductive component
//! bridges (plus pressed buttons). Push drivers are microcontroller output
//! pins, power pins and powered sensor outputs. Resistors are weak links:
//! a net with no push driver takes the value of a driven net on the other
//! side of a resistor, which is how series and pull resistors behave at
//! the logic level. Resistance values are never consulted.

mod models;
pub mod net;
pub mod profile;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::circuit::{CircuitDoc, CircuitError, Endpoint};
use crate::components::ComponentClass;
use crate::firmware::{DhtField, Hal, HalError, Machine, PinMode, Program, RuntimeError};
use crate::netlist::{build_nets, BridgeKind, ElectricalPoint, NetPartition, PointSets, StaticBridgeTable};

use models::{Model, Part};
pub use net::{resolve_net, Drive, NetValue};
pub use profile::{BoardProfile, PowerLevel, ProfileError};

/// Placeholder owner of board pins when the circuit has no microcontroller.
const DETACHED_MCU: &str = "mcu";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid circuit: {0}")]
    Circuit(#[from] CircuitError),
    #[error("unknown pin `{pin}` on `{component}`")]
    UnknownPin { component: String, pin: String },
    #[error("component `{id}` has unsupported type \"{type_name}\"")]
    UnsupportedComponent { id: String, type_name: String },
    #[error("more than one microcontroller: {0}")]
    MultipleMicrocontrollers(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("`{id}` does not support {what}")]
    Unsupported { id: String, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Led,
    Servo,
    Buzzer,
    Segment,
    Serial,
    Conflict,
    Error,
}

/// One entry of the observable-state log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t_us: u64,
    pub kind: EventKind,
    pub subject: String,
    pub value: serde_json::Value,
}

/// Problems recorded during a run that make it fail regardless of
/// assertions: shorts between push drivers and firmware runtime errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimIssue {
    Conflict { t_us: u64, net: String },
    Runtime { t_us: u64, message: String },
    Action { t_us: u64, message: String },
    /// The run could not start (bad circuit, firmware or board).
    Setup { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SimAction {
    Press { component: String },
    Release { component: String },
    SetSensor { component: String, field: String, value: f64 },
    SetAnalog { component: String, volts: f64 },
    SerialSend { text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    LedLit(String),
    ServoAngle(String),
    SerialOutput,
    PinLevel(String),
    BuzzerActive(String),
    SevenSegmentDigit(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Observation {
    Bool(bool),
    Angle(Option<i64>),
    Text(String),
    Digit(Option<u8>),
}

#[derive(Debug, Clone, PartialEq, Default)]
struct McuPin {
    mode: Option<PinMode>,
    level: bool,
    duty: Option<i64>,
    tone: Option<i64>,
    servo: Option<i64>,
}

impl McuPin {
    fn drive(&self) -> Option<Drive> {
        if self.mode != Some(PinMode::Output) {
            return None;
        }
        Some(Drive::Level(if self.tone.is_some() {
            true
        } else if let Some(d) = self.duty {
            d > 0
        } else {
            self.level
        }))
    }
}

/// Net assignment for one combination of pressed buttons.
#[derive(Debug)]
struct NetMap {
    of_point: Vec<usize>,
    count: usize,
    label: Vec<String>,
}

/// Circuit structure fixed at construction, shared between clones.
#[derive(Debug)]
struct Topology {
    base: PointSets,
    parts: Vec<Part>,
    buttons: Vec<usize>,
    resistors: Vec<(usize, usize)>,
    mcu: String,
    mcu_points: BTreeMap<String, usize>,
    power: Vec<(usize, bool)>,
    profile: BoardProfile,
    partition: NetPartition,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Observables {
    leds: BTreeMap<String, bool>,
    servos: BTreeMap<String, Option<i64>>,
    buzzers: BTreeMap<String, bool>,
    segments: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
struct SimState {
    topo: Arc<Topology>,
    now: u64,
    pins: BTreeMap<String, McuPin>,
    pressed: Vec<bool>,
    volts: BTreeMap<String, f64>,
    dht: BTreeMap<String, (f64, f64)>,
    serial_in: String,
    serial_out: String,
    net_cache: HashMap<Vec<bool>, Arc<NetMap>>,
    netmap: Arc<NetMap>,
    values: Vec<NetValue>,
    tones: Vec<Option<i64>>,
    conflicts: BTreeSet<String>,
    observed: Observables,
    events: Vec<Event>,
    issues: Vec<SimIssue>,
    scheduled: BTreeMap<(u64, u64), SimAction>,
    schedule_seq: u64,
    started: bool,
}

/// A running simulation: circuit, board, firmware and virtual clock.
#[derive(Debug, Clone)]
pub struct SimInstance {
    machine: Machine,
    state: SimState,
}

pub const DEFAULT_TEMPERATURE_C: f64 = 24.0;
pub const DEFAULT_HUMIDITY_PCT: f64 = 40.0;

pub fn new_sim(circuit: &CircuitDoc, program: &Program, profile: &BoardProfile) -> Result<SimInstance, SimError> {
    new_sim_with(circuit, program, profile, &StaticBridgeTable::standard())
}

pub fn new_sim_with(
    circuit: &CircuitDoc,
    program: &Program,
    profile: &BoardProfile,
    bridges: &StaticBridgeTable,
) -> Result<SimInstance, SimError> {
    circuit.check_invariants()?;

    let mut mcu = None;
    for c in &circuit.components {
        let class = ComponentClass::classify(&c.type_name);
        if class == ComponentClass::Microcontroller {
            if let Some(prev) = mcu.replace(c.id.clone()) {
                return Err(SimError::MultipleMicrocontrollers(format!("{prev}, {}", c.id)));
            }
        } else if class == ComponentClass::Unknown && !bridges.has_bridges(c) {
            return Err(SimError::UnsupportedComponent {
                id: c.id.clone(),
                type_name: c.type_name.clone(),
            });
        }
    }
    let mcu = mcu.unwrap_or_else(|| DETACHED_MCU.to_string());

    // canonicalize board pin names and reject pins no model declares
    let mut canon = circuit.clone();
    for conn in &mut canon.connections {
        for ep in [&mut conn.a, &mut conn.b] {
            if let Endpoint::Pin { component, pin } = ep {
                let decl = circuit.component(component).expect("invariants checked");
                let class = ComponentClass::classify(&decl.type_name);
                let unknown = || SimError::UnknownPin {
                    component: component.clone(),
                    pin: pin.clone(),
                };
                if class == ComponentClass::Microcontroller {
                    *pin = profile.canonical(pin).ok_or_else(unknown)?;
                } else if class == ComponentClass::Unknown {
                    let known = bridges.bridges_for(decl).iter().any(|b| b.pins.contains(pin));
                    if !known {
                        return Err(unknown());
                    }
                } else if !class.pins().contains(pin) {
                    return Err(unknown());
                }
            }
        }
    }

    let mut base = PointSets::default();
    base.add_circuit(&canon, &bridges.conductive_only());
    let mut mcu_points = BTreeMap::new();
    for pin in profile.all_pins() {
        mcu_points.insert(pin.to_string(), base.intern(ElectricalPoint::pin(&mcu, pin)));
    }
    let power = profile
        .power_pins
        .iter()
        .map(|(pin, level)| (mcu_points[pin], *level == PowerLevel::High))
        .collect();

    let mut resistors = Vec::new();
    for c in &canon.components {
        for b in bridges.bridges_for(c) {
            if b.kind == BridgeKind::Resistive {
                let ids: Vec<usize> = b.pins.iter().map(|p| base.intern(ElectricalPoint::pin(&c.id, p))).collect();
                for w in ids.windows(2) {
                    resistors.push((w[0], w[1]));
                }
            }
        }
    }

    let mut parts = Vec::new();
    let mut buttons = Vec::new();
    for c in &canon.components {
        if let Some(model) = Model::build(&c.type_name, |pin| base.intern(ElectricalPoint::pin(&c.id, pin))) {
            if matches!(model, Model::Button { .. }) {
                buttons.push(parts.len());
            }
            parts.push(Part {
                id: c.id.clone(),
                model,
            });
        }
    }

    let topo = Arc::new(Topology {
        base,
        parts,
        resistors,
        mcu,
        mcu_points,
        power,
        profile: profile.clone(),
        partition: build_nets(circuit, bridges),
        buttons: buttons.clone(),
    });
    let pressed = vec![false; buttons.len()];
    let netmap = Arc::new(build_netmap(&topo, &pressed));
    let n = netmap.count;
    let mut net_cache = HashMap::new();
    net_cache.insert(pressed.clone(), netmap.clone());
    let dht = topo
        .parts
        .iter()
        .filter(|p| matches!(p.model, Model::Dht { .. }))
        .map(|p| (p.id.clone(), (DEFAULT_TEMPERATURE_C, DEFAULT_HUMIDITY_PCT)))
        .collect();
    let state = SimState {
        topo,
        now: 0,
        pins: BTreeMap::new(),
        pressed,
        volts: BTreeMap::new(),
        dht,
        serial_in: String::new(),
        serial_out: String::new(),
        net_cache,
        netmap,
        values: vec![NetValue::Floating; n],
        tones: vec![None; n],
        conflicts: BTreeSet::new(),
        observed: Observables::default(),
        events: Vec::new(),
        issues: Vec::new(),
        scheduled: BTreeMap::new(),
        schedule_seq: 0,
        started: false,
    };
    Ok(SimInstance {
        machine: program.machine(),
        state,
    })
}

fn build_netmap(topo: &Topology, pressed: &[bool]) -> NetMap {
    let mut sets = topo.base.clone();
    for (&part, &down) in topo.buttons.iter().zip(pressed) {
        if down {
            if let Model::Button { side1, side2 } = topo.parts[part].model {
                sets.union_ids(side1, side2);
            }
        }
    }
    let mut root_to_net: BTreeMap<usize, usize> = BTreeMap::new();
    let mut of_point = Vec::with_capacity(sets.len());
    let mut label: Vec<String> = Vec::new();
    for i in 0..sets.len() {
        let root = sets.find(i);
        let next = root_to_net.len();
        let net = *root_to_net.entry(root).or_insert(next);
        let name = sets.point(i).to_string();
        if net == label.len() {
            label.push(name);
        } else if name < label[net] {
            label[net] = name;
        }
        of_point.push(net);
    }
    NetMap {
        of_point,
        count: root_to_net.len(),
        label,
    }
}

impl SimState {
    fn net(&self, point: usize) -> usize {
        self.netmap.of_point[point]
    }

    fn value(&self, point: usize) -> NetValue {
        self.values[self.net(point)]
    }

    fn powered(&self, vcc: usize, gnd: usize) -> bool {
        self.value(vcc).is_high() && self.value(gnd).is_low()
    }

    fn push_event(&mut self, kind: EventKind, subject: impl Into<String>, value: serde_json::Value) {
        self.events.push(Event {
            t_us: self.now,
            kind,
            subject: subject.into(),
            value,
        });
    }

    fn pin_name(&self, n: i64) -> Result<String, HalError> {
        self.topo
            .profile
            .pin_for_number(n)
            .map(str::to_string)
            .ok_or_else(|| HalError(format!("pin {n} does not exist on {}", self.topo.profile.name)))
    }

    /// Applies `f` to a board pin and re-resolves the circuit if the pin's
    /// state actually changed.
    fn update_pin(&mut self, n: i64, f: impl FnOnce(&mut McuPin)) -> Result<(), HalError> {
        let name = self.pin_name(n)?;
        let pin = self.pins.entry(name).or_default();
        let before = pin.clone();
        f(pin);
        if *pin != before {
            self.recompute();
        }
        Ok(())
    }

    fn recompute(&mut self) {
        let topo = Arc::clone(&self.topo);
        if let Some(m) = self.net_cache.get(&self.pressed) {
            self.netmap = Arc::clone(m);
        } else {
            let m = Arc::new(build_netmap(&topo, &self.pressed));
            self.net_cache.insert(self.pressed.clone(), Arc::clone(&m));
            self.netmap = m;
        }
        let n = self.netmap.count;
        let mut drivers: Vec<Vec<Drive>> = vec![Vec::new(); n];
        let mut tones = vec![None; n];
        let mut pullup = vec![false; n];
        for &(point, high) in &topo.power {
            drivers[self.net(point)].push(Drive::Level(high));
        }
        for (name, pin) in &self.pins {
            let net = self.net(topo.mcu_points[name]);
            if let Some(d) = pin.drive() {
                drivers[net].push(d);
                if pin.tone.is_some() {
                    tones[net] = pin.tone;
                }
            } else if pin.mode == Some(PinMode::InputPullup) {
                pullup[net] = true;
            }
        }
        self.values = drivers.iter().map(|d| resolve_net(d)).collect();

        // sensor outputs only drive when the sensor is powered
        let half = topo.profile.logic_high_volts / 2.0;
        let mut sensed = false;
        for part in &topo.parts {
            let v = self.volts.get(&part.id).copied().unwrap_or(0.0);
            match part.model {
                Model::Pot { vcc, sig, gnd } if self.powered(vcc, gnd) => {
                    drivers[self.net(sig)].push(Drive::Volts(v));
                    sensed = true;
                }
                Model::Photo { vcc, gnd, ao, dout } if self.powered(vcc, gnd) => {
                    drivers[self.net(ao)].push(Drive::Volts(v));
                    drivers[self.net(dout)].push(Drive::Level(v >= half));
                    sensed = true;
                }
                _ => {}
            }
        }
        if sensed {
            self.values = drivers.iter().map(|d| resolve_net(d)).collect();
        }

        // weak values spread outward through resistors, one ring at a time
        let mut assigned: Vec<bool> = drivers.iter().map(|d| !d.is_empty()).collect();
        for net in 0..n {
            if !assigned[net] && pullup[net] {
                assigned[net] = true;
                self.values[net] = NetValue::DrivenHigh;
            }
        }
        loop {
            let mut proposals: BTreeMap<usize, Vec<Drive>> = BTreeMap::new();
            for &(a, b) in &topo.resistors {
                let (na, nb) = (self.net(a), self.net(b));
                for (from, to) in [(na, nb), (nb, na)] {
                    if from != to && assigned[from] && !assigned[to] {
                        if let Some(d) = self.values[from].as_drive() {
                            proposals.entry(to).or_default().push(d);
                        }
                    }
                }
            }
            if proposals.is_empty() {
                break;
            }
            for (net, ds) in proposals {
                assigned[net] = true;
                // opposing pulls leave the node undefined, not shorted
                self.values[net] = match resolve_net(&ds) {
                    NetValue::Conflict => NetValue::Floating,
                    v => v,
                };
            }
        }
        self.tones = tones;

        let mut now_conflicted = BTreeSet::new();
        for net in 0..n {
            if self.values[net] == NetValue::Conflict {
                now_conflicted.insert(self.netmap.label[net].clone());
            }
        }
        for label in now_conflicted.difference(&self.conflicts).cloned().collect::<Vec<_>>() {
            self.push_event(EventKind::Conflict, label.clone(), json!(true));
            self.issues.push(SimIssue::Conflict {
                t_us: self.now,
                net: label,
            });
        }
        self.conflicts = now_conflicted;

        let obs = self.compute_observables();
        self.emit_changes(obs);
    }

    fn compute_observables(&self) -> Observables {
        let mut o = Observables::default();
        let lit = |anode: usize, cathode: usize| self.value(anode).is_high() && self.value(cathode).is_low();
        for part in &self.topo.parts {
            let id = &part.id;
            match &part.model {
                Model::Led { anode, cathode } => {
                    o.leds.insert(id.clone(), lit(*anode, *cathode));
                }
                Model::Rgb { channels, com } => {
                    for (name, ch) in ["r", "g", "b"].iter().zip(channels) {
                        o.leds.insert(format!("{id}.{name}"), lit(*ch, *com));
                    }
                }
                Model::Bar { anodes, cathodes } => {
                    for (i, (a, c)) in anodes.iter().zip(cathodes).enumerate() {
                        o.leds.insert(format!("{id}.{}", i + 1), lit(*a, *c));
                    }
                }
                Model::Segment { segments, com } => {
                    let pattern: String = models::SEGMENT_NAMES
                        .iter()
                        .zip(segments)
                        .filter(|(_, s)| lit(**s, *com))
                        .map(|(n, _)| *n)
                        .collect::<Vec<_>>()
                        .join("");
                    o.segments.insert(id.clone(), pattern);
                }
                Model::Servo { pwm, vplus, gnd } => {
                    let angle = if self.powered(*vplus, *gnd) {
                        let net = self.net(*pwm);
                        self.pins
                            .iter()
                            .filter(|(name, _)| self.net(self.topo.mcu_points[*name]) == net)
                            .find_map(|(_, p)| p.servo)
                    } else {
                        None
                    };
                    o.servos.insert(id.clone(), angle);
                }
                Model::Buzzer { a, b } => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let active = (va.is_high() && vb.is_low()) || (vb.is_high() && va.is_low());
                    o.buzzers.insert(id.clone(), active);
                }
                Model::Button { .. } | Model::Pot { .. } | Model::Photo { .. } | Model::Dht { .. } => {}
            }
        }
        o
    }

    fn emit_changes(&mut self, obs: Observables) {
        let prev = std::mem::take(&mut self.observed);
        for (k, v) in &obs.leds {
            if prev.leds.get(k).copied().unwrap_or(false) != *v {
                self.push_event(EventKind::Led, k.clone(), json!(v));
            }
        }
        for (k, v) in &obs.servos {
            if prev.servos.get(k).copied().flatten() != *v {
                self.push_event(EventKind::Servo, k.clone(), json!(v));
            }
        }
        for (k, v) in &obs.buzzers {
            if prev.buzzers.get(k).copied().unwrap_or(false) != *v {
                self.push_event(EventKind::Buzzer, k.clone(), json!(v));
            }
        }
        for (k, v) in &obs.segments {
            if prev.segments.get(k).map(String::as_str).unwrap_or("") != v {
                self.push_event(EventKind::Segment, k.clone(), json!(v));
            }
        }
        self.observed = obs;
    }

    fn part(&self, id: &str) -> Result<&Part, SimError> {
        self.topo
            .parts
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| SimError::UnknownComponent(id.to_string()))
    }

    fn apply(&mut self, action: &SimAction) -> Result<(), SimError> {
        let unsupported = |id: &str, what: &str| SimError::Unsupported {
            id: id.to_string(),
            what: what.to_string(),
        };
        match action {
            SimAction::Press { component } | SimAction::Release { component } => {
                let down = matches!(action, SimAction::Press { .. });
                let idx = self.topo.parts.iter().position(|p| p.id == *component);
                let Some(idx) = idx else {
                    return Err(SimError::UnknownComponent(component.clone()));
                };
                let Some(b) = self.topo.buttons.iter().position(|&p| p == idx) else {
                    return Err(unsupported(component, "press/release"));
                };
                if self.pressed[b] != down {
                    self.pressed[b] = down;
                    self.recompute();
                }
            }
            SimAction::SetSensor { component, field, value } => {
                let part = self.part(component)?;
                match (&part.model, field.to_lowercase().as_str()) {
                    (Model::Dht { .. }, "temperature") => {
                        self.dht.entry(component.clone()).or_default().0 = *value;
                    }
                    (Model::Dht { .. }, "humidity") => {
                        self.dht.entry(component.clone()).or_default().1 = *value;
                    }
                    (Model::Pot { .. } | Model::Photo { .. }, "volts" | "value") => {
                        let v = value.clamp(0.0, self.topo.profile.logic_high_volts);
                        self.volts.insert(component.clone(), v);
                        self.recompute();
                    }
                    _ => return Err(unsupported(component, &format!("sensor field `{field}`"))),
                }
            }
            SimAction::SetAnalog { component, volts } => {
                let part = self.part(component)?;
                if !matches!(part.model, Model::Pot { .. } | Model::Photo { .. }) {
                    return Err(unsupported(component, "analog input"));
                }
                let v = volts.clamp(0.0, self.topo.profile.logic_high_volts);
                self.volts.insert(component.clone(), v);
                self.recompute();
            }
            SimAction::SerialSend { text } => {
                self.serial_in.push_str(text);
                if !text.ends_with('\n') {
                    self.serial_in.push('\n');
                }
            }
        }
        Ok(())
    }

    fn apply_logged(&mut self, action: &SimAction) {
        if let Err(e) = self.apply(action) {
            let message = e.to_string();
            self.push_event(EventKind::Error, "action", json!(message));
            self.issues.push(SimIssue::Action {
                t_us: self.now,
                message,
            });
        }
    }

    /// Moves the clock forward, applying scheduled actions on the way.
    fn sleep_to(&mut self, target: u64) {
        while let Some((&(at, seq), _)) = self.scheduled.iter().next() {
            if at > target {
                break;
            }
            let action = self.scheduled.remove(&(at, seq)).expect("present");
            self.now = self.now.max(at);
            self.apply_logged(&action);
        }
        self.now = self.now.max(target);
    }

    fn level_of_point(&self, point: usize) -> bool {
        match self.value(point) {
            NetValue::DrivenHigh => true,
            NetValue::Analog(v) => v >= self.topo.profile.logic_high_volts / 2.0,
            NetValue::DrivenLow | NetValue::Floating | NetValue::Conflict => false,
        }
    }
}

impl Hal for SimState {
    fn pin_mode(&mut self, pin: i64, mode: PinMode) -> Result<(), HalError> {
        self.update_pin(pin, |p| p.mode = Some(mode))
    }

    fn digital_write(&mut self, pin: i64, high: bool) -> Result<(), HalError> {
        self.update_pin(pin, |p| {
            p.level = high;
            p.duty = None;
        })
    }

    fn digital_read(&mut self, pin: i64) -> Result<bool, HalError> {
        let name = self.pin_name(pin)?;
        Ok(self.level_of_point(self.topo.mcu_points[&name]))
    }

    fn analog_read(&mut self, pin: i64) -> Result<i64, HalError> {
        let name = self
            .topo
            .profile
            .analog_pin_for_number(pin)
            .ok_or_else(|| HalError(format!("pin {pin} is not an analog input")))?;
        let high = self.topo.profile.logic_high_volts;
        let volts = match self.value(self.topo.mcu_points[name]) {
            NetValue::DrivenHigh => high,
            NetValue::Analog(v) => v,
            NetValue::DrivenLow | NetValue::Floating | NetValue::Conflict => 0.0,
        };
        Ok(((volts / high * 1023.0).trunc() as i64).clamp(0, 1023))
    }

    fn analog_write(&mut self, pin: i64, duty: i64) -> Result<(), HalError> {
        self.update_pin(pin, |p| {
            p.mode = Some(PinMode::Output);
            p.duty = Some(duty);
            p.tone = None;
        })
    }

    fn now_micros(&self) -> u64 {
        self.now
    }

    fn sleep(&mut self, micros: u64) {
        let target = self.now.saturating_add(micros);
        self.sleep_to(target);
    }

    fn serial_write(&mut self, text: &str) {
        self.serial_out.push_str(text);
        self.push_event(EventKind::Serial, "serial", json!(text));
    }

    fn serial_available(&self) -> i64 {
        self.serial_in.len() as i64
    }

    fn serial_read_line(&mut self) -> String {
        let line = match self.serial_in.find('\n') {
            Some(i) => {
                let rest = self.serial_in.split_off(i + 1);
                std::mem::replace(&mut self.serial_in, rest)
            }
            None => std::mem::take(&mut self.serial_in),
        };
        line.trim_end_matches(['\n', '\r']).to_string()
    }

    fn tone(&mut self, pin: i64, hz: i64) -> Result<(), HalError> {
        self.update_pin(pin, |p| {
            p.mode = Some(PinMode::Output);
            p.tone = Some(hz);
            p.duty = None;
        })
    }

    fn no_tone(&mut self, pin: i64) -> Result<(), HalError> {
        self.update_pin(pin, |p| {
            if p.tone.take().is_some() {
                p.level = false;
            }
        })
    }

    fn servo_attach(&mut self, pin: i64) -> Result<(), HalError> {
        self.update_pin(pin, |p| {
            p.mode = Some(PinMode::Output);
            // the Arduino servo library centres a freshly attached servo
            p.servo.get_or_insert(90);
        })
    }

    fn servo_write(&mut self, pin: i64, degrees: i64) -> Result<(), HalError> {
        let name = self.pin_name(pin)?;
        if self.pins.get(&name).and_then(|p| p.servo).is_none() {
            return Err(HalError(format!("servo on pin {pin} written before servoAttach")));
        }
        self.update_pin(pin, |p| p.servo = Some(degrees))
    }

    fn read_dht(&mut self, pin: i64, field: DhtField) -> Result<f64, HalError> {
        let name = self.pin_name(pin)?;
        let net = self.net(self.topo.mcu_points[&name]);
        for part in &self.topo.parts {
            if let Model::Dht { vcc, sda, gnd } = part.model {
                if self.net(sda) == net && self.powered(vcc, gnd) {
                    let (t, h) = self.dht[&part.id];
                    return Ok(match field {
                        DhtField::Temperature => t,
                        DhtField::Humidity => h,
                    });
                }
            }
        }
        // no sensor answering on this pin; the Arduino library reports NaN
        Ok(f64::NAN)
    }
}

impl SimInstance {
    pub fn now_us(&self) -> u64 {
        self.state.now
    }

    /// Static net partition of the circuit (resistors bridge their pins).
    pub fn partition(&self) -> &NetPartition {
        &self.state.topo.partition
    }

    /// Id of the microcontroller component, if the circuit has one.
    pub fn microcontroller(&self) -> Option<&str> {
        let id = self.state.topo.mcu.as_str();
        (id != DETACHED_MCU).then_some(id)
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    /// Runs firmware and scheduled actions up to `until` (exclusive for
    /// firmware code scheduled exactly at `until`) and returns the events
    /// appended on the way.
    pub fn advance(&mut self, until: u64) -> &[Event] {
        let start = self.state.events.len();
        if !self.state.started {
            self.state.started = true;
            self.state.recompute();
        }
        if until > self.state.now || self.machine.phase() == crate::firmware::Phase::Init {
            if let Err(e) = self.machine.run_until(&mut self.state, until) {
                self.record_runtime_error(e);
            }
            if until > self.state.now {
                self.state.sleep_to(until);
            }
        }
        &self.state.events[start..]
    }

    fn record_runtime_error(&mut self, e: RuntimeError) {
        let message = e.to_string();
        self.state.push_event(EventKind::Error, "firmware", json!(message));
        self.state.issues.push(SimIssue::Runtime {
            t_us: self.state.now,
            message,
        });
    }

    /// Applies an external action immediately, at the current time.
    pub fn apply(&mut self, action: &SimAction) -> Result<(), SimError> {
        if !self.state.started {
            self.state.started = true;
            self.state.recompute();
        }
        self.state.apply(action)
    }

    /// Queues an action for time `at_us`; it is applied before any firmware
    /// code scheduled at that instant.
    pub fn schedule(&mut self, at_us: u64, action: SimAction) {
        if at_us <= self.state.now && self.state.started {
            self.state.apply_logged(&action);
            return;
        }
        self.state.schedule_seq += 1;
        self.state.scheduled.insert((at_us, self.state.schedule_seq), action);
    }

    pub fn events(&self) -> &[Event] {
        &self.state.events
    }

    pub fn issues(&self) -> &[SimIssue] {
        &self.state.issues
    }

    pub fn serial_output(&self) -> &str {
        &self.state.serial_out
    }

    /// The event log as JSON lines.
    pub fn event_log_jsonl(&self) -> String {
        events_to_jsonl(&self.state.events)
    }

    /// Virtual time the firmware next wakes up at, if it is sleeping.
    pub fn next_wake(&self) -> Option<u64> {
        let firmware = self.machine.pending_wake();
        let action = self.state.scheduled.keys().next().map(|k| k.0);
        match (firmware, action) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn observe(&self, query: &Query) -> Result<Observation, SimError> {
        let s = &self.state;
        let mismatch = |id: &str, what: &str| SimError::Unsupported {
            id: id.to_string(),
            what: what.to_string(),
        };
        let obs = if s.started {
            s.observed.clone()
        } else {
            Observables::default()
        };
        match query {
            Query::SerialOutput => Ok(Observation::Text(s.serial_out.clone())),
            Query::LedLit(subject) => {
                if let Some(v) = obs.leds.get(subject) {
                    return Ok(Observation::Bool(*v));
                }
                let part = s.part(subject)?;
                match part.model {
                    Model::Rgb { .. } | Model::Bar { .. } => {
                        let prefix = format!("{subject}.");
                        let any = obs.leds.iter().any(|(k, v)| k.starts_with(&prefix) && *v);
                        Ok(Observation::Bool(any))
                    }
                    Model::Led { .. } => Ok(Observation::Bool(false)),
                    _ => Err(mismatch(subject, "led_lit")),
                }
            }
            Query::ServoAngle(id) => match s.part(id)?.model {
                Model::Servo { .. } => Ok(Observation::Angle(obs.servos.get(id).copied().flatten())),
                _ => Err(mismatch(id, "servo_angle")),
            },
            Query::BuzzerActive(id) => match s.part(id)?.model {
                Model::Buzzer { .. } => Ok(Observation::Bool(obs.buzzers.get(id).copied().unwrap_or(false))),
                _ => Err(mismatch(id, "buzzer_active")),
            },
            Query::SevenSegmentDigit(id) => match s.part(id)?.model {
                Model::Segment { .. } => {
                    let pattern = obs.segments.get(id).cloned().unwrap_or_default();
                    Ok(Observation::Digit(models::pattern_digit(&pattern)))
                }
                _ => Err(mismatch(id, "seven_segment_digit")),
            },
            Query::PinLevel(name) => {
                let point = self.pin_point(name)?;
                if !s.started {
                    return Ok(Observation::Bool(false));
                }
                Ok(Observation::Bool(s.level_of_point(point)))
            }
        }
    }

    /// Resolves `pin13` (a board pin) or `component.pin` to a point.
    fn pin_point(&self, name: &str) -> Result<usize, SimError> {
        let topo = &self.state.topo;
        let (component, pin) = match name.split_once('.') {
            Some((c, p)) => (c.to_string(), p.to_lowercase()),
            None => (topo.mcu.clone(), name.to_lowercase()),
        };
        let unknown = || SimError::UnknownPin {
            component: component.clone(),
            pin: pin.clone(),
        };
        if component == topo.mcu {
            let canon = topo.profile.canonical(&pin).ok_or_else(unknown)?;
            return Ok(topo.mcu_points[&canon]);
        }
        let point = ElectricalPoint::pin(&component, &pin);
        (0..topo.base.len())
            .find(|&i| *topo.base.point(i) == point)
            .ok_or_else(unknown)
    }

    pub fn led_lit(&self, subject: &str) -> Result<bool, SimError> {
        match self.observe(&Query::LedLit(subject.to_string()))? {
            Observation::Bool(b) => Ok(b),
            _ => unreachable!("led query yields bool"),
        }
    }

    pub fn servo_angle(&self, id: &str) -> Result<Option<i64>, SimError> {
        match self.observe(&Query::ServoAngle(id.to_string()))? {
            Observation::Angle(a) => Ok(a),
            _ => unreachable!("servo query yields angle"),
        }
    }

    pub fn pin_level(&self, pin: &str) -> Result<bool, SimError> {
        match self.observe(&Query::PinLevel(pin.to_string()))? {
            Observation::Bool(b) => Ok(b),
            _ => unreachable!("pin query yields bool"),
        }
    }

    pub fn buzzer_active(&self, id: &str) -> Result<bool, SimError> {
        match self.observe(&Query::BuzzerActive(id.to_string()))? {
            Observation::Bool(b) => Ok(b),
            _ => unreachable!("buzzer query yields bool"),
        }
    }

    pub fn seven_segment_digit(&self, id: &str) -> Result<Option<u8>, SimError> {
        match self.observe(&Query::SevenSegmentDigit(id.to_string()))? {
            Observation::Digit(d) => Ok(d),
            _ => unreachable!("segment query yields digit"),
        }
    }
}

pub fn events_to_jsonl(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests;
