//! Resumable bytecode interpreter.

use std::sync::Arc;

use serde::Serialize;

use super::ast::Ty;
use super::compile::{Builtin, Compiled, Decl, Op};
use super::value::Value;
use super::{DhtField, Hal, HalError, PinMode, Pos, RuntimeError, RuntimeErrorKind};

/// Statements allowed to run while the virtual clock stands still.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;
/// Clock advance charged for a `loop()` pass that never slept.
pub const IDLE_LOOP_MICROS: u64 = 100;
const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Setup,
    Loop,
    Halted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub now_us: u64,
    /// Total number of times `loop()` has been entered so far.
    pub loop_entries: u64,
    pub phase: Phase,
}

#[derive(Debug, Clone)]
enum Slot {
    Unset,
    Scalar(Ty, Value),
    Array(Ty, Vec<Value>),
}

#[derive(Debug, Clone)]
struct Frame {
    func: usize,
    pc: usize,
    base: usize,
}

type Exec<T> = Result<T, RuntimeErrorKind>;

/// Execution state of one firmware instance.
#[derive(Debug, Clone)]
pub struct Machine {
    code: Arc<Compiled>,
    globals: Vec<Slot>,
    locals: Vec<Slot>,
    stack: Vec<Value>,
    frames: Vec<Frame>,
    phase: Phase,
    started: bool,
    pending_wake: Option<u64>,
    in_iteration: bool,
    iteration_slept: bool,
    loop_entries: u64,
    steps_since_progress: u64,
    step_budget: u64,
    pos: Pos,
    error: Option<RuntimeError>,
}

fn hal_err(e: HalError) -> RuntimeErrorKind {
    RuntimeErrorKind::Hal(e.0)
}

fn invalid(msg: impl Into<String>) -> RuntimeErrorKind {
    RuntimeErrorKind::InvalidArgument(msg.into())
}

fn text_arg(v: &Value) -> Exec<&str> {
    match v {
        Value::Text(s) => Ok(s),
        other => Err(RuntimeErrorKind::Type(format!(
            "expected String, found {}",
            other.type_name()
        ))),
    }
}

/// Leading-number parse in the style of Arduino's `String::toInt`: skips
/// leading whitespace, reads an optional sign and digits, returns 0 when
/// nothing parses.
fn leading_int(s: &str) -> i64 {
    let t = s.trim_start();
    let end = t
        .char_indices()
        .take_while(|(i, c)| c.is_ascii_digit() || (*i == 0 && (*c == '-' || *c == '+')))
        .map(|(i, c)| i + c.len_utf8())
        .last()
        .unwrap_or(0);
    t[..end].parse().unwrap_or(0)
}

fn leading_float(s: &str) -> f64 {
    let t = s.trim_start();
    let mut best = 0.0;
    for (i, c) in t.char_indices() {
        if !(c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E')) {
            break;
        }
        if let Ok(x) = t[..i + c.len_utf8()].parse::<f64>() {
            best = x;
        }
    }
    best
}

fn format_print(v: &Value, fmt: Option<&Value>) -> Exec<String> {
    let Some(fmt) = fmt else {
        return Ok(v.to_string());
    };
    let n = fmt.as_int()?;
    match v {
        Value::Float(x) => {
            if !(0..=20).contains(&n) {
                return Err(invalid(format!("{n} decimal places")));
            }
            Ok(format!("{x:.prec$}", prec = n as usize))
        }
        Value::Int(_) | Value::Bool(_) => {
            let x = v.as_int()?;
            let (sign, mag) = if x < 0 { ("-", x.unsigned_abs()) } else { ("", x as u64) };
            let digits = match n {
                2 => format!("{mag:b}"),
                8 => format!("{mag:o}"),
                10 => format!("{mag}"),
                16 => format!("{mag:X}"),
                _ => return Err(invalid(format!("print base {n}"))),
            };
            Ok(format!("{sign}{digits}"))
        }
        Value::Text(s) => Ok(s.clone()),
    }
}

fn numeric_pair(a: &Value, b: &Value) -> Exec<bool> {
    if matches!(a, Value::Text(_)) || matches!(b, Value::Text(_)) {
        return Err(RuntimeErrorKind::Type("expected a number, found String".into()));
    }
    Ok(matches!(a, Value::Float(_)) || matches!(b, Value::Float(_)))
}

impl Machine {
    pub(super) fn new(code: Arc<Compiled>) -> Machine {
        let n_globals = code.n_globals;
        let init = code.init;
        let n_slots = code.functions[init].n_slots;
        Machine {
            code,
            globals: vec![Slot::Unset; n_globals],
            locals: vec![Slot::Unset; n_slots],
            stack: Vec::new(),
            frames: vec![Frame {
                func: init,
                pc: 0,
                base: 0,
            }],
            phase: Phase::Init,
            started: false,
            pending_wake: None,
            in_iteration: false,
            iteration_slept: false,
            loop_entries: 0,
            steps_since_progress: 0,
            step_budget: DEFAULT_STEP_BUDGET,
            pos: Pos::default(),
            error: None,
        }
    }

    pub fn with_step_budget(mut self, budget: u64) -> Machine {
        self.step_budget = budget.max(1);
        self
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn loop_entries(&self) -> u64 {
        self.loop_entries
    }

    pub fn error(&self) -> Option<&RuntimeError> {
        self.error.as_ref()
    }

    pub fn is_halted(&self) -> bool {
        self.phase == Phase::Halted
    }

    /// Virtual time at which the firmware next wants to run, if it is
    /// currently inside a delay.
    pub fn pending_wake(&self) -> Option<u64> {
        self.pending_wake
    }

    fn report(&self, hal: &dyn Hal) -> RunReport {
        RunReport {
            now_us: hal.now_micros(),
            loop_entries: self.loop_entries,
            phase: self.phase,
        }
    }

    /// Runs until the clock reaches `t_end`. The first call always starts
    /// `setup()`, even when `t_end` is already in the past; after that, code
    /// scheduled at time `t` only runs in a call with `t_end > t`. A runtime
    /// error halts the machine: it is returned once, and later calls do
    /// nothing.
    pub fn run_until(&mut self, hal: &mut dyn Hal, t_end: u64) -> Result<RunReport, RuntimeError> {
        if self.phase == Phase::Halted || (self.started && hal.now_micros() >= t_end) {
            return Ok(self.report(hal));
        }
        self.started = true;
        let code = Arc::clone(&self.code);
        match self.exec(&code, hal, t_end) {
            Ok(()) => Ok(self.report(hal)),
            Err(kind) => {
                let err = RuntimeError { pos: self.pos, kind };
                self.error = Some(err.clone());
                self.phase = Phase::Halted;
                self.frames.clear();
                self.stack.clear();
                self.pending_wake = None;
                Err(err)
            }
        }
    }

    fn exec(&mut self, code: &Compiled, hal: &mut dyn Hal, t_end: u64) -> Exec<()> {
        loop {
            if let Some(wake) = self.pending_wake {
                let before = hal.now_micros();
                let target = wake.min(t_end.max(before));
                if target > before {
                    hal.sleep(target - before);
                }
                let now = hal.now_micros();
                if now > before {
                    self.steps_since_progress = 0;
                }
                if now >= wake {
                    self.pending_wake = None;
                }
                if now >= t_end || self.pending_wake.is_some() {
                    return Ok(());
                }
            }
            if self.frames.is_empty() {
                match self.phase {
                    Phase::Init => {
                        self.phase = Phase::Setup;
                        self.push_frame(code, code.setup, Vec::new())?;
                        continue;
                    }
                    Phase::Setup => {
                        self.phase = Phase::Loop;
                        self.in_iteration = false;
                    }
                    Phase::Loop => {}
                    Phase::Halted => return Ok(()),
                }
                if self.in_iteration {
                    self.in_iteration = false;
                    if !self.iteration_slept {
                        self.pending_wake = Some(hal.now_micros() + IDLE_LOOP_MICROS);
                        continue;
                    }
                }
                if hal.now_micros() >= t_end {
                    return Ok(());
                }
                self.loop_entries += 1;
                self.in_iteration = true;
                self.iteration_slept = false;
                self.push_frame(code, code.loop_fn, Vec::new())?;
                continue;
            }
            self.step(code, hal)?;
        }
    }

    fn push_frame(&mut self, code: &Compiled, func: usize, args: Vec<Value>) -> Exec<()> {
        if self.frames.len() >= MAX_CALL_DEPTH {
            return Err(RuntimeErrorKind::StackOverflow);
        }
        let f = &code.functions[func];
        let base = self.locals.len();
        self.locals.resize(base + f.n_slots, Slot::Unset);
        for (i, (arg, ty)) in args.into_iter().zip(&f.params).enumerate() {
            self.locals[base + i] = Slot::Scalar(*ty, arg.coerce(*ty)?);
        }
        self.frames.push(Frame { func, pc: 0, base });
        Ok(())
    }

    fn pop(&mut self) -> Value {
        self.stack.pop().expect("operand stack underflow")
    }

    fn pop_n(&mut self, n: usize) -> Vec<Value> {
        let at = self.stack.len() - n;
        self.stack.split_off(at)
    }

    fn slot(&mut self, global: bool, idx: usize) -> &mut Slot {
        if global {
            &mut self.globals[idx]
        } else {
            let base = self.frames.last().expect("frame").base;
            &mut self.locals[base + idx]
        }
    }

    fn load(&mut self, global: bool, idx: usize) -> Exec<()> {
        let v = match self.slot(global, idx) {
            Slot::Scalar(_, v) => v.clone(),
            _ => return Err(RuntimeErrorKind::Type("variable read before its declaration ran".into())),
        };
        self.stack.push(v);
        Ok(())
    }

    fn store(&mut self, global: bool, idx: usize) -> Exec<()> {
        let v = self.pop();
        match self.slot(global, idx) {
            Slot::Scalar(ty, slot) => {
                *slot = v.coerce(*ty)?;
                Ok(())
            }
            _ => Err(RuntimeErrorKind::Type("variable written before its declaration ran".into())),
        }
    }

    fn element(&mut self, global: bool, idx: usize, index: i64) -> Exec<(Ty, &mut Value)> {
        match self.slot(global, idx) {
            Slot::Array(ty, vals) => {
                let len = vals.len();
                if index < 0 || index as usize >= len {
                    return Err(RuntimeErrorKind::IndexOutOfBounds { index, len });
                }
                Ok((*ty, &mut vals[index as usize]))
            }
            _ => Err(RuntimeErrorKind::Type("array used before its declaration ran".into())),
        }
    }

    fn declare(&mut self, global: bool, d: Decl) -> Exec<()> {
        let inits = self.pop_n(d.n_init);
        let slot = match d.len {
            None => {
                let v = match inits.into_iter().next() {
                    Some(v) => v.coerce(d.ty)?,
                    None => Value::default_for(d.ty),
                };
                Slot::Scalar(d.ty, v)
            }
            Some(len) => {
                let mut vals = Vec::with_capacity(len);
                for v in inits {
                    vals.push(v.coerce(d.ty)?);
                }
                vals.resize(len, Value::default_for(d.ty));
                Slot::Array(d.ty, vals)
            }
        };
        *self.slot(global, d.slot) = slot;
        Ok(())
    }

    fn step(&mut self, code: &Compiled, hal: &mut dyn Hal) -> Exec<()> {
        let frame = self.frames.last_mut().expect("frame");
        let func = &code.functions[frame.func];
        let op = &func.code[frame.pc];
        frame.pc += 1;
        match op {
            Op::Stmt(pos) => {
                self.pos = *pos;
                self.steps_since_progress += 1;
                if self.steps_since_progress > self.step_budget {
                    return Err(RuntimeErrorKind::StepBudget(self.step_budget));
                }
            }
            Op::Const(v) => self.stack.push(v.clone()),
            Op::LoadG(i) => self.load(true, *i)?,
            Op::LoadL(i) => self.load(false, *i)?,
            Op::StoreG(i) => self.store(true, *i)?,
            Op::StoreL(i) => self.store(false, *i)?,
            Op::LoadIdxG(i) | Op::LoadIdxL(i) => {
                let global = matches!(op, Op::LoadIdxG(_));
                let index = self.pop().as_int()?;
                let v = self.element(global, *i, index)?.1.clone();
                self.stack.push(v);
            }
            Op::StoreIdxG(i) | Op::StoreIdxL(i) => {
                let global = matches!(op, Op::StoreIdxG(_));
                let v = self.pop();
                let index = self.pop().as_int()?;
                let (ty, slot) = self.element(global, *i, index)?;
                *slot = v.coerce(ty)?;
            }
            Op::DeclG(d) => self.declare(true, *d)?,
            Op::DeclL(d) => self.declare(false, *d)?,
            Op::Unary(u) => {
                let v = self.pop();
                self.stack.push(v.unary(*u)?);
            }
            Op::Binary(b) => {
                let rhs = self.pop();
                let lhs = self.pop();
                self.stack.push(lhs.binary(*b, rhs)?);
            }
            Op::Cast(ty) => {
                let v = self.pop();
                self.stack.push(v.coerce(*ty)?);
            }
            Op::ToBool => {
                let v = self.pop();
                self.stack.push(Value::Bool(v.truthy()?));
            }
            Op::Jump(t) => self.frames.last_mut().expect("frame").pc = *t,
            Op::JumpIfFalse(t) | Op::JumpIfTrue(t) => {
                let want = matches!(op, Op::JumpIfTrue(_));
                if self.pop().truthy()? == want {
                    self.frames.last_mut().expect("frame").pc = *t;
                }
            }
            Op::Dup => {
                let v = self.stack.last().expect("operand stack underflow").clone();
                self.stack.push(v);
            }
            Op::Pop => {
                self.pop();
            }
            Op::Call(fi, argc) => {
                let args = self.pop_n(*argc);
                self.push_frame(code, *fi, args)?;
            }
            Op::Ret => {
                let v = self.pop().coerce(func.ret)?;
                let frame = self.frames.pop().expect("frame");
                self.locals.truncate(frame.base);
                if !self.frames.is_empty() {
                    self.stack.push(v);
                }
            }
            Op::Builtin(b, argc) => {
                let args = self.pop_n(*argc);
                let v = self.builtin(*b, args, hal)?;
                self.stack.push(v);
            }
        }
        Ok(())
    }

    fn sleep_for(&mut self, hal: &dyn Hal, micros: i64) {
        if micros > 0 {
            self.pending_wake = Some(hal.now_micros().saturating_add(micros as u64));
            self.iteration_slept = true;
        }
    }

    fn builtin(&mut self, b: Builtin, args: Vec<Value>, hal: &mut dyn Hal) -> Exec<Value> {
        let unit = Value::Int(0);
        let int = |i: usize| args[i].as_int();
        Ok(match b {
            Builtin::PinMode => {
                let mode = match int(1)? {
                    0 => PinMode::Input,
                    1 => PinMode::Output,
                    2 => PinMode::InputPullup,
                    m => return Err(invalid(format!("pin mode {m}"))),
                };
                hal.pin_mode(int(0)?, mode).map_err(hal_err)?;
                unit
            }
            Builtin::DigitalWrite => {
                hal.digital_write(int(0)?, args[1].truthy()?).map_err(hal_err)?;
                unit
            }
            Builtin::DigitalRead => Value::Int(hal.digital_read(int(0)?).map_err(hal_err)? as i64),
            Builtin::AnalogRead => Value::Int(hal.analog_read(int(0)?).map_err(hal_err)?),
            Builtin::AnalogWrite => {
                hal.analog_write(int(0)?, int(1)?.clamp(0, 255)).map_err(hal_err)?;
                unit
            }
            Builtin::Delay => {
                self.sleep_for(hal, int(0)?.saturating_mul(1000));
                unit
            }
            Builtin::DelayMicros => {
                self.sleep_for(hal, int(0)?);
                unit
            }
            Builtin::Millis => Value::Int((hal.now_micros() / 1000) as i64),
            Builtin::Micros => Value::Int(hal.now_micros() as i64),
            Builtin::Tone => {
                let hz = int(1)?;
                if hz <= 0 {
                    return Err(invalid(format!("tone frequency {hz}")));
                }
                hal.tone(int(0)?, hz).map_err(hal_err)?;
                unit
            }
            Builtin::NoTone => {
                hal.no_tone(int(0)?).map_err(hal_err)?;
                unit
            }
            Builtin::ServoAttach => {
                hal.servo_attach(int(0)?).map_err(hal_err)?;
                unit
            }
            Builtin::ServoWrite => {
                hal.servo_write(int(0)?, int(1)?.clamp(0, 180)).map_err(hal_err)?;
                unit
            }
            Builtin::Map => {
                let (x, a, b, c, d) = (int(0)?, int(1)?, int(2)?, int(3)?, int(4)?);
                if a == b {
                    return Err(RuntimeErrorKind::DivisionByZero);
                }
                Value::Int((x - a).wrapping_mul(d - c) / (b - a) + c)
            }
            Builtin::DhtRead => {
                let field = match &args[1] {
                    Value::Text(s) if s.eq_ignore_ascii_case("temperature") => DhtField::Temperature,
                    Value::Text(s) if s.eq_ignore_ascii_case("humidity") => DhtField::Humidity,
                    Value::Int(0) => DhtField::Temperature,
                    Value::Int(1) => DhtField::Humidity,
                    other => return Err(invalid(format!("DHT field {other}"))),
                };
                Value::Float(hal.read_dht(int(0)?, field).map_err(hal_err)?)
            }
            Builtin::Constrain => {
                let float = numeric_pair(&args[0], &args[1])? | numeric_pair(&args[0], &args[2])?;
                if float {
                    let (x, lo, hi) = (args[0].as_float()?, args[1].as_float()?, args[2].as_float()?);
                    Value::Float(x.max(lo).min(hi))
                } else {
                    let (x, lo, hi) = (int(0)?, int(1)?, int(2)?);
                    Value::Int(x.max(lo).min(hi))
                }
            }
            Builtin::Abs => match &args[0] {
                Value::Float(x) => Value::Float(x.abs()),
                v => Value::Int(v.as_int()?.wrapping_abs()),
            },
            Builtin::Min | Builtin::Max => {
                let pick_max = b == Builtin::Max;
                if numeric_pair(&args[0], &args[1])? {
                    let (x, y) = (args[0].as_float()?, args[1].as_float()?);
                    Value::Float(if pick_max { x.max(y) } else { x.min(y) })
                } else {
                    let (x, y) = (int(0)?, int(1)?);
                    Value::Int(if pick_max { x.max(y) } else { x.min(y) })
                }
            }
            Builtin::SerialBegin => unit,
            Builtin::SerialPrint => {
                let s = format_print(&args[0], args.get(1))?;
                hal.serial_write(&s);
                unit
            }
            Builtin::SerialPrintln => {
                let mut s = match args.first() {
                    Some(v) => format_print(v, args.get(1))?,
                    None => String::new(),
                };
                s.push('\n');
                hal.serial_write(&s);
                unit
            }
            Builtin::SerialAvailable => Value::Int(hal.serial_available()),
            Builtin::SerialReadLine => Value::Text(hal.serial_read_line()),
            Builtin::StrToInt => Value::Int(leading_int(text_arg(&args[0])?)),
            Builtin::StrToFloat => Value::Float(leading_float(text_arg(&args[0])?)),
            Builtin::StrLength => Value::Int(text_arg(&args[0])?.chars().count() as i64),
            Builtin::StrTrim => Value::Text(text_arg(&args[0])?.trim().to_string()),
            Builtin::StrEquals => Value::Bool(text_arg(&args[0])? == text_arg(&args[1])?),
            Builtin::StrStartsWith => Value::Bool(text_arg(&args[0])?.starts_with(text_arg(&args[1])?)),
            Builtin::StrUpper => Value::Text(text_arg(&args[0])?.to_uppercase()),
            Builtin::StrLower => Value::Text(text_arg(&args[0])?.to_lowercase()),
            Builtin::StrIndexOf => {
                let hay = text_arg(&args[0])?;
                let needle = match &args[1] {
                    Value::Text(s) => s.clone(),
                    Value::Int(c) => char::from_u32(*c as u32).map(String::from).unwrap_or_default(),
                    other => return Err(invalid(format!("indexOf({other})"))),
                };
                match hay.find(&needle) {
                    Some(byte) => Value::Int(hay[..byte].chars().count() as i64),
                    None => Value::Int(-1),
                }
            }
            Builtin::StrSubstring => {
                let chars: Vec<char> = text_arg(&args[0])?.chars().collect();
                let len = chars.len() as i64;
                let from = int(1)?.clamp(0, len);
                let to = if args.len() > 2 { int(2)?.clamp(0, len) } else { len };
                let (lo, hi) = (from.min(to) as usize, from.max(to) as usize);
                Value::Text(chars[lo..hi].iter().collect())
            }
        })
    }
}
