//! Name resolution and lowering of the AST to stack bytecode.

use std::collections::HashMap;

use super::ast::*;
use super::value::Value;
use super::{FirmwareError, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    PinMode,
    DigitalWrite,
    DigitalRead,
    AnalogRead,
    AnalogWrite,
    Delay,
    DelayMicros,
    Millis,
    Micros,
    Tone,
    NoTone,
    ServoAttach,
    ServoWrite,
    Map,
    DhtRead,
    Constrain,
    Abs,
    Min,
    Max,
    SerialBegin,
    SerialPrint,
    SerialPrintln,
    SerialAvailable,
    SerialReadLine,
    StrToInt,
    StrToFloat,
    StrLength,
    StrTrim,
    StrEquals,
    StrIndexOf,
    StrSubstring,
    StrStartsWith,
    StrUpper,
    StrLower,
}

/// (name, builtin, min args, max args)
const FUNCTIONS: &[(&str, Builtin, usize, usize)] = &[
    ("pinMode", Builtin::PinMode, 2, 2),
    ("digitalWrite", Builtin::DigitalWrite, 2, 2),
    ("digitalRead", Builtin::DigitalRead, 1, 1),
    ("analogRead", Builtin::AnalogRead, 1, 1),
    ("analogWrite", Builtin::AnalogWrite, 2, 2),
    ("delay", Builtin::Delay, 1, 1),
    ("delayMicroseconds", Builtin::DelayMicros, 1, 1),
    ("millis", Builtin::Millis, 0, 0),
    ("micros", Builtin::Micros, 0, 0),
    ("tone", Builtin::Tone, 2, 2),
    ("noTone", Builtin::NoTone, 1, 1),
    ("servoAttach", Builtin::ServoAttach, 1, 1),
    ("servoWrite", Builtin::ServoWrite, 2, 2),
    ("map", Builtin::Map, 5, 5),
    ("dhtRead", Builtin::DhtRead, 2, 2),
    ("constrain", Builtin::Constrain, 3, 3),
    ("abs", Builtin::Abs, 1, 1),
    ("min", Builtin::Min, 2, 2),
    ("max", Builtin::Max, 2, 2),
];

const SERIAL_METHODS: &[(&str, Builtin, usize, usize)] = &[
    ("begin", Builtin::SerialBegin, 1, 1),
    ("print", Builtin::SerialPrint, 1, 2),
    ("println", Builtin::SerialPrintln, 0, 2),
    ("available", Builtin::SerialAvailable, 0, 0),
    ("readLine", Builtin::SerialReadLine, 0, 0),
    ("readString", Builtin::SerialReadLine, 0, 0),
    ("readStringUntil", Builtin::SerialReadLine, 1, 1),
];

/// String methods; the receiver is passed as the first argument, so the
/// counts below exclude it.
const STRING_METHODS: &[(&str, Builtin, usize, usize)] = &[
    ("toInt", Builtin::StrToInt, 0, 0),
    ("toFloat", Builtin::StrToFloat, 0, 0),
    ("length", Builtin::StrLength, 0, 0),
    ("trim", Builtin::StrTrim, 0, 0),
    ("equals", Builtin::StrEquals, 1, 1),
    ("indexOf", Builtin::StrIndexOf, 1, 1),
    ("substring", Builtin::StrSubstring, 1, 2),
    ("startsWith", Builtin::StrStartsWith, 1, 1),
    ("toUpperCase", Builtin::StrUpper, 0, 0),
    ("toLowerCase", Builtin::StrLower, 0, 0),
];

pub const CONSTANTS: &[(&str, i64)] = &[
    ("HIGH", 1),
    ("LOW", 0),
    ("INPUT", 0),
    ("OUTPUT", 1),
    ("INPUT_PULLUP", 2),
    ("LED_BUILTIN", 13),
    ("A0", 14),
    ("A1", 15),
    ("A2", 16),
    ("A3", 17),
    ("A4", 18),
    ("A5", 19),
    ("BIN", 2),
    ("OCT", 8),
    ("DEC", 10),
    ("HEX", 16),
    ("TEMPERATURE", 0),
    ("HUMIDITY", 1),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Statement boundary: counts against the step budget and records the
    /// position for runtime errors.
    Stmt(Pos),
    Const(Value),
    LoadG(usize),
    StoreG(usize),
    LoadL(usize),
    StoreL(usize),
    /// Pops the index.
    LoadIdxG(usize),
    LoadIdxL(usize),
    /// Pops the value, then the index.
    StoreIdxG(usize),
    StoreIdxL(usize),
    /// (Re)initializes a slot, popping `n_init` initializer values.
    DeclG(Decl),
    DeclL(Decl),
    Unary(UnOp),
    Binary(BinOp),
    Cast(Ty),
    ToBool,
    Jump(usize),
    /// Pops the condition.
    JumpIfFalse(usize),
    JumpIfTrue(usize),
    Dup,
    Pop,
    Call(usize, usize),
    Ret,
    Builtin(Builtin, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decl {
    pub slot: usize,
    pub ty: Ty,
    pub is_const: bool,
    pub len: Option<usize>,
    pub n_init: usize,
}

#[derive(Debug, Clone)]
pub struct FuncCode {
    pub params: Vec<Ty>,
    pub ret: Ty,
    pub n_slots: usize,
    pub code: Vec<Op>,
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub functions: Vec<FuncCode>,
    pub init: usize,
    pub setup: usize,
    pub loop_fn: usize,
    pub n_globals: usize,
}

#[derive(Debug, Clone, Copy)]
struct VarInfo {
    slot: usize,
    is_array: bool,
    is_const: bool,
}

enum Place {
    Local(VarInfo),
    Global(VarInfo),
    Constant(i64),
}

struct LoopCtx {
    is_switch: bool,
    breaks: Vec<usize>,
    continues: Vec<usize>,
}

struct FnState {
    ret: Ty,
    code: Vec<Op>,
    scopes: Vec<HashMap<String, VarInfo>>,
    next_slot: usize,
    max_slots: usize,
    loops: Vec<LoopCtx>,
}

struct Compiler<'a> {
    globals: HashMap<String, VarInfo>,
    fn_index: HashMap<&'a str, usize>,
    ast: &'a Ast,
}

fn resolve_err(pos: Pos, message: impl Into<String>) -> FirmwareError {
    FirmwareError::Resolve {
        pos,
        message: message.into(),
    }
}

impl FnState {
    fn new(ret: Ty) -> FnState {
        FnState {
            ret,
            code: Vec::new(),
            scopes: vec![HashMap::new()],
            next_slot: 0,
            max_slots: 0,
            loops: Vec::new(),
        }
    }

    fn emit(&mut self, op: Op) -> usize {
        self.code.push(op);
        self.code.len() - 1
    }

    fn here(&self) -> usize {
        self.code.len()
    }

    fn patch(&mut self, at: usize, target: usize) {
        match &mut self.code[at] {
            Op::Jump(t) | Op::JumpIfFalse(t) | Op::JumpIfTrue(t) => *t = target,
            _ => unreachable!("patching a non-jump"),
        }
    }

    fn push_scope(&mut self) {
        self.scopes.push(HashMap::new());
    }

    fn pop_scope(&mut self) {
        let scope = self.scopes.pop().expect("scope underflow");
        // slots are allocated stack-wise, so the smallest slot of this scope
        // is where the next allocation can restart
        if let Some(min) = scope.values().map(|v| v.slot).min() {
            self.next_slot = min;
        }
    }

    fn alloc(&mut self) -> usize {
        let s = self.next_slot;
        self.next_slot += 1;
        self.max_slots = self.max_slots.max(self.next_slot);
        s
    }

    fn declare(&mut self, name: &str, is_array: bool, is_const: bool, pos: Pos) -> Result<VarInfo, FirmwareError> {
        if self.scopes.last().expect("scope").contains_key(name) {
            return Err(resolve_err(pos, format!("`{name}` is already declared in this scope")));
        }
        let info = VarInfo {
            slot: self.alloc(),
            is_array,
            is_const,
        };
        self.scopes.last_mut().expect("scope").insert(name.to_string(), info);
        Ok(info)
    }

    fn lookup_local(&self, name: &str) -> Option<VarInfo> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }
}

impl<'a> Compiler<'a> {
    fn place(&self, f: &FnState, name: &str, pos: Pos) -> Result<Place, FirmwareError> {
        if let Some(v) = f.lookup_local(name) {
            return Ok(Place::Local(v));
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(Place::Global(*v));
        }
        if let Some((_, v)) = CONSTANTS.iter().find(|(n, _)| *n == name) {
            return Ok(Place::Constant(*v));
        }
        Err(resolve_err(pos, format!("unknown identifier `{name}`")))
    }

    fn block(&self, f: &mut FnState, body: &[Stmt]) -> Result<(), FirmwareError> {
        f.push_scope();
        for s in body {
            self.stmt(f, s)?;
        }
        f.pop_scope();
        Ok(())
    }

    fn decl(&self, f: &mut FnState, d: &VarDecl, global: Option<usize>) -> Result<(), FirmwareError> {
        let (len, n_init) = match (&d.array, &d.init) {
            (None, None) => (None, 0),
            (None, Some(Init::Expr(e))) => {
                self.expr(f, e)?;
                (None, 1)
            }
            (Some(n), init) => {
                let items: &[Expr] = match init {
                    Some(Init::List(items)) => items,
                    _ => &[],
                };
                for e in items {
                    self.expr(f, e)?;
                }
                (Some(n.unwrap_or(items.len()).max(1)), items.len())
            }
            (None, Some(Init::List(_))) => return Err(resolve_err(d.pos, "initializer list needs an array")),
        };
        if d.is_const && n_init == 0 {
            return Err(resolve_err(d.pos, format!("constant `{}` needs an initializer", d.name)));
        }
        let slot = if let Some(slot) = global {
            slot
        } else {
            // declare after compiling the initializer so `int x = x;` cannot
            // see itself
            f.declare(&d.name, d.array.is_some(), d.is_const, d.pos)?.slot
        };
        let decl = Decl {
            slot,
            ty: d.ty,
            is_const: d.is_const,
            len,
            n_init,
        };
        f.emit(if global.is_some() { Op::DeclG(decl) } else { Op::DeclL(decl) });
        Ok(())
    }

    fn jump_out(&self, f: &mut FnState, pos: Pos, is_break: bool) -> Result<(), FirmwareError> {
        let at = f.emit(Op::Jump(usize::MAX));
        let ctx = if is_break {
            f.loops.last_mut()
        } else {
            f.loops.iter_mut().rev().find(|l| !l.is_switch)
        };
        match ctx {
            Some(ctx) if is_break => ctx.breaks.push(at),
            Some(ctx) => ctx.continues.push(at),
            None => {
                return Err(resolve_err(
                    pos,
                    if is_break {
                        "`break` outside of a loop or switch"
                    } else {
                        "`continue` outside of a loop"
                    },
                ))
            }
        }
        Ok(())
    }

    fn close_loop(&self, f: &mut FnState, cont_target: usize, end: usize) {
        let ctx = f.loops.pop().expect("loop context");
        for at in ctx.breaks {
            f.patch(at, end);
        }
        for at in ctx.continues {
            f.patch(at, cont_target);
        }
    }

    fn open_loop(f: &mut FnState, is_switch: bool) {
        f.loops.push(LoopCtx {
            is_switch,
            breaks: Vec::new(),
            continues: Vec::new(),
        });
    }

    fn stmt(&self, f: &mut FnState, s: &Stmt) -> Result<(), FirmwareError> {
        match s {
            Stmt::Block(body) => self.block(f, body)?,
            Stmt::Empty => {}
            Stmt::Decl(decls) => {
                for d in decls {
                    f.emit(Op::Stmt(d.pos));
                    self.decl(f, d, None)?;
                }
            }
            Stmt::If { cond, then, els, pos } => {
                f.emit(Op::Stmt(*pos));
                self.expr(f, cond)?;
                let jf = f.emit(Op::JumpIfFalse(usize::MAX));
                self.scoped(f, then)?;
                match els {
                    Some(els) => {
                        let jend = f.emit(Op::Jump(usize::MAX));
                        let here = f.here();
                        f.patch(jf, here);
                        self.scoped(f, els)?;
                        let here = f.here();
                        f.patch(jend, here);
                    }
                    None => {
                        let here = f.here();
                        f.patch(jf, here);
                    }
                }
            }
            Stmt::While { cond, body, pos } => {
                let head = f.emit(Op::Stmt(*pos));
                self.expr(f, cond)?;
                let jf = f.emit(Op::JumpIfFalse(usize::MAX));
                Self::open_loop(f, false);
                self.scoped(f, body)?;
                f.emit(Op::Jump(head));
                let end = f.here();
                f.patch(jf, end);
                self.close_loop(f, head, end);
            }
            Stmt::DoWhile { body, cond, pos } => {
                let start = f.here();
                Self::open_loop(f, false);
                self.scoped(f, body)?;
                let cont = f.emit(Op::Stmt(*pos));
                self.expr(f, cond)?;
                f.emit(Op::JumpIfTrue(start));
                let end = f.here();
                self.close_loop(f, cont, end);
            }
            Stmt::For {
                init,
                cond,
                update,
                body,
                pos,
            } => {
                f.push_scope();
                for s in init {
                    self.stmt(f, s)?;
                }
                let head = f.emit(Op::Stmt(*pos));
                let jf = match cond {
                    Some(c) => {
                        self.expr(f, c)?;
                        Some(f.emit(Op::JumpIfFalse(usize::MAX)))
                    }
                    None => None,
                };
                Self::open_loop(f, false);
                self.scoped(f, body)?;
                let cont = f.here();
                for s in update {
                    self.stmt(f, s)?;
                }
                f.emit(Op::Jump(head));
                let end = f.here();
                if let Some(jf) = jf {
                    f.patch(jf, end);
                }
                self.close_loop(f, cont, end);
                f.pop_scope();
            }
            Stmt::Switch { scrutinee, cases, pos } => {
                f.emit(Op::Stmt(*pos));
                f.push_scope();
                self.expr(f, scrutinee)?;
                let tmp = f.declare(" switch", false, false, *pos)?.slot;
                f.emit(Op::DeclL(Decl {
                    slot: tmp,
                    ty: Ty::Int,
                    is_const: false,
                    len: None,
                    n_init: 1,
                }));
                let mut entry_jumps = Vec::new();
                for case in cases {
                    if let Some(label) = &case.label {
                        f.emit(Op::LoadL(tmp));
                        self.expr(f, label)?;
                        f.emit(Op::Binary(BinOp::Eq));
                        entry_jumps.push(Some(f.emit(Op::JumpIfTrue(usize::MAX))));
                    } else {
                        entry_jumps.push(None);
                    }
                }
                let fallback = f.emit(Op::Jump(usize::MAX));
                Self::open_loop(f, true);
                let mut default_at = None;
                for (case, jump) in cases.iter().zip(entry_jumps) {
                    let start = f.here();
                    match jump {
                        Some(j) => f.patch(j, start),
                        None => default_at = Some(start),
                    }
                    f.push_scope();
                    for s in &case.body {
                        self.stmt(f, s)?;
                    }
                    f.pop_scope();
                }
                let end = f.here();
                f.patch(fallback, default_at.unwrap_or(end));
                self.close_loop(f, end, end);
                f.pop_scope();
            }
            Stmt::Break(pos) => {
                f.emit(Op::Stmt(*pos));
                self.jump_out(f, *pos, true)?;
            }
            Stmt::Continue(pos) => {
                f.emit(Op::Stmt(*pos));
                self.jump_out(f, *pos, false)?;
            }
            Stmt::Return(value, pos) => {
                f.emit(Op::Stmt(*pos));
                match (value, f.ret) {
                    (Some(_), Ty::Void) => return Err(resolve_err(*pos, "void function cannot return a value")),
                    (Some(e), _) => {
                        self.expr(f, e)?;
                    }
                    (None, ty) => {
                        f.emit(Op::Const(Value::default_for(ty)));
                    }
                }
                f.emit(Op::Ret);
            }
            Stmt::Assign { target, op, value, pos } => {
                f.emit(Op::Stmt(*pos));
                let bin = match op {
                    AssignOp::Set => None,
                    AssignOp::Add => Some(BinOp::Add),
                    AssignOp::Sub => Some(BinOp::Sub),
                    AssignOp::Mul => Some(BinOp::Mul),
                    AssignOp::Div => Some(BinOp::Div),
                    AssignOp::Rem => Some(BinOp::Rem),
                };
                self.assign(f, target, bin, |c, f| c.expr(f, value))?;
            }
            Stmt::IncDec { target, delta, pos } => {
                f.emit(Op::Stmt(*pos));
                self.assign(f, target, Some(BinOp::Add), |_, f| {
                    f.emit(Op::Const(Value::Int(*delta)));
                    Ok(())
                })?;
            }
            Stmt::Expr(e) => {
                f.emit(Op::Stmt(e.pos));
                self.expr(f, e)?;
                f.emit(Op::Pop);
            }
        }
        Ok(())
    }

    /// Compiles a loop/branch body in its own scope.
    fn scoped(&self, f: &mut FnState, s: &Stmt) -> Result<(), FirmwareError> {
        f.push_scope();
        self.stmt(f, s)?;
        f.pop_scope();
        Ok(())
    }

    fn assign(
        &self,
        f: &mut FnState,
        target: &LValue,
        op: Option<BinOp>,
        rhs: impl FnOnce(&Self, &mut FnState) -> Result<(), FirmwareError>,
    ) -> Result<(), FirmwareError> {
        let (info, local) = match self.place(f, &target.name, target.pos)? {
            Place::Local(v) => (v, true),
            Place::Global(v) => (v, false),
            Place::Constant(_) => {
                return Err(resolve_err(target.pos, format!("cannot assign to constant `{}`", target.name)))
            }
        };
        if info.is_const {
            return Err(resolve_err(target.pos, format!("cannot assign to constant `{}`", target.name)));
        }
        match (&target.index, info.is_array) {
            (None, false) => {
                if let Some(op) = op {
                    f.emit(if local { Op::LoadL(info.slot) } else { Op::LoadG(info.slot) });
                    rhs(self, f)?;
                    f.emit(Op::Binary(op));
                } else {
                    rhs(self, f)?;
                }
                f.emit(if local { Op::StoreL(info.slot) } else { Op::StoreG(info.slot) });
            }
            (Some(idx), true) => {
                self.expr(f, idx)?;
                if let Some(op) = op {
                    f.emit(Op::Dup);
                    f.emit(if local { Op::LoadIdxL(info.slot) } else { Op::LoadIdxG(info.slot) });
                    rhs(self, f)?;
                    f.emit(Op::Binary(op));
                } else {
                    rhs(self, f)?;
                }
                f.emit(if local { Op::StoreIdxL(info.slot) } else { Op::StoreIdxG(info.slot) });
            }
            (None, true) => return Err(resolve_err(target.pos, format!("cannot assign to array `{}` as a whole", target.name))),
            (Some(_), false) => return Err(resolve_err(target.pos, format!("`{}` is not an array", target.name))),
        }
        Ok(())
    }

    fn builtin(&self, f: &mut FnState, b: Builtin, args: &[Expr], name: &str, min: usize, max: usize, pos: Pos) -> Result<(), FirmwareError> {
        if args.len() < min || args.len() > max {
            let want = if min == max { format!("{min}") } else { format!("{min} to {max}") };
            return Err(resolve_err(pos, format!("`{name}` takes {want} argument(s), got {}", args.len())));
        }
        for a in args {
            self.expr(f, a)?;
        }
        f.emit(Op::Builtin(b, args.len()));
        Ok(())
    }

    fn expr(&self, f: &mut FnState, e: &Expr) -> Result<(), FirmwareError> {
        match &e.kind {
            ExprKind::Int(n) => {
                f.emit(Op::Const(Value::Int(*n)));
            }
            ExprKind::Float(x) => {
                f.emit(Op::Const(Value::Float(*x)));
            }
            ExprKind::Bool(b) => {
                f.emit(Op::Const(Value::Bool(*b)));
            }
            ExprKind::Str(s) => {
                f.emit(Op::Const(Value::Text(s.clone())));
            }
            ExprKind::Var(name) => match self.place(f, name, e.pos)? {
                Place::Constant(v) => {
                    f.emit(Op::Const(Value::Int(v)));
                }
                Place::Local(v) | Place::Global(v) if v.is_array => {
                    return Err(resolve_err(e.pos, format!("array `{name}` used without an index")))
                }
                Place::Local(v) => {
                    f.emit(Op::LoadL(v.slot));
                }
                Place::Global(v) => {
                    f.emit(Op::LoadG(v.slot));
                }
            },
            ExprKind::Index(name, idx) => {
                let (info, local) = match self.place(f, name, e.pos)? {
                    Place::Local(v) => (v, true),
                    Place::Global(v) => (v, false),
                    Place::Constant(_) => return Err(resolve_err(e.pos, format!("`{name}` is not an array"))),
                };
                if !info.is_array {
                    return Err(resolve_err(e.pos, format!("`{name}` is not an array")));
                }
                self.expr(f, idx)?;
                f.emit(if local { Op::LoadIdxL(info.slot) } else { Op::LoadIdxG(info.slot) });
            }
            ExprKind::Call(name, args) => {
                if let Some(&fi) = self.fn_index.get(name.as_str()) {
                    let func = &self.ast.functions[fi];
                    if func.params.len() != args.len() {
                        return Err(resolve_err(
                            e.pos,
                            format!("`{name}` takes {} argument(s), got {}", func.params.len(), args.len()),
                        ));
                    }
                    for a in args {
                        self.expr(f, a)?;
                    }
                    f.emit(Op::Call(fi + 1, args.len()));
                } else if let Some(&(_, b, min, max)) = FUNCTIONS.iter().find(|(n, ..)| n == name) {
                    self.builtin(f, b, args, name, min, max, e.pos)?;
                } else {
                    return Err(resolve_err(e.pos, format!("unknown function `{name}`")));
                }
            }
            ExprKind::Method(recv, name, args) => {
                let is_serial = matches!(&recv.kind, ExprKind::Var(r) if r == "Serial")
                    && f.lookup_local("Serial").is_none()
                    && !self.globals.contains_key("Serial");
                if is_serial {
                    let Some(&(_, b, min, max)) = SERIAL_METHODS.iter().find(|(n, ..)| n == name) else {
                        return Err(resolve_err(e.pos, format!("unknown method `Serial.{name}`")));
                    };
                    self.builtin(f, b, args, &format!("Serial.{name}"), min, max, e.pos)?;
                } else {
                    let Some(&(_, b, min, max)) = STRING_METHODS.iter().find(|(n, ..)| n == name) else {
                        return Err(resolve_err(e.pos, format!("unknown method `{name}`")));
                    };
                    if args.len() < min || args.len() > max {
                        return Err(resolve_err(e.pos, format!("`{name}` takes {min} to {max} argument(s), got {}", args.len())));
                    }
                    self.expr(f, recv)?;
                    for a in args {
                        self.expr(f, a)?;
                    }
                    f.emit(Op::Builtin(b, args.len() + 1));
                    // trim and case changes modify the receiver in place
                    if matches!(b, Builtin::StrTrim | Builtin::StrUpper | Builtin::StrLower) {
                        if let ExprKind::Var(rname) = &recv.kind {
                            let target = match self.place(f, rname, recv.pos)? {
                                Place::Local(v) if !v.is_array && !v.is_const => Some(Op::StoreL(v.slot)),
                                Place::Global(v) if !v.is_array && !v.is_const => Some(Op::StoreG(v.slot)),
                                _ => None,
                            };
                            if let Some(store) = target {
                                f.emit(Op::Dup);
                                f.emit(store);
                            }
                        }
                    }
                }
            }
            ExprKind::Unary(op, inner) => {
                self.expr(f, inner)?;
                f.emit(Op::Unary(*op));
            }
            ExprKind::Binary(op, a, b) => {
                self.expr(f, a)?;
                self.expr(f, b)?;
                f.emit(Op::Binary(*op));
            }
            ExprKind::And(a, b) | ExprKind::Or(a, b) => {
                let is_and = matches!(e.kind, ExprKind::And(..));
                self.expr(f, a)?;
                let short = f.emit(if is_and {
                    Op::JumpIfFalse(usize::MAX)
                } else {
                    Op::JumpIfTrue(usize::MAX)
                });
                self.expr(f, b)?;
                f.emit(Op::ToBool);
                let jend = f.emit(Op::Jump(usize::MAX));
                let here = f.here();
                f.patch(short, here);
                f.emit(Op::Const(Value::Bool(!is_and)));
                let end = f.here();
                f.patch(jend, end);
            }
            ExprKind::Ternary(c, a, b) => {
                self.expr(f, c)?;
                let jf = f.emit(Op::JumpIfFalse(usize::MAX));
                self.expr(f, a)?;
                let jend = f.emit(Op::Jump(usize::MAX));
                let here = f.here();
                f.patch(jf, here);
                self.expr(f, b)?;
                let end = f.here();
                f.patch(jend, end);
            }
            ExprKind::Cast(ty, inner) => {
                self.expr(f, inner)?;
                f.emit(Op::Cast(*ty));
            }
        }
        Ok(())
    }

    fn function(&self, func: &Function) -> Result<FuncCode, FirmwareError> {
        let mut f = FnState::new(func.ret);
        for p in &func.params {
            f.declare(&p.name, false, false, p.pos)?;
        }
        self.block(&mut f, &func.body)?;
        f.emit(Op::Const(Value::default_for(func.ret)));
        f.emit(Op::Ret);
        Ok(FuncCode {
            params: func.params.iter().map(|p| p.ty).collect(),
            ret: func.ret,
            n_slots: f.max_slots,
            code: f.code,
        })
    }
}

pub fn compile(ast: &Ast) -> Result<Compiled, FirmwareError> {
    let mut fn_index = HashMap::new();
    for (i, func) in ast.functions.iter().enumerate() {
        fn_index.insert(func.name.as_str(), i);
    }
    let mut c = Compiler {
        globals: HashMap::new(),
        fn_index,
        ast,
    };

    // global initializers run in order inside a synthetic function (index 0);
    // each global becomes visible only after its own declaration
    let mut init = FnState::new(Ty::Void);
    for (slot, d) in ast.globals.iter().enumerate() {
        if c.globals.contains_key(&d.name) {
            return Err(resolve_err(d.pos, format!("global `{}` is already declared", d.name)));
        }
        init.emit(Op::Stmt(d.pos));
        let info = VarInfo {
            slot,
            is_array: d.array.is_some(),
            is_const: d.is_const,
        };
        c.decl(&mut init, d, Some(slot))?;
        c.globals.insert(d.name.clone(), info);
    }
    init.emit(Op::Const(Value::Int(0)));
    init.emit(Op::Ret);

    let mut functions = vec![FuncCode {
        params: Vec::new(),
        ret: Ty::Void,
        n_slots: init.max_slots,
        code: init.code,
    }];
    for func in &ast.functions {
        functions.push(c.function(func)?);
    }
    let find = |name: &str| c.fn_index[name] + 1;
    Ok(Compiled {
        init: 0,
        setup: find("setup"),
        loop_fn: find("loop"),
        n_globals: ast.globals.len(),
        functions,
    })
}
