//! Arduino-flavored firmware mini-language.
//!
//! Source text is lexed, parsed into an AST with positions, then compiled to
//! a small stack bytecode. A [`Machine`] executes that bytecode against a
//! [`Hal`] and can suspend inside `delay()`, so a simulator can interleave
//! firmware execution with externally scheduled events.

mod ast;
mod compile;
mod lexer;
mod metrics;
mod parser;
mod value;
mod vm;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use ast::{Expr, ExprKind, Function, Stmt, Ty, VarDecl};
pub use metrics::{code_metrics, cyclomatic_complexity, lines_of_code, CodeMetrics};
pub use value::Value;
pub use vm::{Machine, Phase, RunReport, DEFAULT_STEP_BUDGET, IDLE_LOOP_MICROS};

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FirmwareError {
    #[error("lexical error at {pos}: {message}")]
    Lex { pos: Pos, message: String },
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Pos, message: String },
    #[error("missing required function `{name}()`")]
    MissingFunction { name: &'static str },
    #[error("duplicate function `{name}` at {pos}")]
    DuplicateFunction { name: String, pos: Pos },
    #[error("error at {pos}: {message}")]
    Resolve { pos: Pos, message: String },
}

impl FirmwareError {
    pub fn pos(&self) -> Option<Pos> {
        match self {
            FirmwareError::Lex { pos, .. }
            | FirmwareError::Syntax { pos, .. }
            | FirmwareError::DuplicateFunction { pos, .. }
            | FirmwareError::Resolve { pos, .. } => Some(*pos),
            FirmwareError::MissingFunction { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeErrorKind {
    #[error("type error: {0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("step budget of {0} statements exceeded without time progressing")]
    StepBudget(u64),
    #[error("index {index} out of bounds for array of length {len}")]
    IndexOutOfBounds { index: i64, len: usize },
    #[error("call depth limit exceeded")]
    StackOverflow,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("hardware error: {0}")]
    Hal(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("runtime error at {pos}: {kind}")]
pub struct RuntimeError {
    pub pos: Pos,
    pub kind: RuntimeErrorKind,
}

/// Error reported by a [`Hal`] implementation, e.g. a pin the board lacks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct HalError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PinMode {
    Input,
    Output,
    InputPullup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DhtField {
    Temperature,
    Humidity,
}

/// Host callbacks the interpreter uses for every side effect.
///
/// Pins are the raw integers the firmware passes (`13`, `A0` = 14, ...);
/// mapping them onto board pins is the host's job.
pub trait Hal {
    fn pin_mode(&mut self, pin: i64, mode: PinMode) -> Result<(), HalError>;
    fn digital_write(&mut self, pin: i64, high: bool) -> Result<(), HalError>;
    fn digital_read(&mut self, pin: i64) -> Result<bool, HalError>;
    /// Returns a reading in 0..=1023.
    fn analog_read(&mut self, pin: i64) -> Result<i64, HalError>;
    /// `duty` is already clamped to 0..=255.
    fn analog_write(&mut self, pin: i64, duty: i64) -> Result<(), HalError>;
    fn now_micros(&self) -> u64;
    fn sleep(&mut self, micros: u64);
    fn serial_write(&mut self, text: &str);
    fn serial_available(&self) -> i64;
    fn serial_read_line(&mut self) -> String;
    fn tone(&mut self, pin: i64, hz: i64) -> Result<(), HalError>;
    fn no_tone(&mut self, pin: i64) -> Result<(), HalError>;
    fn servo_attach(&mut self, pin: i64) -> Result<(), HalError>;
    /// `degrees` is already clamped to 0..=180.
    fn servo_write(&mut self, pin: i64, degrees: i64) -> Result<(), HalError>;
    fn read_dht(&mut self, pin: i64, field: DhtField) -> Result<f64, HalError>;
}

/// A parsed and resolved firmware program. Cheap to clone and shareable
/// across threads; each simulation creates its own [`Machine`].
#[derive(Debug, Clone)]
pub struct Program {
    ast: Arc<ast::Ast>,
    code: Arc<compile::Compiled>,
}

impl Program {
    pub fn globals(&self) -> &[VarDecl] {
        &self.ast.globals
    }

    pub fn functions(&self) -> &[Function] {
        &self.ast.functions
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.ast.functions.iter().find(|f| f.name == name)
    }

    pub fn machine(&self) -> Machine {
        Machine::new(self.code.clone())
    }
}

pub fn parse_program(source: &str) -> Result<Program, FirmwareError> {
    let tokens = lexer::tokenize(source)?;
    let ast = parser::parse(tokens)?;
    for required in ["setup", "loop"] {
        match ast.functions.iter().find(|f| f.name == required) {
            None => {
                return Err(FirmwareError::MissingFunction {
                    name: if required == "setup" { "setup" } else { "loop" },
                })
            }
            Some(f) if !f.params.is_empty() => {
                return Err(FirmwareError::Resolve {
                    pos: f.pos,
                    message: format!("`{required}` must take no parameters"),
                })
            }
            Some(_) => {}
        }
    }
    let code = compile::compile(&ast)?;
    Ok(Program {
        ast: Arc::new(ast),
        code: Arc::new(code),
    })
}

#[cfg(test)]
mod tests;
