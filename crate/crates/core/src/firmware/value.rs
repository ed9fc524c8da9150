use std::cmp::Ordering;
use std::fmt;

use super::ast::{BinOp, Ty, UnOp};
use super::RuntimeErrorKind;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

type VResult = Result<Value, RuntimeErrorKind>;

fn type_err(msg: impl Into<String>) -> RuntimeErrorKind {
    RuntimeErrorKind::Type(msg.into())
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Bool(_) => "bool",
            Value::Text(_) => "String",
        }
    }

    pub fn default_for(ty: Ty) -> Value {
        match ty {
            Ty::Float => Value::Float(0.0),
            Ty::Bool => Value::Bool(false),
            Ty::Text => Value::Text(String::new()),
            Ty::Int | Ty::Void => Value::Int(0),
        }
    }

    pub fn truthy(&self) -> Result<bool, RuntimeErrorKind> {
        match self {
            Value::Int(n) => Ok(*n != 0),
            Value::Float(x) => Ok(*x != 0.0),
            Value::Bool(b) => Ok(*b),
            Value::Text(_) => Err(type_err("String used as a condition")),
        }
    }

    pub fn as_int(&self) -> Result<i64, RuntimeErrorKind> {
        match self {
            Value::Int(n) => Ok(*n),
            Value::Float(x) => Ok(x.trunc() as i64),
            Value::Bool(b) => Ok(*b as i64),
            Value::Text(_) => Err(type_err("expected a number, found String")),
        }
    }

    pub fn as_float(&self) -> Result<f64, RuntimeErrorKind> {
        match self {
            Value::Int(n) => Ok(*n as f64),
            Value::Float(x) => Ok(*x),
            Value::Bool(b) => Ok(*b as i64 as f64),
            Value::Text(_) => Err(type_err("expected a number, found String")),
        }
    }

    /// Converts for storage into a slot of type `ty`.
    pub fn coerce(self, ty: Ty) -> VResult {
        Ok(match ty {
            Ty::Int => Value::Int(self.as_int()?),
            Ty::Float => Value::Float(self.as_float()?),
            Ty::Bool => Value::Bool(self.truthy()?),
            Ty::Text => match self {
                Value::Text(s) => Value::Text(s),
                other => Value::Text(other.to_string()),
            },
            Ty::Void => Value::Int(0),
        })
    }

    pub fn unary(self, op: UnOp) -> VResult {
        match op {
            UnOp::Not => Ok(Value::Bool(!self.truthy()?)),
            UnOp::Neg => match self {
                Value::Float(x) => Ok(Value::Float(-x)),
                Value::Text(_) => Err(type_err("cannot negate a String")),
                other => Ok(Value::Int(other.as_int()?.wrapping_neg())),
            },
            UnOp::BitNot => match self {
                Value::Int(_) | Value::Bool(_) => Ok(Value::Int(!self.as_int()?)),
                other => Err(type_err(format!("operator ~ needs an integer, found {}", other.type_name()))),
            },
        }
    }

    pub fn binary(self, op: BinOp, rhs: Value) -> VResult {
        use BinOp::*;
        let text = matches!(self, Value::Text(_)) || matches!(rhs, Value::Text(_));
        if text {
            return match op {
                Add => Ok(Value::Text(format!("{self}{rhs}"))),
                Eq | Ne | Lt | Le | Gt | Ge => match (&self, &rhs) {
                    (Value::Text(a), Value::Text(b)) => Ok(Value::Bool(compare(op, a.cmp(b)))),
                    _ => Err(type_err("cannot compare String with a number")),
                },
                _ => Err(type_err("arithmetic on String")),
            };
        }
        let float = matches!(self, Value::Float(_)) || matches!(rhs, Value::Float(_));
        match op {
            BitAnd | BitOr | BitXor | Shl | Shr => {
                if float {
                    return Err(type_err("bitwise operator on float"));
                }
                let (a, b) = (self.as_int()?, rhs.as_int()?);
                Ok(Value::Int(match op {
                    BitAnd => a & b,
                    BitOr => a | b,
                    BitXor => a ^ b,
                    Shl => a.wrapping_shl((b & 63) as u32),
                    _ => a.wrapping_shr((b & 63) as u32),
                }))
            }
            Eq | Ne | Lt | Le | Gt | Ge => {
                let ord = if float {
                    let (a, b) = (self.as_float()?, rhs.as_float()?);
                    match a.partial_cmp(&b) {
                        Some(o) => o,
                        // NaN compares unequal to everything
                        None => return Ok(Value::Bool(op == Ne)),
                    }
                } else {
                    self.as_int()?.cmp(&rhs.as_int()?)
                };
                Ok(Value::Bool(compare(op, ord)))
            }
            Add | Sub | Mul | Div | Rem if float => {
                let (a, b) = (self.as_float()?, rhs.as_float()?);
                Ok(Value::Float(match op {
                    Add => a + b,
                    Sub => a - b,
                    Mul => a * b,
                    Div => {
                        if b == 0.0 {
                            return Err(RuntimeErrorKind::DivisionByZero);
                        }
                        a / b
                    }
                    _ => return Err(type_err("operator % needs integers")),
                }))
            }
            _ => {
                let (a, b) = (self.as_int()?, rhs.as_int()?);
                Ok(Value::Int(match op {
                    Add => a.wrapping_add(b),
                    Sub => a.wrapping_sub(b),
                    Mul => a.wrapping_mul(b),
                    Div | Rem if b == 0 => return Err(RuntimeErrorKind::DivisionByZero),
                    Div => a.wrapping_div(b),
                    _ => a.wrapping_rem(b),
                }))
            }
        }
    }
}

fn compare(op: BinOp, ord: Ordering) -> bool {
    match op {
        BinOp::Eq => ord == Ordering::Equal,
        BinOp::Ne => ord != Ordering::Equal,
        BinOp::Lt => ord == Ordering::Less,
        BinOp::Le => ord != Ordering::Greater,
        BinOp::Gt => ord == Ordering::Greater,
        _ => ord != Ordering::Less,
    }
}

/// Formats the way Arduino's `print` does: floats with two decimals,
/// booleans as 1/0.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Float(x) => write!(f, "{x:.2}"),
            Value::Bool(b) => write!(f, "{}", *b as i64),
            Value::Text(s) => f.write_str(s),
        }
    }
}
