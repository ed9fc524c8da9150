//! Static code metrics: lines of code and cyclomatic complexity.

use serde::Serialize;

use super::ast::{Expr, ExprKind, Init, Stmt};
use super::Program;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CodeMetrics {
    pub lines_of_code: usize,
    pub cyclomatic_complexity: usize,
}

pub fn code_metrics(source: &str, program: &Program) -> CodeMetrics {
    CodeMetrics {
        lines_of_code: lines_of_code(source),
        cyclomatic_complexity: cyclomatic_complexity(program),
    }
}

/// Counts lines that still contain something after removing `//` and
/// `/* */` comments. Comment markers inside string or character literals
/// are left alone.
pub fn lines_of_code(source: &str) -> usize {
    #[derive(PartialEq)]
    enum St {
        Code,
        Block,
        Str(char),
    }
    let mut st = St::Code;
    let mut count = 0;
    for line in source.lines() {
        let mut has_code = false;
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            match st {
                St::Block => {
                    if c == '*' && chars.peek() == Some(&'/') {
                        chars.next();
                        st = St::Code;
                    }
                }
                St::Str(q) => {
                    has_code = true;
                    if c == '\\' {
                        chars.next();
                    } else if c == q {
                        st = St::Code;
                    }
                }
                St::Code => {
                    if c == '/' && chars.peek() == Some(&'/') {
                        break;
                    } else if c == '/' && chars.peek() == Some(&'*') {
                        chars.next();
                        st = St::Block;
                    } else if c == '"' || c == '\'' {
                        has_code = true;
                        st = St::Str(c);
                    } else if !c.is_whitespace() {
                        has_code = true;
                    }
                }
            }
        }
        // an unterminated literal does not continue onto the next line
        if matches!(st, St::Str(_)) {
            st = St::Code;
        }
        if has_code {
            count += 1;
        }
    }
    count
}

/// 1 + decision points over the whole program: each `if` (including
/// `else if`), `while`, `do`-`while`, `for`, `case` label, `&&`, `||` and
/// `?:`.
pub fn cyclomatic_complexity(program: &Program) -> usize {
    let mut n = 1;
    for g in program.globals() {
        match &g.init {
            Some(Init::Expr(e)) => n += expr_decisions(e),
            Some(Init::List(items)) => n += items.iter().map(expr_decisions).sum::<usize>(),
            None => {}
        }
    }
    for f in program.functions() {
        n += f.body.iter().map(stmt_decisions).sum::<usize>();
    }
    n
}

fn stmt_decisions(s: &Stmt) -> usize {
    match s {
        Stmt::Block(body) => body.iter().map(stmt_decisions).sum(),
        Stmt::Decl(decls) => decls
            .iter()
            .map(|d| match &d.init {
                Some(Init::Expr(e)) => expr_decisions(e),
                Some(Init::List(items)) => items.iter().map(expr_decisions).sum(),
                None => 0,
            })
            .sum(),
        Stmt::If { cond, then, els, .. } => {
            1 + expr_decisions(cond) + stmt_decisions(then) + els.as_deref().map_or(0, stmt_decisions)
        }
        Stmt::While { cond, body, .. } | Stmt::DoWhile { body, cond, .. } => {
            1 + expr_decisions(cond) + stmt_decisions(body)
        }
        Stmt::For {
            init,
            cond,
            update,
            body,
            ..
        } => {
            1 + init.iter().map(stmt_decisions).sum::<usize>()
                + cond.as_ref().map_or(0, expr_decisions)
                + update.iter().map(stmt_decisions).sum::<usize>()
                + stmt_decisions(body)
        }
        Stmt::Switch { scrutinee, cases, .. } => {
            expr_decisions(scrutinee)
                + cases
                    .iter()
                    .map(|c| {
                        c.label.is_some() as usize
                            + c.label.as_ref().map_or(0, expr_decisions)
                            + c.body.iter().map(stmt_decisions).sum::<usize>()
                    })
                    .sum::<usize>()
        }
        Stmt::Return(e, _) => e.as_ref().map_or(0, expr_decisions),
        Stmt::Assign { target, value, .. } => {
            target.index.as_deref().map_or(0, expr_decisions) + expr_decisions(value)
        }
        Stmt::IncDec { target, .. } => target.index.as_deref().map_or(0, expr_decisions),
        Stmt::Expr(e) => expr_decisions(e),
        Stmt::Break(_) | Stmt::Continue(_) | Stmt::Empty => 0,
    }
}

fn expr_decisions(e: &Expr) -> usize {
    match &e.kind {
        ExprKind::And(a, b) | ExprKind::Or(a, b) => 1 + expr_decisions(a) + expr_decisions(b),
        ExprKind::Ternary(c, a, b) => 1 + expr_decisions(c) + expr_decisions(a) + expr_decisions(b),
        ExprKind::Binary(_, a, b) => expr_decisions(a) + expr_decisions(b),
        ExprKind::Unary(_, a) | ExprKind::Cast(_, a) | ExprKind::Index(_, a) => expr_decisions(a),
        ExprKind::Call(_, args) => args.iter().map(expr_decisions).sum(),
        ExprKind::Method(r, _, args) => expr_decisions(r) + args.iter().map(expr_decisions).sum::<usize>(),
        ExprKind::Int(_) | ExprKind::Float(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Var(_) => 0,
    }
}
