use super::ast::*;
use super::lexer::{Tok, Token};
use super::{FirmwareError, Pos};

struct Parser {
    toks: Vec<Token>,
    i: usize,
}

type PResult<T> = Result<T, FirmwareError>;

const MODIFIERS: [&str; 2] = ["static", "volatile"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let idx = (self.i + k).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &str) -> FirmwareError {
        FirmwareError::Syntax {
            pos: self.pos(),
            message: format!("expected {expected}, found {}", self.peek()),
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> PResult<Pos> {
        if self.peek() == &t {
            Ok(self.advance().pos)
        } else {
            Err(self.error(what))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let pos = self.advance().pos;
                Ok((name, pos))
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn type_at(&self, k: usize) -> bool {
        match self.peek_at(k) {
            Tok::Unsigned | Tok::Const => true,
            Tok::Ident(n) => Ty::from_name(n).is_some() || MODIFIERS.contains(&n.as_str()),
            _ => false,
        }
    }

    /// True when the upcoming tokens start a variable declaration.
    fn at_declaration(&self) -> bool {
        match self.peek() {
            Tok::Const | Tok::Unsigned => true,
            Tok::Ident(n) if MODIFIERS.contains(&n.as_str()) => true,
            Tok::Ident(n) if Ty::from_name(n).is_some() => matches!(self.peek_at(1), Tok::Ident(_)),
            _ => false,
        }
    }

    /// Parses `[const] [static|volatile] [unsigned] typename...`.
    fn parse_type(&mut self) -> PResult<(Ty, bool)> {
        let mut is_const = false;
        let mut ty = None;
        loop {
            match self.peek().clone() {
                Tok::Const => {
                    self.advance();
                    is_const = true;
                }
                Tok::Unsigned => {
                    self.advance();
                    ty.get_or_insert(Ty::Int);
                }
                Tok::Ident(n) if MODIFIERS.contains(&n.as_str()) => {
                    self.advance();
                }
                Tok::Ident(n) => match Ty::from_name(&n) {
                    // `long long`, `unsigned long int`
                    Some(t) if ty.is_none() || (ty == Some(Ty::Int) && t == Ty::Int) => {
                        self.advance();
                        ty = Some(t);
                    }
                    _ => break,
                },
                _ => break,
            }
        }
        match ty {
            Some(t) => Ok((t, is_const)),
            None => Err(self.error("type name")),
        }
    }

    fn program(&mut self) -> PResult<Ast> {
        let mut globals = Vec::new();
        let mut functions: Vec<Function> = Vec::new();
        while self.peek() != &Tok::Eof {
            if self.eat(&Tok::Semi) {
                continue;
            }
            let start = self.pos();
            if !self.type_at(0) {
                return Err(self.error("declaration or function definition"));
            }
            let (ty, is_const) = self.parse_type()?;
            let (name, pos) = self.ident()?;
            if self.peek() == &Tok::LParen {
                let params = self.params()?;
                if self.eat(&Tok::Semi) {
                    // forward declaration, nothing to record
                    continue;
                }
                let body = self.block()?;
                if functions.iter().any(|f| f.name == name) {
                    return Err(FirmwareError::DuplicateFunction { name, pos });
                }
                functions.push(Function {
                    name,
                    ret: ty,
                    params,
                    body,
                    pos: start,
                });
            } else {
                if ty == Ty::Void {
                    return Err(FirmwareError::Syntax {
                        pos,
                        message: "variables cannot have type void".into(),
                    });
                }
                let decls = self.declarators(ty, is_const, name, pos)?;
                self.expect(Tok::Semi, "`;`")?;
                globals.extend(decls);
            }
        }
        Ok(Ast { globals, functions })
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(params);
        }
        if matches!(self.peek(), Tok::Ident(n) if n == "void") && self.peek_at(1) == &Tok::RParen {
            self.advance();
            self.advance();
            return Ok(params);
        }
        loop {
            let pos = self.pos();
            let (ty, _) = self.parse_type()?;
            if ty == Ty::Void {
                return Err(FirmwareError::Syntax {
                    pos,
                    message: "parameters cannot have type void".into(),
                });
            }
            let (name, _) = self.ident()?;
            params.push(Param { name, ty, pos });
            if self.eat(&Tok::RParen) {
                return Ok(params);
            }
            self.expect(Tok::Comma, "`,` or `)`")?;
        }
    }

    fn declarators(&mut self, ty: Ty, is_const: bool, first: String, first_pos: Pos) -> PResult<Vec<VarDecl>> {
        let mut out = vec![self.declarator(ty, is_const, first, first_pos)?];
        while self.eat(&Tok::Comma) {
            let (name, pos) = self.ident()?;
            out.push(self.declarator(ty, is_const, name, pos)?);
        }
        Ok(out)
    }

    fn declarator(&mut self, ty: Ty, is_const: bool, name: String, pos: Pos) -> PResult<VarDecl> {
        let mut array = None;
        if self.eat(&Tok::LBracket) {
            if self.eat(&Tok::RBracket) {
                array = Some(None);
            } else {
                let n = match self.peek().clone() {
                    Tok::Int(n) if n > 0 && n <= 65_536 => n as usize,
                    _ => return Err(self.error("positive array length")),
                };
                self.advance();
                self.expect(Tok::RBracket, "`]`")?;
                array = Some(Some(n));
            }
        }
        let mut init = None;
        if self.eat(&Tok::Assign) {
            if self.peek() == &Tok::LBrace {
                if array.is_none() {
                    return Err(self.error("expression"));
                }
                self.advance();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        items.push(self.expr()?);
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                        self.expect(Tok::Comma, "`,` or `}`")?;
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                    }
                }
                init = Some(Init::List(items));
            } else {
                if array.is_some() {
                    return Err(self.error("`{`"));
                }
                init = Some(Init::Expr(self.expr()?));
            }
        }
        match (&array, &init) {
            (Some(None), None) => {
                return Err(FirmwareError::Syntax {
                    pos,
                    message: format!("array `{name}` needs a length or an initializer list"),
                })
            }
            (Some(Some(n)), Some(Init::List(items))) if items.len() > *n => {
                return Err(FirmwareError::Syntax {
                    pos,
                    message: format!("too many initializers for `{name}[{n}]`"),
                })
            }
            _ => {}
        }
        Ok(VarDecl {
            name,
            ty,
            is_const,
            array,
            init,
            pos,
        })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut body = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.peek() == &Tok::Eof {
                return Err(self.error("`}`"));
            }
            body.push(self.stmt()?);
        }
        Ok(body)
    }

    fn local_decl(&mut self) -> PResult<Stmt> {
        let (ty, is_const) = self.parse_type()?;
        let (name, pos) = self.ident()?;
        if ty == Ty::Void {
            return Err(FirmwareError::Syntax {
                pos,
                message: "variables cannot have type void".into(),
            });
        }
        Ok(Stmt::Decl(self.declarators(ty, is_const, name, pos)?))
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        match self.peek() {
            Tok::LBrace => Ok(Stmt::Block(self.block()?)),
            Tok::Semi => {
                self.advance();
                Ok(Stmt::Empty)
            }
            Tok::If => {
                self.advance();
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                let then = Box::new(self.stmt()?);
                let els = if self.eat(&Tok::Else) {
                    Some(Box::new(self.stmt()?))
                } else {
                    None
                };
                Ok(Stmt::If { cond, then, els, pos })
            }
            Tok::While => {
                self.advance();
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                let body = Box::new(self.stmt()?);
                Ok(Stmt::While { cond, body, pos })
            }
            Tok::Do => {
                self.advance();
                let body = Box::new(self.stmt()?);
                self.expect(Tok::While, "`while`")?;
                self.expect(Tok::LParen, "`(`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(Stmt::DoWhile { body, cond, pos })
            }
            Tok::For => {
                self.advance();
                self.expect(Tok::LParen, "`(`")?;
                let mut init = Vec::new();
                if !self.eat(&Tok::Semi) {
                    if self.at_declaration() {
                        init.push(self.local_decl()?);
                    } else {
                        init = self.simple_list()?;
                    }
                    self.expect(Tok::Semi, "`;`")?;
                }
                let cond = if self.peek() == &Tok::Semi {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(Tok::Semi, "`;`")?;
                let update = if self.peek() == &Tok::RParen {
                    Vec::new()
                } else {
                    self.simple_list()?
                };
                self.expect(Tok::RParen, "`)`")?;
                let body = Box::new(self.stmt()?);
                Ok(Stmt::For {
                    init,
                    cond,
                    update,
                    body,
                    pos,
                })
            }
            Tok::Switch => self.switch(pos),
            Tok::Break => {
                self.advance();
                self.expect(Tok::Semi, "`;`")?;
                Ok(Stmt::Break(pos))
            }
            Tok::Continue => {
                self.advance();
                self.expect(Tok::Semi, "`;`")?;
                Ok(Stmt::Continue(pos))
            }
            Tok::Return => {
                self.advance();
                let value = if self.peek() == &Tok::Semi {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(Tok::Semi, "`;`")?;
                Ok(Stmt::Return(value, pos))
            }
            _ if self.at_declaration() => {
                let d = self.local_decl()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(d)
            }
            _ => {
                let s = self.simple()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(s)
            }
        }
    }

    fn switch(&mut self, pos: Pos) -> PResult<Stmt> {
        self.advance();
        self.expect(Tok::LParen, "`(`")?;
        let scrutinee = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut cases: Vec<Case> = Vec::new();
        loop {
            let cpos = self.pos();
            match self.peek() {
                Tok::RBrace => {
                    self.advance();
                    break;
                }
                Tok::Case => {
                    self.advance();
                    let label = self.expr()?;
                    self.expect(Tok::Colon, "`:`")?;
                    cases.push(Case {
                        label: Some(label),
                        body: Vec::new(),
                        pos: cpos,
                    });
                }
                Tok::Default => {
                    self.advance();
                    self.expect(Tok::Colon, "`:`")?;
                    if cases.iter().any(|c| c.label.is_none()) {
                        return Err(FirmwareError::Syntax {
                            pos: cpos,
                            message: "duplicate `default` label".into(),
                        });
                    }
                    cases.push(Case {
                        label: None,
                        body: Vec::new(),
                        pos: cpos,
                    });
                }
                Tok::Eof => return Err(self.error("`}`")),
                _ => {
                    let s = self.stmt()?;
                    match cases.last_mut() {
                        Some(c) => c.body.push(s),
                        None => {
                            return Err(FirmwareError::Syntax {
                                pos: cpos,
                                message: "statement before first `case` label".into(),
                            })
                        }
                    }
                }
            }
        }
        Ok(Stmt::Switch { scrutinee, cases, pos })
    }

    fn simple_list(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = vec![self.simple()?];
        while self.eat(&Tok::Comma) {
            out.push(self.simple()?);
        }
        Ok(out)
    }

    /// Assignment, increment/decrement, or a bare expression.
    fn simple(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        if matches!(self.peek(), Tok::PlusPlus | Tok::MinusMinus) {
            let delta = if self.advance().tok == Tok::PlusPlus { 1 } else { -1 };
            let e = self.unary()?;
            let target = to_lvalue(e)?;
            return Ok(Stmt::IncDec { target, delta, pos });
        }
        let e = self.expr()?;
        let op = match self.peek() {
            Tok::Assign => Some(AssignOp::Set),
            Tok::PlusAssign => Some(AssignOp::Add),
            Tok::MinusAssign => Some(AssignOp::Sub),
            Tok::StarAssign => Some(AssignOp::Mul),
            Tok::SlashAssign => Some(AssignOp::Div),
            Tok::PercentAssign => Some(AssignOp::Rem),
            Tok::PlusPlus | Tok::MinusMinus => {
                let delta = if self.advance().tok == Tok::PlusPlus { 1 } else { -1 };
                return Ok(Stmt::IncDec {
                    target: to_lvalue(e)?,
                    delta,
                    pos,
                });
            }
            _ => None,
        };
        match op {
            Some(op) => {
                self.advance();
                let target = to_lvalue(e)?;
                let value = self.expr()?;
                Ok(Stmt::Assign { target, op, value, pos })
            }
            None => Ok(Stmt::Expr(e)),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let cond = self.or()?;
        if self.peek() == &Tok::Question {
            let pos = self.advance().pos;
            let a = self.expr()?;
            self.expect(Tok::Colon, "`:`")?;
            let b = self.expr()?;
            return Ok(Expr {
                kind: ExprKind::Ternary(Box::new(cond), Box::new(a), Box::new(b)),
                pos,
            });
        }
        Ok(cond)
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut lhs = self.and()?;
        while self.peek() == &Tok::OrOr {
            let pos = self.advance().pos;
            let rhs = self.and()?;
            lhs = Expr {
                kind: ExprKind::Or(Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut lhs = self.binary(0)?;
        while self.peek() == &Tok::AndAnd {
            let pos = self.advance().pos;
            let rhs = self.binary(0)?;
            lhs = Expr {
                kind: ExprKind::And(Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    /// Left-associative binary levels from `|` (0) up to `*` (7).
    fn binary(&mut self, level: usize) -> PResult<Expr> {
        if level == BIN_LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = BIN_LEVELS[level]
                .iter()
                .find(|(t, _)| t == self.peek())
                .map(|(_, op)| *op);
            let Some(op) = op else { break };
            let pos = self.advance().pos;
            let rhs = self.binary(level + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let op = match self.peek() {
            Tok::Minus => Some(UnOp::Neg),
            Tok::Not => Some(UnOp::Not),
            Tok::Tilde => Some(UnOp::BitNot),
            Tok::Plus => {
                self.advance();
                return self.unary();
            }
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let inner = self.unary()?;
            // fold negative literals so `-9223372036854775808`-style edge cases stay simple
            return Ok(match (op, inner.kind) {
                (UnOp::Neg, ExprKind::Int(n)) => Expr {
                    kind: ExprKind::Int(n.wrapping_neg()),
                    pos,
                },
                (UnOp::Neg, ExprKind::Float(x)) => Expr {
                    kind: ExprKind::Float(-x),
                    pos,
                },
                (op, kind) => Expr {
                    kind: ExprKind::Unary(op, Box::new(Expr { kind, pos: inner.pos })),
                    pos,
                },
            });
        }
        // C-style cast: `(int) x`
        if self.peek() == &Tok::LParen && self.type_at(1) {
            let save = self.i;
            self.advance();
            if let Ok((ty, _)) = self.parse_type() {
                if self.eat(&Tok::RParen) && ty != Ty::Void {
                    let inner = self.unary()?;
                    return Ok(Expr {
                        kind: ExprKind::Cast(ty, Box::new(inner)),
                        pos,
                    });
                }
            }
            self.i = save;
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Tok::LBracket => {
                    let pos = self.advance().pos;
                    let idx = self.expr()?;
                    self.expect(Tok::RBracket, "`]`")?;
                    let name = match e.kind {
                        ExprKind::Var(name) => name,
                        _ => {
                            return Err(FirmwareError::Syntax {
                                pos,
                                message: "only named arrays can be indexed".into(),
                            })
                        }
                    };
                    e = Expr {
                        kind: ExprKind::Index(name, Box::new(idx)),
                        pos: e.pos,
                    };
                }
                Tok::Dot => {
                    self.advance();
                    let (name, pos) = self.ident()?;
                    if self.peek() != &Tok::LParen {
                        return Err(self.error("`(` after method name"));
                    }
                    let args = self.args()?;
                    e = Expr {
                        kind: ExprKind::Method(Box::new(e), name, args),
                        pos,
                    };
                }
                _ => return Ok(e),
            }
        }
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::RParen) {
                return Ok(args);
            }
            self.expect(Tok::Comma, "`,` or `)`")?;
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                ExprKind::Int(n)
            }
            Tok::Float(x) => {
                self.advance();
                ExprKind::Float(x)
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::Str(s)
            }
            Tok::True => {
                self.advance();
                ExprKind::Bool(true)
            }
            Tok::False => {
                self.advance();
                ExprKind::Bool(false)
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(e);
            }
            Tok::Ident(name) => {
                self.advance();
                if self.peek() == &Tok::LParen {
                    let args = self.args()?;
                    match Ty::from_name(&name) {
                        Some(Ty::Void) => {
                            return Err(FirmwareError::Syntax {
                                pos,
                                message: "cannot convert to void".into(),
                            })
                        }
                        Some(ty) => {
                            if args.len() != 1 {
                                return Err(FirmwareError::Syntax {
                                    pos,
                                    message: format!("conversion `{name}(...)` takes exactly one argument"),
                                });
                            }
                            let arg = args.into_iter().next().expect("one argument");
                            ExprKind::Cast(ty, Box::new(arg))
                        }
                        None => ExprKind::Call(name, args),
                    }
                } else {
                    ExprKind::Var(name)
                }
            }
            _ => return Err(self.error("expression")),
        };
        Ok(Expr { kind, pos })
    }
}

const BIN_LEVELS: [&[(Tok, BinOp)]; 8] = [
    &[(Tok::Pipe, BinOp::BitOr)],
    &[(Tok::Caret, BinOp::BitXor)],
    &[(Tok::Amp, BinOp::BitAnd)],
    &[(Tok::Eq, BinOp::Eq), (Tok::Ne, BinOp::Ne)],
    &[
        (Tok::Lt, BinOp::Lt),
        (Tok::Le, BinOp::Le),
        (Tok::Gt, BinOp::Gt),
        (Tok::Ge, BinOp::Ge),
    ],
    &[(Tok::Shl, BinOp::Shl), (Tok::Shr, BinOp::Shr)],
    &[(Tok::Plus, BinOp::Add), (Tok::Minus, BinOp::Sub)],
    &[(Tok::Star, BinOp::Mul), (Tok::Slash, BinOp::Div), (Tok::Percent, BinOp::Rem)],
];

fn to_lvalue(e: Expr) -> PResult<LValue> {
    match e.kind {
        ExprKind::Var(name) => Ok(LValue {
            name,
            index: None,
            pos: e.pos,
        }),
        ExprKind::Index(name, idx) => Ok(LValue {
            name,
            index: Some(idx),
            pos: e.pos,
        }),
        _ => Err(FirmwareError::Syntax {
            pos: e.pos,
            message: "left side of assignment must be a variable or array element".into(),
        }),
    }
}

pub fn parse(tokens: Vec<Token>) -> Result<Ast, FirmwareError> {
    Parser { toks: tokens, i: 0 }.program()
}
