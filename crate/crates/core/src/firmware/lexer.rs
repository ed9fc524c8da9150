use std::fmt;

use super::{FirmwareError, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    // keywords
    If,
    Else,
    While,
    Do,
    For,
    Switch,
    Case,
    Default,
    Break,
    Continue,
    Return,
    True,
    False,
    Const,
    Unsigned,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Dot,
    Colon,
    Question,
    // operators
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    PlusPlus,
    MinusMinus,
    Assign,
    PlusAssign,
    MinusAssign,
    StarAssign,
    SlashAssign,
    PercentAssign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Not,
    Amp,
    Pipe,
    Caret,
    Tilde,
    Shl,
    Shr,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Float(x) => write!(f, "`{x}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Eof => f.write_str("end of input"),
            other => write!(f, "`{}`", punct_text(other)),
        }
    }
}

fn punct_text(t: &Tok) -> &'static str {
    match t {
        Tok::If => "if",
        Tok::Else => "else",
        Tok::While => "while",
        Tok::Do => "do",
        Tok::For => "for",
        Tok::Switch => "switch",
        Tok::Case => "case",
        Tok::Default => "default",
        Tok::Break => "break",
        Tok::Continue => "continue",
        Tok::Return => "return",
        Tok::True => "true",
        Tok::False => "false",
        Tok::Const => "const",
        Tok::Unsigned => "unsigned",
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::LBracket => "[",
        Tok::RBracket => "]",
        Tok::Semi => ";",
        Tok::Comma => ",",
        Tok::Dot => ".",
        Tok::Colon => ":",
        Tok::Question => "?",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        Tok::Percent => "%",
        Tok::PlusPlus => "++",
        Tok::MinusMinus => "--",
        Tok::Assign => "=",
        Tok::PlusAssign => "+=",
        Tok::MinusAssign => "-=",
        Tok::StarAssign => "*=",
        Tok::SlashAssign => "/=",
        Tok::PercentAssign => "%=",
        Tok::Eq => "==",
        Tok::Ne => "!=",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::AndAnd => "&&",
        Tok::OrOr => "||",
        Tok::Not => "!",
        Tok::Amp => "&",
        Tok::Pipe => "|",
        Tok::Caret => "^",
        Tok::Tilde => "~",
        Tok::Shl => "<<",
        Tok::Shr => ">>",
        _ => "?",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

struct Lexer<'a> {
    src: &'a [u8],
    i: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&self, k: usize) -> u8 {
        self.src.get(self.i + k).copied().unwrap_or(0)
    }

    fn bump(&mut self) -> u8 {
        let c = self.peek(0);
        self.i += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else if c & 0xC0 != 0x80 {
            // count columns in characters, not UTF-8 continuation bytes
            self.col += 1;
        }
        c
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn err(&self, pos: Pos, msg: impl Into<String>) -> FirmwareError {
        FirmwareError::Lex {
            pos,
            message: msg.into(),
        }
    }

    fn skip_trivia(&mut self) -> Result<(), FirmwareError> {
        loop {
            match (self.peek(0), self.peek(1)) {
                (b' ' | b'\t' | b'\r' | b'\n', _) => {
                    self.bump();
                }
                (b'/', b'/') => {
                    while self.i < self.src.len() && self.peek(0) != b'\n' {
                        self.bump();
                    }
                }
                (b'/', b'*') => {
                    let start = self.pos();
                    self.bump();
                    self.bump();
                    loop {
                        if self.i >= self.src.len() {
                            return Err(self.err(start, "unterminated block comment"));
                        }
                        if self.peek(0) == b'*' && self.peek(1) == b'/' {
                            self.bump();
                            self.bump();
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn number(&mut self, pos: Pos) -> Result<Tok, FirmwareError> {
        let start = self.i;
        if self.peek(0) == b'0' && matches!(self.peek(1), b'x' | b'X') {
            self.bump();
            self.bump();
            let s = self.i;
            while self.peek(0).is_ascii_hexdigit() {
                self.bump();
            }
            let text = std::str::from_utf8(&self.src[s..self.i]).unwrap_or("");
            let n = i64::from_str_radix(text, 16).map_err(|_| self.err(pos, "invalid hex literal"))?;
            self.integer_suffix();
            return Ok(Tok::Int(n));
        }
        if self.peek(0) == b'0' && matches!(self.peek(1), b'b' | b'B') {
            self.bump();
            self.bump();
            let s = self.i;
            while matches!(self.peek(0), b'0' | b'1') {
                self.bump();
            }
            let text = std::str::from_utf8(&self.src[s..self.i]).unwrap_or("");
            let n = i64::from_str_radix(text, 2).map_err(|_| self.err(pos, "invalid binary literal"))?;
            self.integer_suffix();
            return Ok(Tok::Int(n));
        }
        let mut is_float = false;
        while self.peek(0).is_ascii_digit() {
            self.bump();
        }
        if self.peek(0) == b'.' && self.peek(1).is_ascii_digit() {
            is_float = true;
            self.bump();
            while self.peek(0).is_ascii_digit() {
                self.bump();
            }
        }
        if matches!(self.peek(0), b'e' | b'E') {
            is_float = true;
            self.bump();
            if matches!(self.peek(0), b'+' | b'-') {
                self.bump();
            }
            while self.peek(0).is_ascii_digit() {
                self.bump();
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.i]).unwrap_or("");
        if is_float || matches!(self.peek(0), b'f' | b'F') {
            if matches!(self.peek(0), b'f' | b'F') {
                self.bump();
            }
            let x: f64 = text.parse().map_err(|_| self.err(pos, "invalid float literal"))?;
            return Ok(Tok::Float(x));
        }
        let n: i64 = text.parse().map_err(|_| self.err(pos, "integer literal out of range"))?;
        self.integer_suffix();
        Ok(Tok::Int(n))
    }

    fn integer_suffix(&mut self) {
        while matches!(self.peek(0), b'u' | b'U' | b'l' | b'L') {
            self.bump();
        }
    }

    fn escape(&mut self, pos: Pos) -> Result<char, FirmwareError> {
        Ok(match self.bump() {
            b'n' => '\n',
            b't' => '\t',
            b'r' => '\r',
            b'0' => '\0',
            b'\\' => '\\',
            b'"' => '"',
            b'\'' => '\'',
            _ => return Err(self.err(pos, "unknown escape sequence")),
        })
    }

    fn string(&mut self, pos: Pos) -> Result<Tok, FirmwareError> {
        self.bump();
        let mut bytes = Vec::new();
        loop {
            match self.peek(0) {
                0 if self.i >= self.src.len() => return Err(self.err(pos, "unterminated string")),
                b'\n' => return Err(self.err(pos, "unterminated string")),
                b'"' => {
                    self.bump();
                    break;
                }
                b'\\' => {
                    self.bump();
                    let c = self.escape(pos)?;
                    let mut buf = [0u8; 4];
                    bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                }
                _ => bytes.push(self.bump()),
            }
        }
        String::from_utf8(bytes)
            .map(Tok::Str)
            .map_err(|_| self.err(pos, "invalid UTF-8 in string"))
    }

    fn char_lit(&mut self, pos: Pos) -> Result<Tok, FirmwareError> {
        self.bump();
        let c = match self.peek(0) {
            b'\\' => {
                self.bump();
                self.escape(pos)?
            }
            b'\'' | b'\n' | 0 => return Err(self.err(pos, "empty character literal")),
            _ => {
                let rest = std::str::from_utf8(&self.src[self.i..]).map_err(|_| self.err(pos, "invalid UTF-8"))?;
                let c = rest.chars().next().unwrap_or('\0');
                for _ in 0..c.len_utf8() {
                    self.bump();
                }
                c
            }
        };
        if self.peek(0) != b'\'' {
            return Err(self.err(pos, "unterminated character literal"));
        }
        self.bump();
        Ok(Tok::Int(c as i64))
    }

    fn next_token(&mut self) -> Result<Token, FirmwareError> {
        self.skip_trivia()?;
        let pos = self.pos();
        let c = self.peek(0);
        if self.i >= self.src.len() {
            return Ok(Token { tok: Tok::Eof, pos });
        }
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            let s = self.i;
            while self.peek(0).is_ascii_alphanumeric() || self.peek(0) == b'_' {
                self.bump();
            }
            let word = std::str::from_utf8(&self.src[s..self.i]).unwrap_or("");
            keyword(word).unwrap_or_else(|| Tok::Ident(word.to_string()))
        } else if c.is_ascii_digit() {
            self.number(pos)?
        } else if c == b'"' {
            self.string(pos)?
        } else if c == b'\'' {
            self.char_lit(pos)?
        } else if c == b'#' {
            return Err(self.err(pos, "preprocessor directives are not supported"));
        } else {
            let two = [c, self.peek(1)];
            let t2 = match &two {
                b"++" => Some(Tok::PlusPlus),
                b"--" => Some(Tok::MinusMinus),
                b"+=" => Some(Tok::PlusAssign),
                b"-=" => Some(Tok::MinusAssign),
                b"*=" => Some(Tok::StarAssign),
                b"/=" => Some(Tok::SlashAssign),
                b"%=" => Some(Tok::PercentAssign),
                b"==" => Some(Tok::Eq),
                b"!=" => Some(Tok::Ne),
                b"<=" => Some(Tok::Le),
                b">=" => Some(Tok::Ge),
                b"&&" => Some(Tok::AndAnd),
                b"||" => Some(Tok::OrOr),
                b"<<" => Some(Tok::Shl),
                b">>" => Some(Tok::Shr),
                _ => None,
            };
            if let Some(t) = t2 {
                self.bump();
                self.bump();
                t
            } else {
                let t = match c {
                    b'(' => Tok::LParen,
                    b')' => Tok::RParen,
                    b'{' => Tok::LBrace,
                    b'}' => Tok::RBrace,
                    b'[' => Tok::LBracket,
                    b']' => Tok::RBracket,
                    b';' => Tok::Semi,
                    b',' => Tok::Comma,
                    b'.' => Tok::Dot,
                    b':' => Tok::Colon,
                    b'?' => Tok::Question,
                    b'+' => Tok::Plus,
                    b'-' => Tok::Minus,
                    b'*' => Tok::Star,
                    b'/' => Tok::Slash,
                    b'%' => Tok::Percent,
                    b'=' => Tok::Assign,
                    b'<' => Tok::Lt,
                    b'>' => Tok::Gt,
                    b'!' => Tok::Not,
                    b'&' => Tok::Amp,
                    b'|' => Tok::Pipe,
                    b'^' => Tok::Caret,
                    b'~' => Tok::Tilde,
                    _ => {
                        let rest = std::str::from_utf8(&self.src[self.i..]).unwrap_or("");
                        let ch = rest.chars().next().unwrap_or('?');
                        return Err(self.err(pos, format!("unexpected character '{ch}'")));
                    }
                };
                self.bump();
                t
            }
        };
        Ok(Token { tok, pos })
    }
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "if" => Tok::If,
        "else" => Tok::Else,
        "while" => Tok::While,
        "do" => Tok::Do,
        "for" => Tok::For,
        "switch" => Tok::Switch,
        "case" => Tok::Case,
        "default" => Tok::Default,
        "break" => Tok::Break,
        "continue" => Tok::Continue,
        "return" => Tok::Return,
        "true" => Tok::True,
        "false" => Tok::False,
        "const" => Tok::Const,
        "unsigned" => Tok::Unsigned,
        _ => return None,
    })
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, FirmwareError> {
    let mut lx = Lexer {
        src: source.as_bytes(),
        i: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let done = t.tok == Tok::Eof;
        out.push(t);
        if done {
            return Ok(out);
        }
    }
}
