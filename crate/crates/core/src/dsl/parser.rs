//! Recursive-descent parser for driver and terminal-value expressions.
//!
//! Precedence, loosest first: `+ -`, `* /`, unary minus, `^`. Binary
//! operators associate to the left except `^`, which associates to the right
//! (`2^3^2 = 2^9`), and `-y^2` parses as `-(y^2)`.
//!
//! `^` is only accepted when it is total on finite inputs: the exponent must
//! be a constant integer, or the base a positive constant. Fractional powers
//! of a variable must be written `powabs(x, p)`.

use std::fmt;

use thiserror::Error;

use super::expr::{Bindings, BinaryOp, Expr, UnaryOp, Var};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected `{found}`, expected {}", expected.join(" or "))]
    Unexpected {
        found: String,
        expected: Vec<&'static str>,
    },
    #[error("unexpected end of input, expected {}", expected.join(" or "))]
    UnexpectedEnd { expected: Vec<&'static str> },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("`{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid number literal `{0}`")]
    InvalidNumber(String),
    #[error("`^` needs a constant integer exponent or a positive constant base; use powabs(x, p) for |x|^p")]
    NonIntegerPower,
}

/// A parse failure located at a byte offset of the source.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.kind)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            Tok::Op(c) => c.to_string(),
        }
    }
}

struct Lexed {
    tok: Tok,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Lexed>, (usize, ParseErrorKind)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| (start, ParseErrorKind::InvalidNumber(text.to_string())))?;
            out.push(Lexed {
                tok: Tok::Num(v),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Lexed {
                tok: Tok::Ident(src[start..i].to_string()),
                offset: start,
            });
        } else if "+-*/^(),".contains(c) {
            out.push(Lexed {
                tok: Tok::Op(c),
                offset: i,
            });
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err((
                i,
                ParseErrorKind::Unexpected {
                    found: ch.to_string(),
                    expected: vec!["number", "identifier", "operator"],
                },
            ));
        }
    }
    Ok(out)
}

fn locate(src: &str, offset: usize, kind: ParseErrorKind) -> ParseError {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |p| p + 1);
    ParseError {
        offset,
        line,
        column: before[line_start..].chars().count() + 1,
        kind,
    }
}

struct Parser<'a> {
    toks: &'a [Lexed],
    pos: usize,
    end: usize,
}

type PResult<T> = Result<T, (usize, ParseErrorKind)>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |l| l.offset)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char, name: &'static str) -> PResult<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(self.unexpected(vec![name]))
        }
    }

    fn unexpected(&self, expected: Vec<&'static str>) -> (usize, ParseErrorKind) {
        match self.peek() {
            Some(t) => (
                self.offset(),
                ParseErrorKind::Unexpected {
                    found: t.describe(),
                    expected,
                },
            ),
            None => (self.end, ParseErrorKind::UnexpectedEnd { expected }),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinaryOp::Add
            } else if self.eat('-') {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinaryOp::Mul
            } else if self.eat('/') {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat('-') {
            Ok(Expr::unary(UnaryOp::Neg, self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let at = self.offset();
        let exponent = self.unary()?;
        if !power_is_total(&base, &exponent) {
            return Err((at, ParseErrorKind::NonIntegerPower));
        }
        Ok(Expr::binary(BinaryOp::Pow, base, exponent))
    }

    fn atom(&mut self) -> PResult<Expr> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')', "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Op('(')) {
                    self.pos += 1;
                    let args = self.args()?;
                    return call(&name, args).map_err(|k| (at, k));
                }
                Var::from_name(&name)
                    .map(Expr::Var)
                    .ok_or((at, ParseErrorKind::UnknownIdentifier(name)))
            }
            _ => Err(self.unexpected(vec!["number", "identifier", "`(`"])),
        }
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if self.eat(')') {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(')') {
                return Ok(args);
            }
            if !self.eat(',') {
                return Err(self.unexpected(vec!["`,`", "`)`"]));
            }
        }
    }
}

fn call(name: &str, mut args: Vec<Expr>) -> Result<Expr, ParseErrorKind> {
    let arity = |expected: usize, found: usize| ParseErrorKind::Arity {
        name: name.to_string(),
        expected,
        found,
    };
    if let Some(op) = UnaryOp::from_name(name) {
        if args.len() != 1 {
            return Err(arity(1, args.len()));
        }
        return Ok(Expr::unary(op, args.pop().unwrap()));
    }
    if let Some(op) = BinaryOp::function(name) {
        if args.len() != 2 {
            return Err(arity(2, args.len()));
        }
        let r = args.pop().unwrap();
        let l = args.pop().unwrap();
        return Ok(Expr::binary(op, l, r));
    }
    Err(ParseErrorKind::UnknownIdentifier(name.to_string()))
}

fn constant_value(e: &Expr) -> Option<f64> {
    if e.free_vars().is_empty() {
        e.evaluate(&Bindings::default()).ok()
    } else {
        None
    }
}

fn power_is_total(base: &Expr, exponent: &Expr) -> bool {
    if let Some(p) = constant_value(exponent) {
        if p.fract() == 0.0 {
            return true;
        }
    }
    matches!(constant_value(base), Some(b) if b > 0.0)
}

/// Parse an expression. Diagnostics carry the byte offset and line/column.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let toks = lex(source).map_err(|(at, k)| locate(source, at, k))?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: source.len(),
    };
    let e = p.expr().map_err(|(at, k)| locate(source, at, k))?;
    if p.pos != toks.len() {
        let (at, k) = p.unexpected(vec!["operator", "end of input"]);
        return Err(locate(source, at, k));
    }
    Ok(e)
}
