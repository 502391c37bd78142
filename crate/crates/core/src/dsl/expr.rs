use std::fmt;

use thiserror::Error;

/// Variables the expression language knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    Y,
    Z,
    /// Brownian position at the horizon, only meaningful in terminal values.
    W,
    /// Family parameter.
    Lam,
}

impl Var {
    pub fn from_name(name: &str) -> Option<Var> {
        match name {
            "t" => Some(Var::T),
            "y" => Some(Var::Y),
            "z" => Some(Var::Z),
            "w" => Some(Var::W),
            "lam" => Some(Var::Lam),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::Y => "y",
            Var::Z => "z",
            Var::W => "w",
            Var::Lam => "lam",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sgn,
    Exp,
    Sqrt,
}

impl UnaryOp {
    pub fn from_name(name: &str) -> Option<UnaryOp> {
        match name {
            "abs" => Some(UnaryOp::Abs),
            "sgn" => Some(UnaryOp::Sgn),
            "exp" => Some(UnaryOp::Exp),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Abs => "abs",
            UnaryOp::Sgn => "sgn",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
    /// `powabs(x, p) = |x|^p`
    PowAbs,
}

impl BinaryOp {
    /// Two-argument functions written in call syntax.
    pub fn function(name: &str) -> Option<BinaryOp> {
        match name {
            "min" => Some(BinaryOp::Min),
            "max" => Some(BinaryOp::Max),
            "powabs" => Some(BinaryOp::PowAbs),
            _ => None,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
            BinaryOp::PowAbs => "powabs",
        }
    }

    fn is_call(self) -> bool {
        matches!(self, BinaryOp::Min | BinaryOp::Max | BinaryOp::PowAbs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(&'static str),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result in `{0}`")]
    NonFinite(&'static str),
}

/// Variable bindings for one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bindings {
    pub t: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub w: Option<f64>,
    pub lam: Option<f64>,
}

impl Bindings {
    pub fn driver(t: f64, y: f64, z: f64) -> Self {
        Bindings {
            t: Some(t),
            y: Some(y),
            z: Some(z),
            ..Default::default()
        }
    }

    pub fn terminal(w: f64) -> Self {
        Bindings {
            w: Some(w),
            ..Default::default()
        }
    }

    pub fn with_lam(mut self, lam: f64) -> Self {
        self.lam = Some(lam);
        self
    }

    fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::T => self.t,
            Var::Y => self.y,
            Var::Z => self.z,
            Var::W => self.w,
            Var::Lam => self.lam,
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn evaluate(&self, env: &Bindings) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(var) => env.get(*var).ok_or(EvalError::Unbound(var.name()))?,
            Expr::Unary(op, e) => {
                let x = e.evaluate(env)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Abs => x.abs(),
                    UnaryOp::Sgn => {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Sqrt => x.sqrt(),
                }
            }
            Expr::Binary(op, l, r) => {
                let a = l.evaluate(env)?;
                let b = r.evaluate(env)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinaryOp::Pow => {
                        if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                            a.powi(b as i32)
                        } else {
                            a.powf(b)
                        }
                    }
                    BinaryOp::Min => a.min(b),
                    BinaryOp::Max => a.max(b),
                    BinaryOp::PowAbs => a.abs().powf(b),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(self.op_name()))
        }
    }

    fn op_name(&self) -> &'static str {
        match self {
            Expr::Num(_) => "literal",
            Expr::Var(v) => v.name(),
            Expr::Unary(op, _) => op.name(),
            Expr::Binary(op, _, _) => op.symbol(),
        }
    }

    /// Sorted, deduplicated free variables.
    pub fn free_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn mentions(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Unary(_, e) => e.mentions(var),
            Expr::Binary(_, l, r) => l.mentions(var) || r.mentions(var),
        }
    }

    /// Replace every occurrence of `var` by the literal `value`.
    pub fn substitute(&self, var: Var, value: f64) -> Expr {
        match self {
            Expr::Var(v) if *v == var => Expr::Num(value),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, e) => Expr::unary(*op, e.substitute(var, value)),
            Expr::Binary(op, l, r) => {
                Expr::binary(*op, l.substitute(var, value), r.substitute(var, value))
            }
        }
    }
}

/// Fully parenthesised rendering; `parse` reads it back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{})", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "(-{e})"),
            Expr::Unary(op, e) => write!(f, "{}({e})", op.name()),
            Expr::Binary(op, l, r) if op.is_call() => write!(f, "{}({l}, {r})", op.symbol()),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}
