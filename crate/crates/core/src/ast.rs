//! Abstract syntax of modeling programs.
//!
//! A program is three blocks in fixed order: data declarations, prior
//! statements and likelihood statements. Nodes carry token spans for error
//! reporting; spans never take part in equality, so two programs compare
//! equal exactly when their structure does.

use std::fmt;

/// Half-open token index range `[start, end)`.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn point(at: usize) -> Self {
        Span { start: at, end: at }
    }

    pub fn shift(self, by: usize) -> Self {
        Span { start: self.start + by, end: self.end + by }
    }

    pub fn to(self, other: Span) -> Span {
        Span { start: self.start.min(other.start), end: self.end.max(other.end) }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Real,
    Int,
    Vector(usize),
    IntVector(usize),
}

impl DataType {
    pub fn is_int(self) -> bool {
        matches!(self, DataType::Int | DataType::IntVector(_))
    }

    pub fn shape(self) -> Shape {
        match self {
            DataType::Real | DataType::Int => Shape::Scalar,
            DataType::Vector(n) | DataType::IntVector(n) => Shape::Vector(n),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Real => f.write_str("real"),
            DataType::Int => f.write_str("int"),
            DataType::Vector(n) => write!(f, "vector[{n}]"),
            DataType::IntVector(n) => write!(f, "intvector[{n}]"),
        }
    }
}

/// Scalar or fixed-length vector; the only shapes the language has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Scalar,
    Vector(usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// Elementwise broadcast of two shapes; `None` on a length mismatch.
    pub fn broadcast(self, other: Shape) -> Option<Shape> {
        match (self, other) {
            (Shape::Scalar, s) | (s, Shape::Scalar) => Some(s),
            (Shape::Vector(a), Shape::Vector(b)) if a == b => Some(self),
            _ => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => f.write_str("scalar"),
            Shape::Vector(n) => write!(f, "vector[{n}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataDecl {
    pub name: String,
    pub dtype: DataType,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Logit,
    Invlogit,
    Pow,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Exp, Func::Log, Func::Sqrt, Func::Logit, Func::Invlogit, Func::Pow];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Logit => "logit",
            Func::Invlogit => "invlogit",
            Func::Pow => "pow",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn arity(self) -> usize {
        if self == Func::Pow {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num { value: f64, span: Span },
    Ident { name: String, span: Span },
    Neg { inner: Box<Expr>, span: Span },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr>, span: Span },
    Call { func: Func, args: Vec<Expr>, span: Span },
}

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Num { value, span: Span::default() }
    }

    pub fn ident(name: impl Into<String>) -> Expr {
        Expr::Ident { name: name.into(), span: Span::default() }
    }

    pub fn span(&self) -> Span {
        match self {
            Expr::Num { span, .. }
            | Expr::Ident { span, .. }
            | Expr::Neg { span, .. }
            | Expr::Binary { span, .. }
            | Expr::Call { span, .. } => *span,
        }
    }

    /// Value of a numeric literal or a negated literal.
    pub fn literal_value(&self) -> Option<f64> {
        match self {
            Expr::Num { value, .. } => Some(*value),
            Expr::Neg { inner, .. } => inner.literal_value().map(|v| -v),
            _ => None,
        }
    }

    /// Identifier references in source order, with their spans.
    pub fn identifiers(&self) -> Vec<(&str, Span)> {
        let mut out = Vec::new();
        self.collect_identifiers(&mut out);
        out
    }

    fn collect_identifiers<'a>(&'a self, out: &mut Vec<(&'a str, Span)>) {
        match self {
            Expr::Num { .. } => {}
            Expr::Ident { name, span } => out.push((name, *span)),
            Expr::Neg { inner, .. } => inner.collect_identifiers(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_identifiers(out);
                rhs.collect_identifiers(out);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.collect_identifiers(out)),
        }
    }

    pub fn shift_spans(&mut self, by: usize) {
        match self {
            Expr::Num { span, .. } | Expr::Ident { span, .. } => *span = span.shift(by),
            Expr::Neg { inner, span } => {
                *span = span.shift(by);
                inner.shift_spans(by);
            }
            Expr::Binary { lhs, rhs, span, .. } => {
                *span = span.shift(by);
                lhs.shift_spans(by);
                rhs.shift_spans(by);
            }
            Expr::Call { args, span, .. } => {
                *span = span.shift(by);
                args.iter_mut().for_each(|a| a.shift_spans(by));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub name_span: Span,
    pub value: Expr,
    pub span: Span,
}

impl Arg {
    pub fn positional(value: Expr) -> Arg {
        Arg { name: None, name_span: Span::default(), value, span: Span::default() }
    }

    pub fn named(name: impl Into<String>, value: Expr) -> Arg {
        Arg { name: Some(name.into()), name_span: Span::default(), value, span: Span::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistCall {
    pub name: String,
    pub name_span: Span,
    pub args: Vec<Arg>,
    /// The closing parenthesis.
    pub close_span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Stochastic { dist: DistCall, replicate: Option<usize> },
    Deterministic { expr: Expr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub target: String,
    pub target_span: Span,
    pub kind: StmtKind,
    pub span: Span,
}

impl Statement {
    pub fn stochastic(target: impl Into<String>, dist: impl Into<String>, args: Vec<Arg>) -> Statement {
        Statement {
            target: target.into(),
            target_span: Span::default(),
            kind: StmtKind::Stochastic {
                dist: DistCall { name: dist.into(), name_span: Span::default(), args, close_span: Span::default() },
                replicate: None,
            },
            span: Span::default(),
        }
    }

    pub fn replicated(mut self, n: usize) -> Statement {
        if let StmtKind::Stochastic { replicate, .. } = &mut self.kind {
            *replicate = Some(n);
        }
        self
    }

    pub fn deterministic(target: impl Into<String>, expr: Expr) -> Statement {
        Statement {
            target: target.into(),
            target_span: Span::default(),
            kind: StmtKind::Deterministic { expr },
            span: Span::default(),
        }
    }

    pub fn dist(&self) -> Option<&DistCall> {
        match &self.kind {
            StmtKind::Stochastic { dist, .. } => Some(dist),
            StmtKind::Deterministic { .. } => None,
        }
    }

    /// Every expression in the statement, in source order.
    pub fn expressions(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Stochastic { dist, .. } => dist.args.iter().map(|a| &a.value).collect(),
            StmtKind::Deterministic { expr } => vec![expr],
        }
    }

    /// Re-bases every span by `by` tokens.
    pub fn shift_spans(&mut self, by: usize) {
        self.span = self.span.shift(by);
        self.target_span = self.target_span.shift(by);
        match &mut self.kind {
            StmtKind::Stochastic { dist, .. } => {
                dist.name_span = dist.name_span.shift(by);
                dist.close_span = dist.close_span.shift(by);
                for a in &mut dist.args {
                    a.span = a.span.shift(by);
                    a.name_span = a.name_span.shift(by);
                    a.value.shift_spans(by);
                }
            }
            StmtKind::Deterministic { expr } => expr.shift_spans(by),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Data,
    Prior,
    Likelihood,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Data => "data",
            BlockKind::Prior => "prior",
            BlockKind::Likelihood => "likelihood",
        })
    }
}

/// A complete `data ‖ prior ‖ likelihood` program.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelProgram {
    pub data_decls: Vec<DataDecl>,
    pub prior_stmts: Vec<Statement>,
    pub likelihood_stmts: Vec<Statement>,
}

impl ModelProgram {
    pub fn data_decl(&self, name: &str) -> Option<&DataDecl> {
        self.data_decls.iter().find(|d| d.name == name)
    }
}
