//! A grammar-driven token sampler that needs no language model.
//!
//! Scores are log-weights over the vocabulary computed from the tokens of the
//! statement in progress. It only proposes tokens the grammar accepts, names
//! that are in scope, and arguments whose sign and shape fit the parameter
//! slot, so validation failures come mostly from shape corner cases.

use std::collections::HashSet;

use crate::ast::{BlockKind, Shape};
use crate::dist::{ParamDomain, Registry, Support};
use crate::grammar::{Terminal, Token};
use crate::model::Dataset;
use crate::semantics::Binding;

use super::{CandidateGenerator, GeneratorError, Mode, TokenContext, NAME_POOL};

/// Response columns of the embedded benchmarks.
pub fn builtin_response(dataset: &str) -> Option<&'static str> {
    Some(match dataset {
        "eight_schools" => "y",
        "dugongs" => "y",
        "surgical" => "r",
        "peregrine" => "C",
        "gp" => "k",
        _ => return None,
    })
}

#[derive(Debug, Clone)]
struct ColumnInfo {
    name: String,
    values: Vec<f64>,
    integer: bool,
}

impl ColumnInfo {
    fn positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    fn unit(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0 && v < 1.0)
    }

    fn binary(&self) -> bool {
        self.integer && self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    fn nonneg(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Elementwise at least `other`, for binomial trial counts.
    fn bounds(&self, other: &ColumnInfo) -> bool {
        self.integer
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a >= b)
    }
}

#[derive(Debug, Clone)]
pub struct BuiltinGenerator {
    temperature: f64,
    columns: Vec<ColumnInfo>,
    responses: HashSet<String>,
    lengths: Vec<usize>,
}

impl BuiltinGenerator {
    /// `response` names the observed column; the benchmark default or the
    /// last column is used when absent.
    pub fn new(dataset: &Dataset, response: Option<&str>) -> Self {
        let columns: Vec<ColumnInfo> = dataset
            .columns
            .iter()
            .map(|(n, c)| ColumnInfo { name: n.clone(), values: c.values.clone(), integer: c.integer })
            .collect();
        let response = response
            .map(str::to_string)
            .or_else(|| builtin_response(&dataset.name).map(str::to_string))
            .or_else(|| columns.last().map(|c| c.name.clone()));
        let mut lengths: Vec<usize> = columns.iter().map(|c| c.values.len()).filter(|&n| n > 1).collect();
        lengths.sort_unstable();
        lengths.dedup();
        BuiltinGenerator { temperature: 1.0, columns, responses: response.into_iter().collect(), lengths }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    fn column(&self, name: &str) -> Option<&ColumnInfo> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Domain {
    Real,
    Positive,
    Unit,
    Count,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FrameKind {
    Arg(usize),
    Func,
    Det,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    kind: FrameKind,
    domain: Domain,
    atoms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Target,
    AfterTarget,
    RepCount,
    RepClose,
    Tilde,
    DistName,
    Open,
    Operand,
    FuncOpen,
    AfterOperand,
    End,
    Done,
}

/// Where the statement in progress stands.
#[derive(Debug)]
struct Cursor {
    phase: Phase,
    target: Option<String>,
    replicate: Option<usize>,
    dist: Option<String>,
    stack: Vec<Frame>,
    /// Vector length seen so far in a deterministic expression.
    det_len: Option<usize>,
    funcs: usize,
    /// A prior or deterministic variable has appeared as an operand.
    uses_var: bool,
}

fn domain_of(d: ParamDomain, index: usize) -> Domain {
    match d {
        ParamDomain::Real => Domain::Real,
        ParamDomain::Positive => Domain::Positive,
        ParamDomain::UnitInterval => Domain::Unit,
        ParamDomain::NonnegInt => Domain::Count,
        ParamDomain::OrderedPair if index == 0 => Domain::Lower,
        ParamDomain::OrderedPair => Domain::Upper,
    }
}

impl Cursor {
    fn read(tokens: &[Token], ctx: &TokenContext<'_>) -> Option<Cursor> {
        let mut c = Cursor {
            phase: Phase::Target,
            target: None,
            replicate: None,
            dist: None,
            stack: Vec::new(),
            det_len: None,
            funcs: 0,
            uses_var: false,
        };
        for t in tokens {
            c.phase = match (c.phase, t.kind) {
                (Phase::Target, Terminal::Ident) => {
                    c.target = Some(t.text.clone());
                    Phase::AfterTarget
                }
                (Phase::AfterTarget, Terminal::LBracket) => Phase::RepCount,
                (Phase::AfterTarget, Terminal::Tilde) | (Phase::Tilde, Terminal::Tilde) => Phase::DistName,
                (Phase::AfterTarget, Terminal::Assign) => {
                    c.stack.push(Frame { kind: FrameKind::Det, domain: Domain::Real, atoms: 0 });
                    Phase::Operand
                }
                (Phase::RepCount, Terminal::IntLit) => {
                    c.replicate = t.text.parse().ok();
                    Phase::RepClose
                }
                (Phase::RepClose, Terminal::RBracket) => Phase::Tilde,
                (Phase::DistName, Terminal::Ident) => {
                    c.dist = Some(t.text.clone());
                    Phase::Open
                }
                (Phase::Open, Terminal::LParen) => {
                    let d = c.param_domain(0, ctx.registry)?;
                    c.stack.push(Frame { kind: FrameKind::Arg(0), domain: d, atoms: 0 });
                    Phase::Operand
                }
                (Phase::Operand, Terminal::Func1) => {
                    c.funcs += 1;
                    c.stack.push(Frame { kind: FrameKind::Func, domain: Domain::Real, atoms: 0 });
                    Phase::FuncOpen
                }
                (Phase::FuncOpen, Terminal::LParen) => Phase::Operand,
                (Phase::Operand, Terminal::Ident | Terminal::IntLit | Terminal::FloatLit) => {
                    let b = ctx.table.get(&t.text);
                    if let Some(Shape::Vector(n)) = b.map(Binding::shape) {
                        c.det_len = Some(n);
                    }
                    c.uses_var |= matches!(b, Some(Binding::Prior { .. } | Binding::Deterministic { .. }));
                    c.stack.last_mut()?.atoms += 1;
                    Phase::AfterOperand
                }
                (Phase::AfterOperand, Terminal::Plus | Terminal::Star) => Phase::Operand,
                (Phase::AfterOperand, Terminal::Comma) => {
                    let FrameKind::Arg(i) = c.stack.pop()?.kind else { return None };
                    let d = c.param_domain(i + 1, ctx.registry)?;
                    c.stack.push(Frame { kind: FrameKind::Arg(i + 1), domain: d, atoms: 0 });
                    Phase::Operand
                }
                (Phase::AfterOperand, Terminal::RParen) => match c.stack.pop()?.kind {
                    FrameKind::Func => {
                        c.stack.last_mut()?.atoms += 1;
                        Phase::AfterOperand
                    }
                    FrameKind::Arg(_) => Phase::End,
                    FrameKind::Det => return None,
                },
                (Phase::AfterOperand, Terminal::Semi) | (Phase::End, Terminal::Semi) => Phase::Done,
                _ => return None,
            };
        }
        Some(c)
    }

    fn param_domain(&self, index: usize, registry: &Registry) -> Option<Domain> {
        let spec = registry.get(self.dist.as_deref()?)?;
        spec.params.get(index).map(|p| domain_of(p.domain, index))
    }

    /// Inside the final argument of the distribution call.
    fn in_last_arg(&self, registry: &Registry) -> bool {
        matches!(self.stack.first(), Some(Frame { kind: FrameKind::Arg(i), .. }) if i + 1 == self.arity(registry))
    }

    fn arity(&self, registry: &Registry) -> usize {
        self.dist.as_deref().and_then(|d| registry.get(d)).map_or(0, |s| s.arity())
    }
}

/// Accumulates weighted proposals.
struct Weights(Vec<(String, f64)>);

impl Weights {
    fn put(&mut self, text: &str, w: f64) {
        if w > 0.0 {
            self.0.push((text.to_string(), w));
        }
    }

    /// Spreads `total` evenly over `items`.
    fn spread<S: AsRef<str>>(&mut self, items: &[S], total: f64) {
        for it in items {
            self.put(it.as_ref(), total / items.len() as f64);
        }
    }
}

fn prior_stop_weight(n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => 0.3,
        2 => 0.4,
        3 => 0.5,
        _ => 0.7,
    }
}

impl BuiltinGenerator {
    fn target_len(&self, cur: &Cursor, ctx: &TokenContext<'_>) -> Option<Option<usize>> {
        let t = cur.target.as_deref()?;
        Some(match ctx.block {
            BlockKind::Likelihood => match ctx.table.get(t)?.shape() {
                Shape::Vector(n) => Some(n),
                Shape::Scalar => None,
            },
            _ if matches!(cur.stack.first(), Some(f) if f.kind == FrameKind::Det) => cur.det_len,
            _ => cur.replicate,
        })
    }

    fn shape_fits(&self, shape: Shape, cur: &Cursor, ctx: &TokenContext<'_>) -> bool {
        let is_det = cur.stack.first().is_some_and(|f| f.kind == FrameKind::Det);
        match shape {
            Shape::Scalar => true,
            Shape::Vector(n) if is_det => cur.det_len.is_none_or(|m| m == n),
            Shape::Vector(n) => self.target_len(cur, ctx).flatten() == Some(n),
        }
    }

    fn targets(&self, ctx: &TokenContext<'_>, w: &mut Weights) {
        match ctx.block {
            BlockKind::Likelihood => {
                let open: Vec<&str> = ctx.table.unobserved_data().filter(|n| self.responses.contains(*n)).collect();
                if !open.is_empty() {
                    w.spread(&open, 1.0);
                } else if ctx.statements_in_block == 0 {
                    let any: Vec<&str> = ctx.table.unobserved_data().collect();
                    w.spread(&any, 1.0);
                } else {
                    w.put("}", 1.0);
                }
            }
            _ => {
                let n = ctx.statements_in_block;
                let stop = prior_stop_weight(n);
                w.put("}", stop);
                let fresh: Vec<&str> =
                    NAME_POOL.iter().copied().filter(|n| !ctx.table.contains(n) && ctx.vocab.id(n).is_some()).collect();
                w.spread(&fresh, 1.0 - stop);
            }
        }
    }

    fn dist_names(&self, cur: &Cursor, ctx: &TokenContext<'_>, w: &mut Weights) {
        let base = |name: &str| if name == "Normal" || name == "HalfNormal" { 3.0 } else { 1.0 };
        if ctx.block != BlockKind::Likelihood {
            for s in ctx.registry.iter().filter(|s| s.continuous) {
                w.put(s.name, base(s.name));
            }
            return;
        }
        let Some(col) = cur.target.as_deref().and_then(|t| self.column(t)) else { return };
        for s in ctx.registry.iter() {
            let fits = if col.integer {
                match s.support {
                    Support::NonnegInt if s.params.iter().any(|p| p.domain == ParamDomain::NonnegInt) => self
                        .columns
                        .iter()
                        .any(|o| o.name != col.name && !self.responses.contains(&o.name) && o.bounds(col)),
                    Support::NonnegInt if s.params.iter().any(|p| p.domain == ParamDomain::UnitInterval) => {
                        col.binary()
                    }
                    Support::NonnegInt => col.nonneg(),
                    _ => false,
                }
            } else {
                match s.support {
                    Support::RealLine => true,
                    Support::Positive => col.positive(),
                    Support::UnitInterval => col.unit(),
                    _ => false,
                }
            };
            if fits {
                w.put(s.name, base(s.name));
            }
        }
    }

    /// A likelihood that never mentions a parameter cannot learn anything,
    /// so its last argument must bring one in if nothing before did.
    fn operands(&self, cur: &Cursor, ctx: &TokenContext<'_>, w: &mut Weights) {
        let mut all = Weights(Vec::new());
        self.operand_weights(cur, ctx, &mut all);
        let need_var = ctx.block == BlockKind::Likelihood && !cur.uses_var && cur.in_last_arg(ctx.registry);
        if need_var {
            let keep = |t: &str| {
                matches!(ctx.table.get(t), Some(Binding::Prior { .. } | Binding::Deterministic { .. }))
                    || matches!(t, "exp" | "invlogit")
            };
            if all.0.iter().any(|(t, _)| keep(t)) {
                all.0.retain(|(t, _)| keep(t));
            }
        }
        w.0.extend(all.0);
    }

    fn operand_weights(&self, cur: &Cursor, ctx: &TokenContext<'_>, w: &mut Weights) {
        let Some(frame) = cur.stack.last().copied() else { return };
        let is_det = cur.stack.first().is_some_and(|f| f.kind == FrameKind::Det);
        let data_ok = ctx.block == BlockKind::Likelihood || is_det;
        let mut vars = Vec::new();
        let mut pos_vars = Vec::new();
        let mut unit_vars = Vec::new();
        let mut data = Vec::new();
        let mut pos_data = Vec::new();
        let mut count_data = Vec::new();
        for (name, b) in ctx.table.iter() {
            if !self.shape_fits(b.shape(), cur, ctx) || ctx.vocab.id(name).is_none() {
                continue;
            }
            match b {
                Binding::Prior { support, .. } => {
                    vars.push(name);
                    if matches!(support, Support::Positive | Support::UnitInterval) {
                        pos_vars.push(name);
                    }
                    if *support == Support::UnitInterval {
                        unit_vars.push(name);
                    }
                }
                Binding::Deterministic { .. } => vars.push(name),
                Binding::Data { .. } if data_ok && !self.responses.contains(name) => {
                    let Some(col) = self.column(name) else { continue };
                    data.push(name);
                    if col.positive() {
                        pos_data.push(name);
                    }
                    let target = cur.target.as_deref().and_then(|t| self.column(t));
                    if target.is_some_and(|t| col.bounds(t) && col.name != t.name) {
                        count_data.push(name);
                    }
                }
                Binding::Data { .. } => {}
            }
        }
        let lik = ctx.block == BlockKind::Likelihood;
        // Operands after `+` or `*`, and inside function calls, are never
        // literals: constant arithmetic adds nothing.
        let inner = frame.atoms > 0 || frame.kind == FrameKind::Func;
        let call_ok = cur.funcs < 2 && (!vars.is_empty() || !data.is_empty());
        match frame.domain {
            Domain::Real if inner || frame.kind == FrameKind::Det => {
                w.spread(&vars, 3.0);
                let data_w = if frame.kind == FrameKind::Det && frame.atoms == 0 || lik { 1.0 } else { 2.0 };
                w.spread(&data, data_w);
            }
            Domain::Real if lik => {
                w.put("0", 0.5);
                w.spread(&vars, 4.0);
                w.spread(&data, 1.0);
            }
            Domain::Real => {
                w.put("0", 2.0);
                w.spread(&vars, 2.0);
            }
            Domain::Positive if inner => {
                w.spread(&pos_vars, 3.0);
                w.spread(&pos_data, 2.0);
            }
            Domain::Positive => {
                let (lits, var_w, data_w, call_w) = if lik { (0.5, 3.0, 0.5, 1.0) } else { (2.0, 1.5, 2.0, 0.5) };
                w.spread(&["1", "2", "5", "10"], lits);
                w.spread(&pos_vars, var_w);
                w.spread(&pos_data, data_w);
                if call_ok {
                    w.put("exp", call_w);
                }
            }
            Domain::Unit => {
                w.put("0.5", 0.5);
                w.spread(&unit_vars, 2.0);
                if call_ok {
                    w.put("invlogit", 2.0);
                }
            }
            Domain::Count => w.spread(&count_data, 1.0),
            Domain::Lower => w.put("0", 1.0),
            Domain::Upper => w.spread(&["1", "10", "100"], 1.0),
        }
    }

    fn after_operand(&self, cur: &Cursor, ctx: &TokenContext<'_>, w: &mut Weights) {
        let Some(frame) = cur.stack.last().copied() else { return };
        let close = match frame.kind {
            FrameKind::Arg(i) if i + 1 < cur.arity(ctx.registry) => ",",
            FrameKind::Arg(_) | FrameKind::Func => ")",
            FrameKind::Det => ";",
        };
        w.put(close, 1.0);
        let after_literal =
            ctx.statement.last().is_some_and(|t| matches!(t.kind, Terminal::IntLit | Terminal::FloatLit));
        if after_literal || frame.atoms >= 4 || ctx.statement.len() >= 36 {
            return;
        }
        let k = frame.atoms as f64;
        match frame.domain {
            Domain::Real if frame.kind == FrameKind::Det && frame.atoms == 1 => {
                w.put("+", 1.0);
                w.put("*", 1.0);
            }
            Domain::Real => {
                w.put("+", 0.5 / k);
                w.put("*", 0.5 / k);
            }
            Domain::Positive => w.put("*", 0.25 / k),
            _ => {}
        }
    }

    fn proposals(&self, ctx: &TokenContext<'_>) -> Option<Weights> {
        let cur = Cursor::read(ctx.statement, ctx)?;
        let mut w = Weights(Vec::new());
        match cur.phase {
            Phase::Target => self.targets(ctx, &mut w),
            Phase::AfterTarget if ctx.block == BlockKind::Likelihood => w.put("~", 1.0),
            Phase::AfterTarget => {
                w.put("~", 6.0);
                if !self.lengths.is_empty() {
                    w.put("[", 2.0);
                }
                if ctx.table.iter().any(|(_, b)| matches!(b, Binding::Prior { .. })) {
                    w.put("=", 1.0);
                }
            }
            Phase::RepCount => {
                let lens: Vec<String> = self.lengths.iter().map(|n| n.to_string()).collect();
                w.spread(&lens, 1.0);
            }
            Phase::RepClose => w.put("]", 1.0),
            Phase::Tilde => w.put("~", 1.0),
            Phase::DistName => self.dist_names(&cur, ctx, &mut w),
            Phase::Open | Phase::FuncOpen => w.put("(", 1.0),
            Phase::Operand => self.operands(&cur, ctx, &mut w),
            Phase::AfterOperand => self.after_operand(&cur, ctx, &mut w),
            Phase::End => w.put(";", 1.0),
            Phase::Done => {}
        }
        Some(w)
    }
}

impl CandidateGenerator for BuiltinGenerator {
    fn name(&self) -> &str {
        "builtin"
    }

    fn mode(&self) -> Mode {
        Mode::Token
    }

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn next_token_scores(&mut self, ctx: &TokenContext<'_>) -> Result<Vec<f64>, GeneratorError> {
        let mut scores = vec![f64::NEG_INFINITY; ctx.vocab.len()];
        match self.proposals(ctx) {
            Some(w) => {
                let mut mass = vec![0.0; ctx.vocab.len()];
                for (text, weight) in w.0 {
                    if let Some(id) = ctx.vocab.id(&text) {
                        mass[id] += weight;
                    }
                }
                for (s, m) in scores.iter_mut().zip(mass) {
                    if m > 0.0 {
                        *s = m.ln();
                    }
                }
            }
            // Off the sampler's own paths: fall back to the mask alone.
            None => scores.iter_mut().for_each(|s| *s = 0.0),
        }
        Ok(scores)
    }
}
