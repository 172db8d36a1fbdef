//! Binding programs to data and evaluating the joint log-density.
//!
//! A bound model is a compiled program: identifiers resolve to slots, data
//! columns become constants, and every prior coordinate maps to one entry of
//! the unconstrained parameter vector. Evaluation records onto a fresh
//! [`Tape`] so gradients come from a single reverse sweep.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::*;
use crate::autodiff::{log_sigmoid, sigmoid, Tape, Var};
use crate::dist::{Family, Registry, Support};
use crate::semantics::{self, resolve_args, ProgramViolation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub values: Vec<f64>,
    pub integer: bool,
}

/// Named numeric columns, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub description: String,
    pub columns: IndexMap<String, Column>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("column `{0}` is empty")]
    Empty(String),
    #[error("integer column `{0}` holds a non-integral value")]
    NonIntegral(String),
    #[error("column `{0}` holds a non-finite value")]
    NonFinite(String),
    #[error("column name `{0}` is not a valid identifier")]
    BadName(String),
}

impl Dataset {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Dataset {
        Dataset { name: name.into(), description: description.into(), columns: IndexMap::new() }
    }

    pub fn real(mut self, name: &str, values: Vec<f64>) -> Dataset {
        self.columns.insert(name.to_string(), Column { values, integer: false });
        self
    }

    pub fn int(mut self, name: &str, values: Vec<f64>) -> Dataset {
        self.columns.insert(name.to_string(), Column { values, integer: true });
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (name, c) in &self.columns {
            let mut chars = name.chars();
            let ident = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !crate::grammar::is_keyword(name);
            if !ident {
                return Err(DatasetError::BadName(name.clone()));
            }
            if c.values.is_empty() {
                return Err(DatasetError::Empty(name.clone()));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite(name.clone()));
            }
            if c.integer && c.values.iter().any(|v| v.fract() != 0.0) {
                return Err(DatasetError::NonIntegral(name.clone()));
            }
        }
        Ok(())
    }

    /// The data block implied by the schema. Single-value columns become
    /// scalars.
    pub fn data_decls(&self) -> Vec<DataDecl> {
        self.columns
            .iter()
            .map(|(name, c)| {
                let n = c.values.len();
                let dtype = match (c.integer, n) {
                    (false, 1) => DataType::Real,
                    (true, 1) => DataType::Int,
                    (false, _) => DataType::Vector(n),
                    (true, _) => DataType::IntVector(n),
                };
                DataDecl { name: name.clone(), dtype, span: Span::default() }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BindError {
    #[error("data column `{0}` is missing from the dataset")]
    MissingColumn(String),
    #[error("data column `{name}` declared with length {declared} but the dataset has {actual}")]
    LengthMismatch { name: String, declared: usize, actual: usize },
    #[error("data column `{0}` is declared int but holds real values")]
    NotInteger(String),
    #[error("prior `{target}` uses discrete `{dist}`; priors must be continuous")]
    DiscretePrior { target: String, dist: String },
    #[error(transparent)]
    Invalid(#[from] ProgramViolation),
}

/// How an unconstrained coordinate maps into a distribution's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    Log,
    Logit,
    /// `lower + (upper - lower) * invlogit(u)`, bounds from the first two
    /// distribution parameters.
    AffineLogit,
}

impl Transform {
    fn for_support(s: Support) -> Transform {
        match s {
            Support::RealLine | Support::NonnegInt => Transform::Identity,
            Support::Positive => Transform::Log,
            Support::UnitInterval => Transform::Logit,
            Support::Interval => Transform::AffineLogit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    /// Whether the variable was declared with a replication count.
    pub vector: bool,
    pub transform: Transform,
}

/// Maps prior variables onto slices of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Layout {
    pub entries: Vec<LayoutEntry>,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len)
    }

    /// One label per coordinate: `mu`, `theta[0]`, `theta[1]`, ...
    pub fn coordinate_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for e in &self.entries {
            if e.vector {
                out.extend((0..e.len).map(|i| format!("{}[{i}]", e.name)));
            } else {
                out.push(e.name.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum CExpr {
    Num(f64),
    Slot(usize),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Call(Func, Vec<CExpr>),
}

#[derive(Debug, Clone)]
enum Step {
    Prior { slot: usize, family: Family, args: Vec<CExpr>, entry: usize },
    Deterministic { slot: usize, expr: CExpr },
    Likelihood { data: usize, family: Family, args: Vec<CExpr> },
}

/// A program with its data resolved. Immutable; safe to share across
/// sampler threads.
#[derive(Debug, Clone)]
pub struct BoundModel {
    program: ModelProgram,
    data: Vec<Vec<f64>>,
    n_slots: usize,
    steps: Vec<Step>,
    layout: Layout,
    n_obs: usize,
}

/// Log-density value and gradient. `finite` is false when the density was
/// not finite; `logp` is then −∞ and the gradient zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LogpGrad {
    pub logp: f64,
    pub grad: Vec<f64>,
    pub finite: bool,
}

/// The additive pieces of the joint log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct Terms {
    pub prior: Vec<f64>,
    pub jacobian: Vec<f64>,
    pub pointwise: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToUnconstrained,
    ToConstrained,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("value {value} of `{name}` lies outside its support")]
pub struct TransformError {
    pub name: String,
    pub value: f64,
}

pub fn bind(program: &ModelProgram, data: &Dataset, registry: &Registry) -> Result<BoundModel, BindError> {
    for s in &program.prior_stmts {
        if let Some(d) = s.dist() {
            if registry.get(&d.name).is_some_and(|spec| !spec.continuous) {
                return Err(BindError::DiscretePrior { target: s.target.clone(), dist: d.name.clone() });
            }
        }
    }
    semantics::check_program(program, registry)?;

    let mut slots: IndexMap<String, usize> = IndexMap::new();
    let mut columns = Vec::new();
    for d in &program.data_decls {
        let col = data.columns.get(&d.name).ok_or_else(|| BindError::MissingColumn(d.name.clone()))?;
        let declared = d.dtype.shape().len();
        if col.values.len() != declared {
            return Err(BindError::LengthMismatch { name: d.name.clone(), declared, actual: col.values.len() });
        }
        if d.dtype.is_int() && col.values.iter().any(|v| v.fract() != 0.0) {
            return Err(BindError::NotInteger(d.name.clone()));
        }
        slots.insert(d.name.clone(), slots.len());
        columns.push(col.values.clone());
    }

    let compile = |e: &Expr, slots: &IndexMap<String, usize>| compile_expr(e, slots);
    let mut steps = Vec::new();
    let mut layout = Layout::default();
    for s in &program.prior_stmts {
        let slot = slots.len();
        match &s.kind {
            StmtKind::Stochastic { dist, replicate } => {
                let spec = registry.get(&dist.name).expect("checked");
                let args = resolve_args(dist, registry)
                    .expect("validated above")
                    .iter()
                    .map(|a| compile(&a.value, &slots))
                    .collect();
                let len = replicate.unwrap_or(1);
                layout.entries.push(LayoutEntry {
                    name: s.target.clone(),
                    offset: layout.dim(),
                    len,
                    vector: replicate.is_some(),
                    transform: Transform::for_support(spec.support),
                });
                steps.push(Step::Prior { slot, family: spec.family, args, entry: layout.entries.len() - 1 });
            }
            StmtKind::Deterministic { expr } => {
                steps.push(Step::Deterministic { slot, expr: compile(expr, &slots) });
            }
        }
        slots.insert(s.target.clone(), slot);
    }
    let mut n_obs = 0;
    for s in &program.likelihood_stmts {
        let dist = s.dist().expect("likelihood statements are stochastic");
        let spec = registry.get(&dist.name).expect("checked");
        let data = slots[&s.target];
        n_obs += columns[data].len();
        let args =
            resolve_args(dist, registry).expect("validated above").iter().map(|a| compile(&a.value, &slots)).collect();
        steps.push(Step::Likelihood { data, family: spec.family, args });
    }
    Ok(BoundModel { program: program.clone(), data: columns, n_slots: slots.len(), steps, layout, n_obs })
}

fn compile_expr(e: &Expr, slots: &IndexMap<String, usize>) -> CExpr {
    match e {
        Expr::Num { value, .. } => CExpr::Num(*value),
        Expr::Ident { name, .. } => CExpr::Slot(slots[name.as_str()]),
        Expr::Neg { inner, .. } => CExpr::Neg(Box::new(compile_expr(inner, slots))),
        Expr::Binary { op, lhs, rhs, .. } => {
            CExpr::Bin(*op, Box::new(compile_expr(lhs, slots)), Box::new(compile_expr(rhs, slots)))
        }
        Expr::Call { func, args, .. } => CExpr::Call(*func, args.iter().map(|a| compile_expr(a, slots)).collect()),
    }
}

/// Where prior coordinates come from during evaluation.
#[derive(Clone, Copy)]
enum Source<'a> {
    /// Unconstrained coordinates, recorded as tape inputs when `active`.
    Free(&'a [f64], bool),
    /// Constrained values; each is mapped back to the real line.
    Fixed(&'a [f64]),
}

struct Evaluation {
    tape: Tape,
    inputs: Vec<Var>,
    prior: Vec<Var>,
    jacobian: Vec<Var>,
    pointwise: Vec<Var>,
    constrained: Vec<f64>,
    unconstrained: Vec<f64>,
}

impl BoundModel {
    pub fn program(&self) -> &ModelProgram {
        &self.program
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Number of observations, the length of [`pointwise_loglik`](Self::pointwise_loglik).
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn evaluate(&self, src: Source) -> Evaluation {
        let mut tape = Tape::with_capacity(64 + 8 * (self.dim() + self.n_obs));
        let mut env: Vec<Vec<Var>> = vec![Vec::new(); self.n_slots];
        for (i, col) in self.data.iter().enumerate() {
            env[i] = col.iter().map(|&v| tape.constant(v)).collect();
        }
        let mut ev = Evaluation {
            tape: Tape::new(),
            inputs: Vec::with_capacity(self.dim()),
            prior: Vec::new(),
            jacobian: Vec::new(),
            pointwise: Vec::with_capacity(self.n_obs),
            constrained: Vec::with_capacity(self.dim()),
            unconstrained: Vec::with_capacity(self.dim()),
        };
        for step in &self.steps {
            match step {
                Step::Prior { slot, family, args, entry } => {
                    let e = &self.layout.entries[*entry];
                    let params: Vec<Vec<Var>> = args.iter().map(|a| eval(&mut tape, a, &env)).collect();
                    let mut values = Vec::with_capacity(e.len);
                    for j in 0..e.len {
                        let p: Vec<Var> = params.iter().map(|v| pick(v, j)).collect();
                        let (x, jac) = match src {
                            Source::Free(theta, active) => {
                                let raw = theta[e.offset + j];
                                let u = if active { tape.input(raw) } else { tape.constant(raw) };
                                ev.inputs.push(u);
                                ev.unconstrained.push(raw);
                                constrain(&mut tape, e.transform, u, &p)
                            }
                            Source::Fixed(vals) => {
                                let x = vals[e.offset + j];
                                let raw = unconstrain_value(e.transform, x, &p, &tape);
                                ev.unconstrained.push(raw);
                                let u = tape.constant(raw);
                                ev.inputs.push(u);
                                constrain(&mut tape, e.transform, u, &p)
                            }
                        };
                        ev.constrained.push(tape.value(x));
                        if let Some(j) = jac {
                            ev.jacobian.push(j);
                        }
                        ev.prior.push(density(&mut tape, *family, x, &p));
                        values.push(x);
                    }
                    env[*slot] = values;
                }
                Step::Deterministic { slot, expr } => env[*slot] = eval(&mut tape, expr, &env),
                Step::Likelihood { data, family, args } => {
                    let params: Vec<Vec<Var>> = args.iter().map(|a| eval(&mut tape, a, &env)).collect();
                    for i in 0..env[*data].len() {
                        let y = env[*data][i];
                        let p: Vec<Var> = params.iter().map(|v| pick(v, i)).collect();
                        ev.pointwise.push(density(&mut tape, *family, y, &p));
                    }
                }
            }
        }
        ev.tape = tape;
        ev
    }

    /// Joint log-density over the unconstrained space (log-Jacobian
    /// included) and its gradient.
    pub fn logp_grad(&self, theta: &[f64]) -> LogpGrad {
        assert_eq!(theta.len(), self.dim(), "parameter vector has the wrong length");
        let mut ev = self.evaluate(Source::Free(theta, true));
        let all: Vec<Var> = ev.prior.iter().chain(&ev.jacobian).chain(&ev.pointwise).copied().collect();
        let total = ev.tape.sum(&all);
        let logp = ev.tape.value(total);
        let grad = if logp.is_finite() { ev.tape.gradient(total, &ev.inputs) } else { vec![0.0; theta.len()] };
        if logp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            LogpGrad { logp, grad, finite: true }
        } else {
            LogpGrad { logp: f64::NEG_INFINITY, grad: vec![0.0; theta.len()], finite: false }
        }
    }

    pub fn logp(&self, theta: &[f64]) -> f64 {
        let t = self.terms(theta);
        let v: f64 = t.prior.iter().chain(&t.jacobian).chain(&t.pointwise).sum();
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn terms(&self, theta: &[f64]) -> Terms {
        let ev = self.evaluate(Source::Free(theta, false));
        let vals = |vs: &[Var]| vs.iter().map(|v| ev.tape.value(*v)).collect();
        Terms { prior: vals(&ev.prior), jacobian: vals(&ev.jacobian), pointwise: vals(&ev.pointwise) }
    }

    /// `log p(y_i | θ)` for every observation, in likelihood-statement order.
    pub fn pointwise_loglik(&self, theta: &[f64]) -> Vec<f64> {
        self.terms(theta).pointwise
    }

    pub fn constrain(&self, theta: &[f64]) -> Vec<f64> {
        self.evaluate(Source::Free(theta, false)).constrained
    }

    pub fn unconstrain(&self, values: &[f64]) -> Result<Vec<f64>, TransformError> {
        let ev = self.evaluate(Source::Fixed(values));
        let names = self.layout.coordinate_names();
        for (i, u) in ev.unconstrained.iter().enumerate() {
            if !u.is_finite() {
                return Err(TransformError { name: names[i].clone(), value: values[i] });
            }
        }
        Ok(ev.unconstrained)
    }
}

pub fn transform(model: &BoundModel, values: &[f64], direction: Direction) -> Result<Vec<f64>, TransformError> {
    match direction {
        Direction::ToConstrained => Ok(model.constrain(values)),
        Direction::ToUnconstrained => model.unconstrain(values),
    }
}

fn pick(v: &[Var], i: usize) -> Var {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

/// Maps `u` into the support; returns the value and its log-Jacobian term.
fn constrain(tape: &mut Tape, t: Transform, u: Var, params: &[Var]) -> (Var, Option<Var>) {
    match t {
        Transform::Identity => (u, None),
        Transform::Log => (tape.exp(u), Some(u)),
        Transform::Logit => {
            let x = tape.invlogit(u);
            (x, Some(logistic_jacobian(tape, u)))
        }
        Transform::AffineLogit => {
            let (lo, hi) = (params[0], params[1]);
            let w = tape.sub(hi, lo);
            let s = tape.invlogit(u);
            let ws = tape.mul(w, s);
            let x = tape.add(lo, ws);
            let lw = tape.ln(w);
            let lj = logistic_jacobian(tape, u);
            (x, Some(tape.add(lw, lj)))
        }
    }
}

/// `log σ(u) + log σ(−u)`.
fn logistic_jacobian(tape: &mut Tape, u: Var) -> Var {
    let a = tape.log_sigmoid(u);
    let nu = tape.neg(u);
    let b = tape.log_sigmoid(nu);
    tape.add(a, b)
}

fn unconstrain_value(t: Transform, x: f64, params: &[Var], tape: &Tape) -> f64 {
    let logit = |p: f64| if p > 0.0 && p < 1.0 { (p / (1.0 - p)).ln() } else { f64::NAN };
    match t {
        Transform::Identity => x,
        Transform::Log => {
            if x > 0.0 {
                x.ln()
            } else {
                f64::NAN
            }
        }
        Transform::Logit => logit(x),
        Transform::AffineLogit => {
            let (lo, hi) = (tape.value(params[0]), tape.value(params[1]));
            logit((x - lo) / (hi - lo))
        }
    }
}

fn density(tape: &mut Tape, family: Family, x: Var, params: &[Var]) -> Var {
    let pv: Vec<f64> = params.iter().map(|p| tape.value(*p)).collect();
    let d = crate::dist::log_density(family, tape.value(x), &pv);
    let mut partials = Vec::with_capacity(1 + params.len());
    partials.push((x, d.dx));
    partials.extend(params.iter().zip(d.dp).map(|(p, g)| (*p, g)));
    tape.custom(d.logp, &partials)
}

fn eval(tape: &mut Tape, e: &CExpr, env: &[Vec<Var>]) -> Vec<Var> {
    match e {
        CExpr::Num(v) => vec![tape.constant(*v)],
        CExpr::Slot(s) => env[*s].clone(),
        CExpr::Neg(a) => eval(tape, a, env).into_iter().map(|v| tape.neg(v)).collect(),
        CExpr::Bin(op, a, b) => {
            let (a, b) = (eval(tape, a, env), eval(tape, b, env));
            let n = a.len().max(b.len());
            (0..n)
                .map(|i| {
                    let (x, y) = (pick(&a, i), pick(&b, i));
                    match op {
                        BinOp::Add => tape.add(x, y),
                        BinOp::Sub => tape.sub(x, y),
                        BinOp::Mul => tape.mul(x, y),
                        BinOp::Div => tape.div(x, y),
                    }
                })
                .collect()
        }
        CExpr::Call(f, args) => {
            let vals: Vec<Vec<Var>> = args.iter().map(|a| eval(tape, a, env)).collect();
            let n = vals.iter().map(Vec::len).max().unwrap_or(1);
            (0..n)
                .map(|i| {
                    let x = pick(&vals[0], i);
                    match f {
                        Func::Exp => tape.exp(x),
                        Func::Log => tape.ln(x),
                        Func::Sqrt => tape.sqrt(x),
                        Func::Logit => tape.logit(x),
                        Func::Invlogit => tape.invlogit(x),
                        Func::Pow => {
                            let y = pick(&vals[1], i);
                            tape.pow(x, y)
                        }
                    }
                })
                .collect()
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{} [{}..{}) {:?}", e.name, e.offset, e.offset + e.len, e.transform)?;
        }
        Ok(())
    }
}

/// Standalone versions of the coordinate transforms, for a known support.
pub fn to_unconstrained(support: Support, x: f64, bounds: Option<(f64, f64)>) -> f64 {
    match Transform::for_support(support) {
        Transform::Identity => x,
        Transform::Log => x.ln(),
        Transform::Logit => (x / (1.0 - x)).ln(),
        Transform::AffineLogit => {
            let (lo, hi) = bounds.expect("interval support needs bounds");
            let p = (x - lo) / (hi - lo);
            (p / (1.0 - p)).ln()
        }
    }
}

pub fn to_constrained(support: Support, u: f64, bounds: Option<(f64, f64)>) -> f64 {
    match Transform::for_support(support) {
        Transform::Identity => u,
        Transform::Log => u.exp(),
        Transform::Logit => sigmoid(u),
        Transform::AffineLogit => {
            let (lo, hi) = bounds.expect("interval support needs bounds");
            lo + (hi - lo) * sigmoid(u)
        }
    }
}

/// Log-Jacobian of [`to_constrained`] at `u`.
pub fn log_jacobian(support: Support, u: f64, bounds: Option<(f64, f64)>) -> f64 {
    match Transform::for_support(support) {
        Transform::Identity => 0.0,
        Transform::Log => u,
        Transform::Logit => log_sigmoid(u) + log_sigmoid(-u),
        Transform::AffineLogit => {
            let (lo, hi) = bounds.expect("interval support needs bounds");
            (hi - lo).ln() + log_sigmoid(u) + log_sigmoid(-u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::builtin;
    use crate::grammar::parse;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

    fn bound(src: &str, data: &Dataset) -> BoundModel {
        bind(&parse(src).unwrap(), data, &Registry::default()).unwrap()
    }

    fn fd_check(m: &BoundModel, theta: &[f64]) {
        let g = m.logp_grad(theta);
        assert!(g.finite);
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut a = theta.to_vec();
            let mut b = theta.to_vec();
            a[i] += h;
            b[i] -= h;
            let fd = (m.logp(&a) - m.logp(&b)) / (2.0 * h);
            let tol = 1e-6 * fd.abs().max(1.0);
            assert!((g.grad[i] - fd).abs() <= tol, "coord {i}: {} vs {fd}", g.grad[i]);
        }
    }

    #[test]
    fn standard_normal_twice() {
        let d = Dataset::new("t", "").real("y", vec![0.0]);
        let m = bound("model { data { y: real; } prior { mu ~ Normal(0, 1); } likelihood { y ~ Normal(mu, 1); } }", &d);
        let r = m.logp_grad(&[0.0]);
        assert!((r.logp - 2.0 * -LN_SQRT_2PI).abs() < 1e-14);
        assert_eq!(r.grad, vec![0.0]);
        assert_eq!(m.n_obs(), 1);
    }

    #[test]
    fn eight_schools_binds() {
        let src = "model { data { y: vector[8]; sigma: vector[8]; } prior { mu ~ Normal(0, 5); tau ~ HalfCauchy(5); \
                   z[8] ~ Normal(0, 1); theta = mu + tau * z; } likelihood { y ~ Normal(theta, sigma); } }";
        let m = bound(src, &builtin("eight_schools").unwrap());
        assert_eq!(m.n_obs(), 8);
        assert_eq!(m.dim(), 10);
        assert_eq!(m.layout().coordinate_names()[2], "z[0]");
        let theta: Vec<f64> = (0..10).map(|i| 0.1 * i as f64 - 0.4).collect();
        assert_eq!(m.pointwise_loglik(&theta).len(), 8);
        fd_check(&m, &theta);
    }

    #[test]
    fn dugongs_gradient_matches_finite_differences() {
        let src =
            "model { data { X: vector[27]; y: vector[27]; } prior { alpha ~ Normal(0, 10); beta ~ HalfNormal(5); \
                   lambda ~ Uniform(0.5, 1); s ~ HalfCauchy(1); } \
                   likelihood { y ~ Normal(alpha - beta * pow(lambda, X), s); } }";
        let m = bound(src, &builtin("dugongs").unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
            fd_check(&m, &theta);
        }
    }

    #[test]
    fn additivity() {
        let src =
            "model { data { n: intvector[12]; r: intvector[12]; } prior { mu ~ Normal(-2, 1); s ~ HalfNormal(1); \
                   b[12] ~ Normal(mu, s); p = invlogit(b); } likelihood { r ~ Binomial(n, p); } }";
        let m = bound(src, &builtin("surgical").unwrap());
        let theta: Vec<f64> = (0..m.dim()).map(|i| -2.5 + 0.05 * i as f64).collect();
        let t = m.terms(&theta);
        let independent: f64 =
            t.prior.iter().sum::<f64>() + t.jacobian.iter().sum::<f64>() + t.pointwise.iter().sum::<f64>();
        assert!((m.logp_grad(&theta).logp - independent).abs() < 1e-10);
        assert!(t.pointwise.iter().all(|v| v.is_finite() && *v <= 0.0));
        fd_check(&m, &theta);
    }

    #[test]
    fn bind_errors() {
        let reg = Registry::default();
        let d = builtin("eight_schools").unwrap();
        let p = parse("model { data { z: vector[8]; } prior { } likelihood { z ~ Normal(0, 1); } }").unwrap();
        assert_eq!(bind(&p, &d, &reg).unwrap_err(), BindError::MissingColumn("z".into()));
        let p = parse("model { data { y: vector[5]; } prior { } likelihood { y ~ Normal(0, 1); } }").unwrap();
        assert!(matches!(bind(&p, &d, &reg), Err(BindError::LengthMismatch { .. })));
        let p = parse("model { data { y: vector[8]; } prior { k ~ Poisson(3); } likelihood { y ~ Normal(0, 1); } }")
            .unwrap();
        assert!(matches!(bind(&p, &d, &reg), Err(BindError::DiscretePrior { .. })));
        let p = parse("model { data { y: intvector[8]; } prior { } likelihood { y ~ Poisson(3); } }").unwrap();
        let d2 = Dataset::new("t", "").real("y", vec![0.5; 8]);
        assert_eq!(bind(&p, &d2, &reg).unwrap_err(), BindError::NotInteger("y".into()));
    }

    #[test]
    fn non_finite_is_in_band() {
        let d = Dataset::new("t", "").real("y", vec![1.0]);
        let m = bound(
            "model { data { y: real; } prior { a ~ Normal(0, 1); s = a - 10; } likelihood { y ~ Normal(0, s); } }",
            &d,
        );
        let r = m.logp_grad(&[0.0]);
        assert!(!r.finite);
        assert_eq!(r.logp, f64::NEG_INFINITY);
    }

    #[test]
    fn transform_examples() {
        assert_eq!(to_unconstrained(Support::Positive, 1.0, None), 0.0);
        assert_eq!(to_unconstrained(Support::UnitInterval, 0.5, None), 0.0);
        let d = Dataset::new("t", "").real("y", vec![1.0]);
        let m = bound(
            "model { data { y: real; } prior { s ~ HalfNormal(1); p ~ Beta(2, 2); u[2] ~ Uniform(-1, s); } likelihood { y ~ Normal(p, s); } }",
            &d,
        );
        let v = transform(&m, &[0.3, -0.2, 1.1, -4.0], Direction::ToConstrained).unwrap();
        assert!(v[3] > -1.0 && v[3] < v[0]);
        assert!(m.unconstrain(&[-1.0, 0.5, 0.0, 0.0]).is_err());
    }

    /// Mass of a transformed density over a grid in unconstrained space.
    fn grid_mass(support: Support, family: Family, params: &[f64], bounds: Option<(f64, f64)>) -> f64 {
        let (lo, hi, n) = (-40.0, 40.0, 400_000);
        let h = (hi - lo) / n as f64;
        (0..n)
            .map(|i| {
                let u = lo + (i as f64 + 0.5) * h;
                let x = to_constrained(support, u, bounds);
                let lp = crate::dist::log_density(family, x, params).logp + log_jacobian(support, u, bounds);
                lp.exp() * h
            })
            .sum()
    }

    #[test]
    fn jacobians_preserve_mass() {
        assert!((grid_mass(Support::Positive, Family::HalfNormal, &[1.0], None) - 1.0).abs() < 1e-3);
        assert!((grid_mass(Support::Positive, Family::Gamma, &[2.0, 1.5], None) - 1.0).abs() < 1e-3);
        assert!((grid_mass(Support::UnitInterval, Family::Beta, &[2.0, 3.0], None) - 1.0).abs() < 1e-3);
        assert!((grid_mass(Support::Interval, Family::Uniform, &[-2.0, 3.0], Some((-2.0, 3.0))) - 1.0).abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn transforms_round_trip(u in -5.0f64..5.0, lo in -5.0f64..0.0, w in 0.5f64..5.0) {
            let b = Some((lo, lo + w));
            for s in [Support::RealLine, Support::Positive, Support::UnitInterval, Support::Interval] {
                let back = to_unconstrained(s, to_constrained(s, u, b), b);
                prop_assert!((back - u).abs() < 1e-12, "{s:?}: {u} -> {back}");
            }
        }

        #[test]
        fn model_transform_round_trip(theta in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let d = Dataset::new("t", "").real("y", vec![1.0]);
            let m = bound(
                "model { data { y: real; } prior { s ~ HalfNormal(1); p ~ Beta(2, 2); u[2] ~ Uniform(-1, s); } likelihood { y ~ Normal(p, s); } }",
                &d,
            );
            let back = m.unconstrain(&m.constrain(&theta)).unwrap();
            for (a, b) in theta.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
