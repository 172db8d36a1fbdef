//! Statement validation: parse-ability (φ1), distribution existence (φ2),
//! parameter validity (φ3), and a scope/shape check over the symbol table.
//!
//! Checks run in that order and stop at the first failure, so the reported
//! span depends only on the fragment and the table it was checked against.

use indexmap::IndexMap;
use serde::Serialize;

use crate::ast::*;
use crate::dist::{ParamDomain, Registry, Support};
use crate::grammar::{self, NonTerminal, ParseError, PrefixState, Token};

#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Data { shape: Shape, int: bool, observed: bool },
    Prior { shape: Shape, support: Support },
    Deterministic { shape: Shape },
}

impl Binding {
    pub fn shape(&self) -> Shape {
        match self {
            Binding::Data { shape, .. } | Binding::Prior { shape, .. } | Binding::Deterministic { shape } => *shape,
        }
    }
}

/// Identifier bindings in declaration order. Cloning is the snapshot
/// mechanism used for backtracking.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolTable {
    bindings: IndexMap<String, Binding>,
}

impl SymbolTable {
    pub fn from_data(decls: &[DataDecl]) -> Result<SymbolTable, Violation> {
        let mut t = SymbolTable::default();
        for d in decls {
            if d.dtype.shape().is_empty() {
                return Err(Violation::new(d.span, format!("data column `{}` has length zero", d.name)));
            }
            let b = Binding::Data { shape: d.dtype.shape(), int: d.dtype.is_int(), observed: false };
            if t.bindings.insert(d.name.clone(), b).is_some() {
                return Err(Violation::new(d.span, format!("data column `{}` declared twice", d.name)));
            }
        }
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Option<&Binding> {
        self.bindings.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Binding)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Data columns not yet used as a likelihood target.
    pub fn unobserved_data(&self) -> impl Iterator<Item = &str> {
        self.iter().filter(|(_, b)| matches!(b, Binding::Data { observed: false, .. })).map(|(k, _)| k)
    }

    fn apply(&mut self, stmt: &Statement, block: BlockKind, registry: &Registry) {
        match (&stmt.kind, block) {
            (StmtKind::Stochastic { .. }, BlockKind::Likelihood) => {
                if let Some(Binding::Data { observed, .. }) = self.bindings.get_mut(&stmt.target) {
                    *observed = true;
                }
            }
            (StmtKind::Stochastic { dist, replicate }, _) => {
                let support = registry.get(&dist.name).map_or(Support::RealLine, |s| s.support);
                let shape = replicate.map_or(Shape::Scalar, Shape::Vector);
                self.bindings.insert(stmt.target.clone(), Binding::Prior { shape, support });
            }
            (StmtKind::Deterministic { expr }, _) => {
                let shape = self.expr_shape(expr).unwrap_or(Shape::Scalar);
                self.bindings.insert(stmt.target.clone(), Binding::Deterministic { shape });
            }
        }
    }

    /// Broadcast shape of an expression, or the offending subexpression.
    pub fn expr_shape(&self, e: &Expr) -> Result<Shape, Violation> {
        match e {
            Expr::Num { .. } => Ok(Shape::Scalar),
            Expr::Ident { name, span } => self
                .get(name)
                .map(Binding::shape)
                .ok_or_else(|| Violation::new(*span, format!("`{name}` is not defined before use"))),
            Expr::Neg { inner, .. } => self.expr_shape(inner),
            Expr::Binary { lhs, rhs, span, .. } => {
                let (a, b) = (self.expr_shape(lhs)?, self.expr_shape(rhs)?);
                a.broadcast(b).ok_or_else(|| Violation::new(*span, format!("cannot broadcast {a} with {b}")))
            }
            Expr::Call { args, span, .. } => {
                let mut shape = Shape::Scalar;
                for a in args {
                    let s = self.expr_shape(a)?;
                    shape = shape
                        .broadcast(s)
                        .ok_or_else(|| Violation::new(*span, format!("cannot broadcast {shape} with {s}")))?;
                }
                Ok(shape)
            }
        }
    }
}

/// A failed check: where and why.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub span: Span,
    pub message: String,
}

impl Violation {
    pub fn new(span: Span, message: impl Into<String>) -> Self {
        Violation { span, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub phi1: bool,
    pub phi2: bool,
    pub phi3: bool,
    /// Scope and shape check; part of Φ.
    pub scope: bool,
    pub violating_span: Option<(usize, usize)>,
    pub message: String,
    #[serde(skip)]
    pub statement: Option<Statement>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.phi1 && self.phi2 && self.phi3 && self.scope
    }

    fn ok(statement: Statement) -> Self {
        ValidationReport {
            phi1: true,
            phi2: true,
            phi3: true,
            scope: true,
            violating_span: None,
            message: String::new(),
            statement: Some(statement),
        }
    }

    fn failed(stage: usize, v: Violation, statement: Option<Statement>) -> Self {
        ValidationReport {
            phi1: stage > 1,
            phi2: stage > 2,
            phi3: stage > 3,
            scope: false,
            violating_span: Some((v.span.start, v.span.end)),
            message: v.message,
            statement,
        }
    }

    pub fn span(&self) -> Option<Span> {
        self.violating_span.map(|(a, b)| Span::new(a, b))
    }
}

/// Parses `fragment` as one statement continuing `ctx`. Spans in the result
/// are relative to the start of the fragment.
pub fn check_parse(fragment: &[Token], ctx: &PrefixState) -> Result<(Statement, BlockKind), Violation> {
    let base = ctx.len();
    let mut state = ctx.clone();
    let mut block = None;
    for (i, tok) in fragment.iter().enumerate() {
        if block.is_some() {
            return Err(Violation::new(Span::new(i, i + 1), "tokens after end of statement"));
        }
        if !state.push(tok.clone()) {
            let e =
                ParseError::Syntax { index: i, offset: tok.start, found: tok.text.clone(), expected: state.expected() };
            return Err(Violation::new(Span::new(i, i + 1), e.to_string()));
        }
        if state.completes(NonTerminal::PStmt, base) {
            block = Some(BlockKind::Prior);
        } else if state.completes(NonTerminal::LStmt, base) {
            block = Some(BlockKind::Likelihood);
        }
    }
    let Some(block) = block else {
        let e = ParseError::UnexpectedEnd { index: fragment.len(), expected: state.expected() };
        return Err(Violation::new(Span::point(fragment.len()), e.to_string()));
    };
    let start = if block == BlockKind::Prior { NonTerminal::PStmt } else { NonTerminal::LStmt };
    let tree = grammar::parse_tree(fragment.to_vec(), start).map_err(|e| {
        let span = e.span().unwrap_or_default();
        Violation::new(span, e.to_string())
    })?;
    let stmt =
        grammar::lower_statement(&tree).map_err(|e| Violation::new(e.span().unwrap_or_default(), e.to_string()))?;
    Ok((stmt, block))
}

pub fn phi1_parseable(fragment: &[Token], ctx: &PrefixState) -> bool {
    check_parse(fragment, ctx).is_ok()
}

pub fn check_distribution(stmt: &Statement, registry: &Registry) -> Result<(), Violation> {
    match stmt.dist() {
        Some(d) if !registry.contains(&d.name) => {
            Err(Violation::new(d.name_span, format!("unknown distribution `{}`", d.name)))
        }
        _ => Ok(()),
    }
}

pub fn phi2_distribution_valid(stmt: &Statement, registry: &Registry) -> bool {
    check_distribution(stmt, registry).is_ok()
}

/// Resolves the arguments of a call to parameter slots. Named arguments must
/// follow positional ones.
pub fn resolve_args<'a>(dist: &'a DistCall, registry: &Registry) -> Result<Vec<&'a Arg>, Violation> {
    let spec = registry
        .get(&dist.name)
        .ok_or_else(|| Violation::new(dist.name_span, format!("unknown distribution `{}`", dist.name)))?;
    let mut slots: Vec<Option<&Arg>> = vec![None; spec.arity()];
    let mut seen_named = false;
    for (i, a) in dist.args.iter().enumerate() {
        let idx = match &a.name {
            Some(name) => {
                seen_named = true;
                spec.param_index(name).ok_or_else(|| {
                    let expected: Vec<_> = spec.params.iter().map(|p| p.name).collect();
                    Violation::new(
                        a.name_span,
                        format!("`{}` has no parameter `{name}`; expected one of {}", spec.name, expected.join(", ")),
                    )
                })?
            }
            None if seen_named => {
                return Err(Violation::new(a.span, "positional argument after named argument"));
            }
            None if i >= spec.arity() => {
                return Err(Violation::new(a.span, format!("`{}` takes {} arguments", spec.name, spec.arity())));
            }
            None => i,
        };
        if slots[idx].is_some() {
            let span = if a.name.is_some() { a.name_span } else { a.span };
            return Err(Violation::new(span, format!("parameter `{}` given twice", spec.params[idx].name)));
        }
        slots[idx] = Some(a);
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        return Err(Violation::new(
            Span::point(dist.close_span.start),
            format!("missing parameter `{}` of `{}`", spec.params[missing].name, spec.name),
        ));
    }
    Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
}

pub fn check_parameters(stmt: &Statement, registry: &Registry) -> Result<(), Violation> {
    let Some(dist) = stmt.dist() else { return Ok(()) };
    let args = resolve_args(dist, registry)?;
    let spec = registry.get(&dist.name).expect("resolved above");
    for (p, a) in spec.params.iter().zip(&args) {
        if let Some(v) = a.value.literal_value() {
            if !p.domain.admits(v) {
                return Err(Violation::new(
                    a.value.span(),
                    format!("literal {v} is outside the domain of `{}` ({:?})", p.name, p.domain),
                ));
            }
        }
    }
    if spec.params.iter().any(|p| p.domain == ParamDomain::OrderedPair) {
        if let (Some(lo), Some(hi)) = (args[0].value.literal_value(), args[1].value.literal_value()) {
            if lo >= hi {
                return Err(Violation::new(args[1].value.span(), "upper bound must exceed lower bound"));
            }
        }
    }
    Ok(())
}

pub fn phi3_parameter_valid(stmt: &Statement, registry: &Registry) -> bool {
    check_parameters(stmt, registry).is_ok()
}

pub fn check_scope_and_shape(
    stmt: &Statement,
    table: &SymbolTable,
    block: BlockKind,
    registry: &Registry,
) -> Result<(), Violation> {
    for e in stmt.expressions() {
        for (name, span) in e.identifiers() {
            if !table.contains(name) {
                return Err(Violation::new(span, format!("`{name}` is not defined before use")));
            }
        }
    }
    let target = &stmt.target;
    match (&stmt.kind, block) {
        (StmtKind::Deterministic { .. }, BlockKind::Likelihood) | (_, BlockKind::Data) => {
            Err(Violation::new(stmt.span, format!("statement not allowed in the {block} block")))
        }
        (StmtKind::Deterministic { expr }, _) => {
            if table.contains(target) {
                return Err(Violation::new(stmt.target_span, format!("`{target}` is already defined")));
            }
            table.expr_shape(expr).map(|_| ())
        }
        (StmtKind::Stochastic { dist, replicate }, BlockKind::Prior) => {
            if table.contains(target) {
                return Err(Violation::new(stmt.target_span, format!("`{target}` is already defined")));
            }
            let spec = registry.get(&dist.name).expect("checked by phi2");
            if !spec.continuous {
                return Err(Violation::new(
                    dist.name_span,
                    format!("discrete `{}` cannot be a prior; it is only valid for observed data", spec.name),
                ));
            }
            let shape = match replicate {
                Some(0) => return Err(Violation::new(stmt.target_span, "replication count must be positive")),
                Some(n) => Shape::Vector(*n),
                None => Shape::Scalar,
            };
            for a in &dist.args {
                let s = table.expr_shape(&a.value)?;
                if s.broadcast(shape) != Some(shape) {
                    let hint = if replicate.is_none() { "; use a replicated target like `x[n]`" } else { "" };
                    return Err(Violation::new(
                        a.value.span(),
                        format!("argument of shape {s} does not fit {shape}{hint}"),
                    ));
                }
            }
            Ok(())
        }
        (StmtKind::Stochastic { dist, .. }, BlockKind::Likelihood) => {
            let (shape, int) = match table.get(target) {
                Some(Binding::Data { observed: true, .. }) => {
                    return Err(Violation::new(stmt.target_span, format!("`{target}` is already observed")));
                }
                Some(Binding::Data { shape, int, .. }) => (*shape, *int),
                _ => {
                    return Err(Violation::new(
                        stmt.target_span,
                        format!("likelihood target `{target}` is not a data column"),
                    ));
                }
            };
            let spec = registry.get(&dist.name).expect("checked by phi2");
            if !spec.continuous && !int {
                return Err(Violation::new(
                    dist.name_span,
                    format!("discrete `{}` needs integer data but `{target}` is real", spec.name),
                ));
            }
            let args = resolve_args(dist, registry)?;
            for (p, a) in spec.params.iter().zip(args) {
                let s = table.expr_shape(&a.value)?;
                if s.broadcast(shape) != Some(shape) {
                    return Err(Violation::new(a.value.span(), format!("argument of shape {s} does not fit {shape}")));
                }
                if p.domain == ParamDomain::NonnegInt && !is_integer_valued(&a.value, table) {
                    return Err(Violation::new(
                        a.value.span(),
                        format!("`{}` must be an integer literal or integer data", p.name),
                    ));
                }
            }
            Ok(())
        }
    }
}

fn is_integer_valued(e: &Expr, table: &SymbolTable) -> bool {
    match e {
        Expr::Num { value, .. } => value.fract() == 0.0,
        Expr::Ident { name, .. } => matches!(table.get(name), Some(Binding::Data { int: true, .. })),
        _ => false,
    }
}

pub fn scope_and_shape_check(stmt: &Statement, table: &SymbolTable, block: BlockKind, registry: &Registry) -> bool {
    check_scope_and_shape(stmt, table, block, registry).is_ok()
}

/// φ2, φ3 and the scope check on an already parsed statement. Extends
/// `table` on success.
pub fn validate_statement(
    stmt: &Statement,
    block: BlockKind,
    table: &mut SymbolTable,
    registry: &Registry,
) -> ValidationReport {
    if let Err(v) = check_distribution(stmt, registry) {
        return ValidationReport::failed(2, v, Some(stmt.clone()));
    }
    if let Err(v) = check_parameters(stmt, registry) {
        return ValidationReport::failed(3, v, Some(stmt.clone()));
    }
    if let Err(v) = check_scope_and_shape(stmt, table, block, registry) {
        return ValidationReport::failed(4, v, Some(stmt.clone()));
    }
    table.apply(stmt, block, registry);
    ValidationReport::ok(stmt.clone())
}

/// Full Φ on a token fragment continuing `ctx`. Spans are relative to the
/// fragment.
pub fn validate(
    fragment: &[Token],
    ctx: &PrefixState,
    table: &mut SymbolTable,
    registry: &Registry,
) -> ValidationReport {
    match check_parse(fragment, ctx) {
        Err(v) => ValidationReport::failed(1, v, None),
        Ok((stmt, block)) => validate_statement(&stmt, block, table, registry),
    }
}

/// Statement-wise validation of a whole program, in order.
pub fn check_program(program: &ModelProgram, registry: &Registry) -> Result<SymbolTable, ProgramViolation> {
    let mut table = SymbolTable::from_data(&program.data_decls).map_err(|v| ProgramViolation {
        block: BlockKind::Data,
        index: 0,
        violation: v,
    })?;
    for (block, stmts) in [(BlockKind::Prior, &program.prior_stmts), (BlockKind::Likelihood, &program.likelihood_stmts)]
    {
        for (index, s) in stmts.iter().enumerate() {
            let r = validate_statement(s, block, &mut table, registry);
            if !r.is_valid() {
                let violation = Violation::new(r.span().unwrap_or_default(), r.message);
                return Err(ProgramViolation { block, index, violation });
            }
        }
    }
    if program.likelihood_stmts.is_empty() {
        return Err(ProgramViolation {
            block: BlockKind::Likelihood,
            index: 0,
            violation: Violation::new(Span::default(), "likelihood block is empty"),
        });
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{block} statement {index}: {}", violation.message)]
pub struct ProgramViolation {
    pub block: BlockKind,
    pub index: usize,
    pub violation: Violation,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{feed, tokenize};

    fn ctx(prefix: &str) -> PrefixState {
        let mut s = PrefixState::default();
        feed(&mut s, tokenize(prefix).unwrap()).unwrap();
        s
    }

    const PRIOR: &str = "model { data { y: vector[8]; sigma: vector[8]; k: intvector[8]; } prior {";

    fn table() -> SymbolTable {
        let p = grammar::parse("model { data { y: vector[8]; sigma: vector[8]; k: intvector[8]; } prior { } likelihood { y ~ Normal(0, 1); } }").unwrap();
        SymbolTable::from_data(&p.data_decls).unwrap()
    }

    fn run(stmt: &str, t: &mut SymbolTable) -> ValidationReport {
        validate(&tokenize(stmt).unwrap(), &ctx(PRIOR), t, &Registry::default())
    }

    fn span(r: &ValidationReport) -> (usize, usize) {
        r.violating_span.unwrap()
    }

    #[test]
    fn phi1_examples() {
        let c = ctx(PRIOR);
        assert!(phi1_parseable(&tokenize("mu ~ Normal(0, 10);").unwrap(), &c));
        let r = check_parse(&tokenize("mu ~ Normal(0, 10").unwrap(), &c).unwrap_err();
        assert_eq!((r.span.start, r.span.end), (7, 7));
        let r = check_parse(&tokenize("= 3;").unwrap(), &c).unwrap_err();
        assert_eq!((r.span.start, r.span.end), (0, 1));
        let r = check_parse(&tokenize("a = 1; b").unwrap(), &c).unwrap_err();
        assert_eq!(r.span.start, 4);
    }

    #[test]
    fn block_follows_context() {
        let lik = ctx("model { data { y: real; } prior { } likelihood {");
        let (_, b) = check_parse(&tokenize("y ~ Normal(0, 1);").unwrap(), &lik).unwrap();
        assert_eq!(b, BlockKind::Likelihood);
        assert!(!phi1_parseable(&tokenize("a = 1;").unwrap(), &lik));
    }

    #[test]
    fn phi2_examples() {
        let reg = Registry::default();
        let s = |t: &str| grammar::parse_statement(t, BlockKind::Prior).unwrap();
        assert!(phi2_distribution_valid(&s("y ~ Normal(mu, sigma);"), &reg));
        assert!(!phi2_distribution_valid(&s("mu ~ ExtNormal(0);"), &reg));
        assert!(!phi2_distribution_valid(&s("b ~ random_coefs();"), &reg));
    }

    #[test]
    fn wrong_parameter_name_is_localized() {
        let mut t = table();
        let r = run("mu ~ Normal(mu=0, std=10);", &mut t);
        assert!(r.phi1 && r.phi2 && !r.phi3);
        assert_eq!(span(&r), (8, 9));
        assert!(r.message.contains("std"));
        assert_eq!(t, table());
    }

    #[test]
    fn parameter_rules() {
        let reg = Registry::default();
        let ok = |t: &str| phi3_parameter_valid(&grammar::parse_statement(t, BlockKind::Prior).unwrap(), &reg);
        assert!(ok("mu ~ Normal(0, 10);"));
        assert!(ok("mu ~ Normal(sigma=1, mu=0);"));
        assert!(!ok("s ~ HalfNormal(sigma=-1);"));
        assert!(!ok("s ~ HalfNormal(0);"));
        assert!(!ok("s ~ Normal(0);"));
        assert!(!ok("s ~ Normal(0, 1, 2);"));
        assert!(!ok("s ~ Normal(0, mu=1);"));
        assert!(!ok("s ~ Normal(sigma=1, 0);"));
        assert!(!ok("s ~ Uniform(2, 1);"));
        assert!(ok("s ~ Uniform(-1, 1);"));
        assert!(!ok("p ~ Beta(1, 0.0);"));
    }

    #[test]
    fn missing_parameter_points_at_close_paren() {
        let mut t = table();
        let r = run("mu ~ Normal(0);", &mut t);
        assert!(!r.phi3);
        assert_eq!(span(&r), (5, 5));
    }

    #[test]
    fn scope_examples() {
        let reg = Registry::default();
        let mut t = table();
        let prior = |s: &str| grammar::parse_statement(s, BlockKind::Prior).unwrap();
        let lik = |s: &str| grammar::parse_statement(s, BlockKind::Likelihood).unwrap();
        assert!(!scope_and_shape_check(&prior("theta[8] ~ Normal(mu, tau);"), &t, BlockKind::Prior, &reg));
        for s in ["mu ~ Normal(0, 5);", "tau ~ HalfCauchy(5);", "theta[8] ~ Normal(mu, tau);"] {
            assert!(validate_statement(&prior(s), BlockKind::Prior, &mut t, &reg).is_valid(), "{s}");
        }
        assert!(scope_and_shape_check(&lik("y ~ Normal(theta, sigma);"), &t, BlockKind::Likelihood, &reg));
        assert!(!scope_and_shape_check(&lik("theta ~ Normal(0, 1);"), &t, BlockKind::Likelihood, &reg));
        assert!(!scope_and_shape_check(&prior("mu ~ Normal(0, 1);"), &t, BlockKind::Prior, &reg));
        assert!(!scope_and_shape_check(&prior("m ~ Normal(theta, 1);"), &t, BlockKind::Prior, &reg));
        assert!(!scope_and_shape_check(&prior("c ~ Poisson(3);"), &t, BlockKind::Prior, &reg));
        assert!(!scope_and_shape_check(&lik("y ~ Poisson(mu);"), &t, BlockKind::Likelihood, &reg));
        assert!(scope_and_shape_check(&lik("k ~ Binomial(k, invlogit(mu));"), &t, BlockKind::Likelihood, &reg));
        assert!(!scope_and_shape_check(&lik("k ~ Binomial(mu, 0.5);"), &t, BlockKind::Likelihood, &reg));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let reg = Registry::default();
        let mut t = table();
        let prior = |s: &str| grammar::parse_statement(s, BlockKind::Prior).unwrap();
        assert!(validate_statement(&prior("a[3] ~ Normal(0, 1);"), BlockKind::Prior, &mut t, &reg).is_valid());
        let r = validate_statement(&prior("b = a + y;"), BlockKind::Prior, &mut t, &reg);
        assert!(r.phi3 && !r.scope);
    }

    #[test]
    fn observed_once() {
        let reg = Registry::default();
        let mut t = table();
        let lik = grammar::parse_statement("y ~ Normal(0, sigma);", BlockKind::Likelihood).unwrap();
        assert!(validate_statement(&lik, BlockKind::Likelihood, &mut t, &reg).is_valid());
        assert!(!validate_statement(&lik, BlockKind::Likelihood, &mut t, &reg).is_valid());
        assert_eq!(t.unobserved_data().collect::<Vec<_>>(), vec!["sigma", "k"]);
    }

    #[test]
    fn valid_statement_grows_table() {
        let mut t = table();
        let n = t.len();
        let r = run("mu ~ Normal(0, 10);", &mut t);
        assert!(r.is_valid() && r.violating_span.is_none());
        assert_eq!(t.len(), n + 1);
    }

    #[test]
    fn short_circuit_on_parse_failure() {
        let mut t = table();
        let r = run("mu ~ ExtNormal(0", &mut t);
        assert!(!r.phi1 && !r.phi2 && !r.phi3);
    }

    #[test]
    fn whole_program() {
        let reg = Registry::default();
        let p = grammar::parse(
            "model { data { y: vector[8]; sigma: vector[8]; } prior { mu ~ Normal(0, 5); tau ~ HalfCauchy(5); \
             z[8] ~ Normal(0, 1); theta = mu + tau * z; } likelihood { y ~ Normal(theta, sigma); } }",
        )
        .unwrap();
        let t = check_program(&p, &reg).unwrap();
        assert_eq!(t.get("theta"), Some(&Binding::Deterministic { shape: Shape::Vector(8) }));
    }
}
