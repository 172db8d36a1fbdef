//! Concrete syntax: tokenizer, Earley-based prefix acceptance and parsing,
//! lowering to the AST, and canonical rendering.

mod earley;
mod lexer;
mod render;

pub use earley::{
    grammar, Category, FrontierError, GrammarDef, NonTerminal, ParseNode, PrefixState, Production, Symbol,
};
pub use lexer::{is_keyword, tokenize, LexError, Terminal, Token};
pub use render::{format_number, render, render_expr, render_statement};

use thiserror::Error;

use crate::ast::*;

/// The accepted language, for documentation and `ppsynth grammar`.
pub const EBNF: &str = r#"program          := "model" "{" data_block prior_block likelihood_block "}"
data_block       := "data" "{" decl* "}"
decl             := ident ":" dtype ";"
dtype            := "real" | "int" | "vector" "[" INT "]" | "intvector" "[" INT "]"
prior_block      := "prior" "{" pstmt* "}"
pstmt            := ident rep? "~" dist ";" | ident "=" expr ";"
rep              := "[" INT "]"
likelihood_block := "likelihood" "{" lstmt+ "}"
lstmt            := ident "~" dist ";"
dist             := ident "(" ( arg ( "," arg )* )? ")"
arg              := ( ident "=" )? expr
expr             := term ( ( "+" | "-" ) term )*
term             := factor ( ( "*" | "/" ) factor )*
factor           := "-" factor | atom
atom             := number | ident | func "(" expr ")" | "pow" "(" expr "," expr ")" | "(" expr ")"
func             := "exp" | "log" | "sqrt" | "logit" | "invlogit"
ident            := [A-Za-z_][A-Za-z0-9_]*   (keywords excluded)
number           := INT | FLOAT
INT              := [0-9]+
FLOAT            := ( [0-9]+ "." [0-9]* | "." [0-9]+ | [0-9]+ ) ( [eE] [+-]? [0-9]+ )?
"#;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("unexpected `{found}` at token {index}; expected {}", describe(expected))]
    Syntax { index: usize, offset: usize, found: String, expected: Vec<Terminal> },
    #[error("unexpected end of input after token {index}; expected {}", describe(expected))]
    UnexpectedEnd { index: usize, expected: Vec<Terminal> },
    #[error("invalid literal `{text}` at token {index}")]
    BadLiteral { index: usize, text: String },
}

fn describe(ts: &[Terminal]) -> String {
    ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

impl ParseError {
    /// Token span of the first offending token; an empty span at the end of
    /// input when a token is missing.
    pub fn span(&self) -> Option<Span> {
        match self {
            ParseError::Lex(_) => None,
            ParseError::Syntax { index, .. } | ParseError::BadLiteral { index, .. } => {
                Some(Span::new(*index, index + 1))
            }
            ParseError::UnexpectedEnd { index, .. } => Some(Span::point(*index)),
        }
    }
}

/// `Some(next state)` iff `token` keeps the prefix viable.
pub fn accepts_prefix(state: &PrefixState, token: Token) -> Option<PrefixState> {
    state.advance(token)
}

pub fn frontier_nonterminal(state: &PrefixState) -> Result<Category, FrontierError> {
    state.frontier()
}

/// Feeds `tokens` into `state`, reporting the first rejected one. Indices in
/// the error are absolute positions in the state's token sequence.
pub fn feed(state: &mut PrefixState, tokens: impl IntoIterator<Item = Token>) -> Result<(), ParseError> {
    for tok in tokens {
        let index = state.len();
        let expected = state.expected();
        let (found, offset) = (tok.text.clone(), tok.start);
        if !state.push(tok) {
            return Err(ParseError::Syntax { index, offset, found, expected });
        }
    }
    Ok(())
}

pub fn parse(text: &str) -> Result<ModelProgram, ParseError> {
    parse_tokens(tokenize(text)?)
}

pub fn parse_tokens(tokens: Vec<Token>) -> Result<ModelProgram, ParseError> {
    let tree = parse_tree(tokens, NonTerminal::Program)?;
    lower_program(&tree)
}

/// Parses a complete sentence of `start` and returns its tree.
pub fn parse_tree(tokens: Vec<Token>, start: NonTerminal) -> Result<ParseNode, ParseError> {
    let mut state = PrefixState::new(start);
    feed(&mut state, tokens)?;
    state.parse_tree().ok_or_else(|| ParseError::UnexpectedEnd { index: state.len(), expected: state.expected() })
}

/// Parses one prior (`PStmt`) or likelihood (`LStmt`) statement.
pub fn parse_statement(text: &str, block: BlockKind) -> Result<Statement, ParseError> {
    let start = match block {
        BlockKind::Likelihood => NonTerminal::LStmt,
        _ => NonTerminal::PStmt,
    };
    lower_statement(&parse_tree(tokenize(text)?, start)?)
}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    lower_expr(&parse_tree(tokenize(text)?, NonTerminal::Expr)?)
}

fn text(n: &ParseNode) -> &str {
    n.text.as_deref().unwrap_or_default()
}

fn child_is(n: &ParseNode, i: usize, t: Terminal) -> bool {
    n.children.get(i).is_some_and(|c| c.symbol == Symbol::T(t))
}

fn lower_program(n: &ParseNode) -> Result<ModelProgram, ParseError> {
    let mut p = ModelProgram::default();
    lower_list(&n.children[2].children[2], &mut p.data_decls, lower_decl)?;
    lower_list(&n.children[3].children[2], &mut p.prior_stmts, lower_statement)?;
    lower_list(&n.children[4].children[2], &mut p.likelihood_stmts, lower_statement)?;
    Ok(p)
}

/// Left-recursive lists: `L -> (L)? item`.
fn lower_list<T>(
    n: &ParseNode,
    out: &mut Vec<T>,
    item: fn(&ParseNode) -> Result<T, ParseError>,
) -> Result<(), ParseError> {
    match n.children.as_slice() {
        [] => {}
        [one] => out.push(item(one)?),
        [rest, last] => {
            lower_list(rest, out, item)?;
            out.push(item(last)?);
        }
        _ => unreachable!("list production with more than two children"),
    }
    Ok(())
}

fn int_literal(n: &ParseNode) -> Result<usize, ParseError> {
    text(n).parse().map_err(|_| ParseError::BadLiteral { index: n.span.start, text: text(n).to_string() })
}

fn lower_decl(n: &ParseNode) -> Result<DataDecl, ParseError> {
    let ty = &n.children[2];
    let dtype = match ty.children[0].symbol {
        Symbol::T(Terminal::Real) => DataType::Real,
        Symbol::T(Terminal::Int) => DataType::Int,
        Symbol::T(Terminal::Vector) => DataType::Vector(int_literal(&ty.children[2])?),
        _ => DataType::IntVector(int_literal(&ty.children[2])?),
    };
    Ok(DataDecl { name: text(&n.children[0]).to_string(), dtype, span: n.span })
}

pub(crate) fn lower_statement(n: &ParseNode) -> Result<Statement, ParseError> {
    let c = &n.children;
    let target = text(&c[0]).to_string();
    let kind = if child_is(n, 1, Terminal::Assign) {
        StmtKind::Deterministic { expr: lower_expr(&c[2])? }
    } else if child_is(n, 1, Terminal::Tilde) {
        StmtKind::Stochastic { dist: lower_dist(&c[2])?, replicate: None }
    } else {
        let count = int_literal(&c[1].children[1])?;
        StmtKind::Stochastic { dist: lower_dist(&c[3])?, replicate: Some(count) }
    };
    Ok(Statement { target, target_span: c[0].span, kind, span: n.span })
}

fn lower_dist(n: &ParseNode) -> Result<DistCall, ParseError> {
    let c = &n.children;
    let mut args = Vec::new();
    if c.len() == 4 {
        lower_args(&c[2], &mut args)?;
    }
    Ok(DistCall { name: text(&c[0]).to_string(), name_span: c[0].span, args, close_span: c[c.len() - 1].span })
}

fn lower_args(n: &ParseNode, out: &mut Vec<Arg>) -> Result<(), ParseError> {
    match n.children.as_slice() {
        [arg] => out.push(lower_arg(arg)?),
        [rest, _, arg] => {
            lower_args(rest, out)?;
            out.push(lower_arg(arg)?);
        }
        _ => unreachable!("Args production shape"),
    }
    Ok(())
}

fn lower_arg(n: &ParseNode) -> Result<Arg, ParseError> {
    match n.children.as_slice() {
        [e] => Ok(Arg { name: None, name_span: Span::point(n.span.start), value: lower_expr(e)?, span: n.span }),
        [name, _, e] => {
            Ok(Arg { name: Some(text(name).to_string()), name_span: name.span, value: lower_expr(e)?, span: n.span })
        }
        _ => unreachable!("Arg production shape"),
    }
}

fn lower_expr(n: &ParseNode) -> Result<Expr, ParseError> {
    let c = &n.children;
    let Symbol::N(nt) = n.symbol else { unreachable!("expression node is a terminal") };
    match (nt, c.len()) {
        (NonTerminal::Expr | NonTerminal::Term, 3) => {
            let op = match c[1].symbol {
                Symbol::T(Terminal::Plus) => BinOp::Add,
                Symbol::T(Terminal::Minus) => BinOp::Sub,
                Symbol::T(Terminal::Star) => BinOp::Mul,
                _ => BinOp::Div,
            };
            Ok(Expr::Binary { op, lhs: Box::new(lower_expr(&c[0])?), rhs: Box::new(lower_expr(&c[2])?), span: n.span })
        }
        (NonTerminal::Factor, 2) => Ok(Expr::Neg { inner: Box::new(lower_expr(&c[1])?), span: n.span }),
        (NonTerminal::Atom, 1) if c[0].symbol == Symbol::T(Terminal::Ident) => {
            Ok(Expr::Ident { name: text(&c[0]).to_string(), span: n.span })
        }
        (NonTerminal::Atom, 3) => lower_expr(&c[1]),
        (NonTerminal::Atom, _) if c.len() > 3 => {
            let func = Func::from_name(text(&c[0])).expect("lexer only emits known function names");
            let args = c[2..c.len() - 1]
                .iter()
                .filter(|a| a.symbol == Symbol::N(NonTerminal::Expr))
                .map(lower_expr)
                .collect::<Result<_, _>>()?;
            Ok(Expr::Call { func, args, span: n.span })
        }
        (NonTerminal::Number, _) => {
            let t = text(&c[0]);
            match t.parse::<f64>() {
                Ok(value) if value.is_finite() => Ok(Expr::Num { value, span: n.span }),
                _ => Err(ParseError::BadLiteral { index: n.span.start, text: t.to_string() }),
            }
        }
        (_, 1) => lower_expr(&c[0]),
        _ => unreachable!("unexpected expression node {nt:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EIGHT: &str = "model { data { y: vector[8]; sigma: vector[8]; } prior { mu ~ Normal(0,10); } likelihood { y ~ Normal(mu, sigma); } }";

    #[test]
    fn parses_exemplar() {
        let p = parse(EIGHT).unwrap();
        assert_eq!(p.data_decls.len(), 2);
        assert_eq!(p.data_decls[0].dtype, DataType::Vector(8));
        assert_eq!(
            p.prior_stmts[0],
            Statement::stochastic(
                "mu",
                "Normal",
                vec![Arg::positional(Expr::num(0.0)), Arg::positional(Expr::num(10.0))]
            )
        );
        let lik = &p.likelihood_stmts[0];
        assert_eq!(lik.target, "y");
        assert_eq!(lik.dist().unwrap().args[1].value, Expr::ident("sigma"));
    }

    #[test]
    fn missing_comma_points_at_literal() {
        let err = parse("model { data { } prior { mu ~ Normal(0 10); } likelihood { } }").unwrap_err();
        match err {
            ParseError::Syntax { found, index, .. } => {
                assert_eq!(found, "10");
                assert_eq!(index, 12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unmatched_brace() {
        let src = EIGHT.trim_end_matches('}');
        assert!(matches!(parse(src), Err(ParseError::UnexpectedEnd { .. })));
        assert!(matches!(parse(&format!("{EIGHT} }}")), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn statement_spans() {
        let p = parse(EIGHT).unwrap();
        let s = &p.prior_stmts[0];
        assert_eq!((s.span.start, s.span.end), (21, 30));
        assert_eq!((s.target_span.start, s.target_span.end), (21, 22));
        let d = s.dist().unwrap();
        assert_eq!(d.name_span.start, 23);
        assert_eq!(d.close_span.start, 28);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse_expr("-a * b + pow(c, 2) / exp(d)").unwrap();
        let Expr::Binary { op: BinOp::Add, lhs, rhs, .. } = e else { panic!() };
        assert!(matches!(*lhs, Expr::Binary { op: BinOp::Mul, ref lhs, .. } if matches!(**lhs, Expr::Neg { .. })));
        assert!(matches!(*rhs, Expr::Binary { op: BinOp::Div, .. }));
    }

    #[test]
    fn replication_and_named_args() {
        let s = parse_statement("theta[8] ~ Normal(mu=m, sigma=tau);", BlockKind::Prior).unwrap();
        let StmtKind::Stochastic { replicate, dist } = &s.kind else { panic!() };
        assert_eq!(*replicate, Some(8));
        assert_eq!(dist.args[1].name.as_deref(), Some("sigma"));
        assert!(parse_statement("theta[8] ~ Normal(0, 1);", BlockKind::Likelihood).is_err());
        assert!(parse_statement("t = a;", BlockKind::Likelihood).is_err());
    }

    #[test]
    fn overflowing_literal_rejected() {
        assert!(matches!(parse_expr("1e999"), Err(ParseError::BadLiteral { .. })));
    }

    #[test]
    fn accepts_prefix_examples() {
        let mut s = PrefixState::default();
        feed(&mut s, tokenize("model { data { } prior { mu ~").unwrap()).unwrap();
        assert!(accepts_prefix(&s, Token::synthetic(Terminal::Ident, "Normal")).is_some());
        assert!(accepts_prefix(&s, Token::fixed(Terminal::Semi)).is_none());
    }
}
