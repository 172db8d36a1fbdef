//! Earley recognizer over the fixed modeling grammar.
//!
//! Each consumed token adds one closed item set. Sets are shared behind `Arc`,
//! so copying a [`PrefixState`] for backtracking costs a vector of pointers.
//! Nullable nonterminals are handled by advancing over them at prediction
//! time, which keeps completion within a single set unnecessary.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use super::lexer::{Terminal, Token};
use crate::ast::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum NonTerminal {
    Program,
    DataBlock,
    Decls,
    Decl,
    DType,
    PriorBlock,
    PStmts,
    PStmt,
    Rep,
    LikBlock,
    LStmts,
    LStmt,
    Dist,
    Args,
    Arg,
    Expr,
    Term,
    Factor,
    Atom,
    Number,
}

impl NonTerminal {
    pub const COUNT: usize = 20;

    pub fn category(self) -> Category {
        use NonTerminal::*;
        match self {
            Program => Category::Program,
            DataBlock | PriorBlock | LikBlock | Decls | PStmts | LStmts => Category::Block,
            Decl | DType => Category::Declaration,
            PStmt | LStmt | Rep => Category::Statement,
            Dist => Category::Distribution,
            Args | Arg => Category::ArgList,
            Expr | Term | Factor | Atom | Number => Category::Expr,
        }
    }
}

/// Statement-granularity classes reported by [`PrefixState::frontier`],
/// ordered from outermost to innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Program,
    Block,
    Declaration,
    Statement,
    Distribution,
    ArgList,
    Expr,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    T(Terminal),
    N(NonTerminal),
}

#[derive(Debug, Clone)]
pub struct Production {
    pub lhs: NonTerminal,
    pub rhs: Vec<Symbol>,
}

#[derive(Debug)]
pub struct GrammarDef {
    pub productions: Vec<Production>,
    pub start: NonTerminal,
    by_lhs: Vec<Vec<u16>>,
    nullable: Vec<bool>,
}

impl GrammarDef {
    pub fn productions_of(&self, nt: NonTerminal) -> impl Iterator<Item = &Production> {
        self.by_lhs[nt as usize].iter().map(|&p| &self.productions[p as usize])
    }

    pub fn is_nullable(&self, nt: NonTerminal) -> bool {
        self.nullable[nt as usize]
    }

    fn next(&self, it: Item) -> Option<Symbol> {
        self.productions[it.prod as usize].rhs.get(it.dot as usize).copied()
    }

    fn rhs_len(&self, prod: u16) -> u16 {
        self.productions[prod as usize].rhs.len() as u16
    }
}

pub fn grammar() -> &'static GrammarDef {
    static G: OnceLock<GrammarDef> = OnceLock::new();
    G.get_or_init(build_grammar)
}

fn build_grammar() -> GrammarDef {
    use NonTerminal as N;
    use Terminal as T;
    let t = Symbol::T;
    let n = Symbol::N;
    let rules: Vec<(NonTerminal, Vec<Symbol>)> = vec![
        (N::Program, vec![t(T::Model), t(T::LBrace), n(N::DataBlock), n(N::PriorBlock), n(N::LikBlock), t(T::RBrace)]),
        (N::DataBlock, vec![t(T::Data), t(T::LBrace), n(N::Decls), t(T::RBrace)]),
        (N::Decls, vec![]),
        (N::Decls, vec![n(N::Decls), n(N::Decl)]),
        (N::Decl, vec![t(T::Ident), t(T::Colon), n(N::DType), t(T::Semi)]),
        (N::DType, vec![t(T::Real)]),
        (N::DType, vec![t(T::Int)]),
        (N::DType, vec![t(T::Vector), t(T::LBracket), t(T::IntLit), t(T::RBracket)]),
        (N::DType, vec![t(T::IntVector), t(T::LBracket), t(T::IntLit), t(T::RBracket)]),
        (N::PriorBlock, vec![t(T::Prior), t(T::LBrace), n(N::PStmts), t(T::RBrace)]),
        (N::PStmts, vec![]),
        (N::PStmts, vec![n(N::PStmts), n(N::PStmt)]),
        (N::PStmt, vec![t(T::Ident), t(T::Tilde), n(N::Dist), t(T::Semi)]),
        (N::PStmt, vec![t(T::Ident), n(N::Rep), t(T::Tilde), n(N::Dist), t(T::Semi)]),
        (N::PStmt, vec![t(T::Ident), t(T::Assign), n(N::Expr), t(T::Semi)]),
        (N::Rep, vec![t(T::LBracket), t(T::IntLit), t(T::RBracket)]),
        (N::LikBlock, vec![t(T::Likelihood), t(T::LBrace), n(N::LStmts), t(T::RBrace)]),
        (N::LStmts, vec![n(N::LStmt)]),
        (N::LStmts, vec![n(N::LStmts), n(N::LStmt)]),
        (N::LStmt, vec![t(T::Ident), t(T::Tilde), n(N::Dist), t(T::Semi)]),
        (N::Dist, vec![t(T::Ident), t(T::LParen), t(T::RParen)]),
        (N::Dist, vec![t(T::Ident), t(T::LParen), n(N::Args), t(T::RParen)]),
        (N::Args, vec![n(N::Arg)]),
        (N::Args, vec![n(N::Args), t(T::Comma), n(N::Arg)]),
        (N::Arg, vec![n(N::Expr)]),
        (N::Arg, vec![t(T::Ident), t(T::Assign), n(N::Expr)]),
        (N::Expr, vec![n(N::Expr), t(T::Plus), n(N::Term)]),
        (N::Expr, vec![n(N::Expr), t(T::Minus), n(N::Term)]),
        (N::Expr, vec![n(N::Term)]),
        (N::Term, vec![n(N::Term), t(T::Star), n(N::Factor)]),
        (N::Term, vec![n(N::Term), t(T::Slash), n(N::Factor)]),
        (N::Term, vec![n(N::Factor)]),
        (N::Factor, vec![t(T::Minus), n(N::Factor)]),
        (N::Factor, vec![n(N::Atom)]),
        (N::Atom, vec![n(N::Number)]),
        (N::Atom, vec![t(T::Ident)]),
        (N::Atom, vec![t(T::Func1), t(T::LParen), n(N::Expr), t(T::RParen)]),
        (N::Atom, vec![t(T::Pow), t(T::LParen), n(N::Expr), t(T::Comma), n(N::Expr), t(T::RParen)]),
        (N::Atom, vec![t(T::LParen), n(N::Expr), t(T::RParen)]),
        (N::Number, vec![t(T::IntLit)]),
        (N::Number, vec![t(T::FloatLit)]),
    ];
    let mut by_lhs = vec![Vec::new(); NonTerminal::COUNT];
    let productions: Vec<Production> = rules
        .into_iter()
        .enumerate()
        .map(|(i, (lhs, rhs))| {
            by_lhs[lhs as usize].push(i as u16);
            Production { lhs, rhs }
        })
        .collect();
    let mut nullable = vec![false; NonTerminal::COUNT];
    loop {
        let mut changed = false;
        for p in &productions {
            if !nullable[p.lhs as usize] && p.rhs.iter().all(|s| matches!(s, Symbol::N(b) if nullable[*b as usize])) {
                nullable[p.lhs as usize] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    GrammarDef { productions, start: NonTerminal::Program, by_lhs, nullable }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    prod: u16,
    dot: u16,
    origin: u32,
}

impl Item {
    fn advance(self) -> Item {
        Item { dot: self.dot + 1, ..self }
    }
}

#[derive(Debug)]
pub struct EarleySet {
    items: Vec<Item>,
    seen: HashSet<Item>,
    /// Bit per [`Terminal`] some item is waiting on.
    expected: u32,
}

impl EarleySet {
    fn contains(&self, it: Item) -> bool {
        self.seen.contains(&it)
    }

    fn close(g: &GrammarDef, sets: &[Arc<EarleySet>], seed: Vec<Item>) -> EarleySet {
        let k = sets.len() as u32;
        let mut set = EarleySet { items: Vec::with_capacity(seed.len() * 4), seen: HashSet::new(), expected: 0 };
        for it in seed {
            set.add(it);
        }
        let mut i = 0;
        while i < set.items.len() {
            let it = set.items[i];
            i += 1;
            match g.next(it) {
                None => {
                    // Completions with origin == k derive the empty string and
                    // were already advanced at prediction time.
                    if it.origin == k {
                        continue;
                    }
                    let lhs = g.productions[it.prod as usize].lhs;
                    let parent = &sets[it.origin as usize];
                    for &p in &parent.items {
                        if g.next(p) == Some(Symbol::N(lhs)) {
                            set.add(p.advance());
                        }
                    }
                }
                Some(Symbol::N(b)) => {
                    for &prod in &g.by_lhs[b as usize] {
                        set.add(Item { prod, dot: 0, origin: k });
                    }
                    if g.is_nullable(b) {
                        set.add(it.advance());
                    }
                }
                Some(Symbol::T(t)) => set.expected |= t.bit(),
            }
        }
        set
    }

    fn add(&mut self, it: Item) {
        if self.seen.insert(it) {
            self.items.push(it);
        }
    }
}

/// A viable prefix of some sentence derivable from a start symbol.
#[derive(Debug, Clone)]
pub struct PrefixState {
    start: NonTerminal,
    sets: Vec<Arc<EarleySet>>,
    tokens: Vec<Token>,
}

impl Default for PrefixState {
    fn default() -> Self {
        PrefixState::new(NonTerminal::Program)
    }
}

impl PrefixState {
    pub fn new(start: NonTerminal) -> PrefixState {
        let g = grammar();
        let seed = g.by_lhs[start as usize].iter().map(|&prod| Item { prod, dot: 0, origin: 0 }).collect();
        let first = EarleySet::close(g, &[], seed);
        PrefixState { start, sets: vec![Arc::new(first)], tokens: Vec::new() }
    }

    pub fn start(&self) -> NonTerminal {
        self.start
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn last(&self) -> &EarleySet {
        self.sets.last().expect("state always holds the initial set")
    }

    /// Bitmask of terminals that keep the prefix viable.
    pub fn expected_bits(&self) -> u32 {
        self.last().expected
    }

    pub fn expected(&self) -> Vec<Terminal> {
        let bits = self.expected_bits();
        Terminal::ALL.into_iter().filter(|t| bits & t.bit() != 0).collect()
    }

    pub fn accepts(&self, t: Terminal) -> bool {
        self.expected_bits() & t.bit() != 0
    }

    /// Consumes `token` in place; returns false and leaves the state untouched
    /// when the token would leave the viable-prefix language.
    pub fn push(&mut self, token: Token) -> bool {
        if !self.accepts(token.kind) {
            return false;
        }
        let g = grammar();
        let seed = self
            .last()
            .items
            .iter()
            .filter(|it| g.next(**it) == Some(Symbol::T(token.kind)))
            .map(|it| it.advance())
            .collect();
        let next = EarleySet::close(g, &self.sets, seed);
        self.sets.push(Arc::new(next));
        self.tokens.push(token);
        true
    }

    pub fn advance(&self, token: Token) -> Option<PrefixState> {
        let mut s = self.clone();
        s.push(token).then_some(s)
    }

    /// Drops every token from index `n` onward.
    pub fn truncate(&mut self, n: usize) {
        self.tokens.truncate(n);
        self.sets.truncate(n + 1);
    }

    /// Whether `nt` has a complete derivation spanning tokens `from..len()`.
    pub fn completes(&self, nt: NonTerminal, from: usize) -> bool {
        completes_in(&self.sets, nt, from, self.tokens.len())
    }

    /// The consumed tokens form a complete sentence of the start symbol.
    pub fn is_complete(&self) -> bool {
        self.completes(self.start, 0)
    }

    /// Category of the innermost expansion in progress at the end of the
    /// prefix. Errors when nothing is in progress (the sentence is finished).
    pub fn frontier(&self) -> Result<Category, FrontierError> {
        let g = grammar();
        let last = self.last();
        if last.expected == 0 {
            return Err(FrontierError::EndOfProgram);
        }
        let mut best: Option<(u32, bool, Category)> = None;
        for &it in &last.items {
            if it.dot == 0 {
                continue;
            }
            let cat = match g.next(it) {
                None => continue,
                Some(Symbol::N(b)) => (true, b.category()),
                Some(Symbol::T(_)) => (false, g.productions[it.prod as usize].lhs.category()),
            };
            let key = (it.origin, cat.0, cat.1);
            if best.is_none_or(|b| key > b) {
                best = Some(key);
            }
        }
        Ok(best.map_or(self.start.category(), |b| b.2))
    }

    /// Parse tree of the consumed tokens, when they form a complete sentence.
    pub fn parse_tree(&self) -> Option<ParseNode> {
        if !self.is_complete() {
            return None;
        }
        let b = TreeBuilder { g: grammar(), sets: &self.sets, tokens: &self.tokens };
        b.build(self.start, 0, self.tokens.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FrontierError {
    #[error("no expansion in progress at end of program")]
    EndOfProgram,
}

fn completes_in(sets: &[Arc<EarleySet>], nt: NonTerminal, from: usize, to: usize) -> bool {
    let g = grammar();
    g.by_lhs[nt as usize]
        .iter()
        .any(|&prod| sets[to].contains(Item { prod, dot: g.rhs_len(prod), origin: from as u32 }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseNode {
    pub symbol: Symbol,
    pub children: Vec<ParseNode>,
    /// Token index range covered by this node.
    pub span: Span,
    /// Production index for nonterminal nodes.
    pub production: Option<usize>,
    /// Token text for terminal leaves.
    pub text: Option<String>,
}

struct TreeBuilder<'a> {
    g: &'a GrammarDef,
    sets: &'a [Arc<EarleySet>],
    tokens: &'a [Token],
}

impl TreeBuilder<'_> {
    fn build(&self, nt: NonTerminal, i: usize, j: usize) -> Option<ParseNode> {
        for &prod in &self.g.by_lhs[nt as usize] {
            let len = self.g.rhs_len(prod);
            if !self.sets[j].contains(Item { prod, dot: len, origin: i as u32 }) {
                continue;
            }
            let mut children = Vec::with_capacity(len as usize);
            if self.fill(prod, len, i, j, &mut children) {
                children.reverse();
                return Some(ParseNode {
                    symbol: Symbol::N(nt),
                    children,
                    span: Span::new(i, j),
                    production: Some(prod as usize),
                    text: None,
                });
            }
        }
        None
    }

    /// Pushes children for `rhs[..dot]` spanning `i..j`, rightmost first.
    fn fill(&self, prod: u16, dot: u16, i: usize, j: usize, out: &mut Vec<ParseNode>) -> bool {
        if dot == 0 {
            return i == j;
        }
        let prev = |k: usize| self.sets[k].contains(Item { prod, dot: dot - 1, origin: i as u32 });
        match self.g.productions[prod as usize].rhs[dot as usize - 1] {
            Symbol::T(t) => {
                if j == 0 || self.tokens[j - 1].kind != t || !prev(j - 1) {
                    return false;
                }
                out.push(ParseNode {
                    symbol: Symbol::T(t),
                    children: Vec::new(),
                    span: Span::new(j - 1, j),
                    production: None,
                    text: Some(self.tokens[j - 1].text.clone()),
                });
                self.fill(prod, dot - 1, i, j - 1, out)
            }
            Symbol::N(b) => {
                for k in (i..=j).rev() {
                    if prev(k) && completes_in(self.sets, b, k, j) {
                        let Some(child) = self.build(b, k, j) else { continue };
                        let mark = out.len();
                        out.push(child);
                        if self.fill(prod, dot - 1, i, k, out) {
                            return true;
                        }
                        out.truncate(mark);
                    }
                }
                false
            }
        }
    }
}
