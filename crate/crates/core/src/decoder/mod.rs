//! Constrained decoding of prior and likelihood blocks.
//!
//! Token-level generators are sampled through a grammar mask, one token at a
//! time. Fragment-level generators propose text that is validated as a whole.
//! Either way a statement that fails validation is cut back to the start of
//! the violating span and the remainder is resampled.

pub mod builtin;
pub mod http;
pub mod mock;
pub mod prompt;

pub use builtin::BuiltinGenerator;
pub use http::{HttpConfig, HttpGenerator};
pub use mock::MockGenerator;

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{BlockKind, DataDecl, ModelProgram, Statement};
use crate::dist::Registry;
use crate::grammar::{self, render_statement, tokenize, PrefixState, Terminal, Token};
use crate::model::Dataset;
use crate::semantics::{validate, validate_statement, SymbolTable};

/// Fresh variable names offered to token-level generators.
pub const NAME_POOL: [&str; 14] =
    ["mu", "sigma", "tau", "alpha", "beta", "gamma", "theta", "eta", "phi", "kappa", "lambda", "omega", "nu", "z"];

/// Numeric literals in the vocabulary, besides data lengths.
pub const LITERALS: [&str; 9] = ["0", "1", "2", "5", "10", "100", "0.5", "0.1", "2.5"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub text: String,
    pub kind: Terminal,
}

/// The token inventory a token-level generator chooses from.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    entries: Vec<VocabEntry>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(data: &[DataDecl], registry: &Registry) -> Vocab {
        let mut v = Vocab::default();
        for t in Terminal::ALL {
            if let Some(s) = t.spelling() {
                v.add(s);
            }
        }
        for f in ["exp", "log", "sqrt", "logit", "invlogit"] {
            v.add(f);
        }
        for d in data {
            v.add(&d.name);
            let n = d.dtype.shape().len();
            if n > 1 {
                v.add(&n.to_string());
            }
        }
        for name in NAME_POOL {
            if !data.iter().any(|d| d.name == name) {
                v.add(name);
            }
        }
        for spec in registry.iter() {
            v.add(spec.name);
            for p in &spec.params {
                v.add(p.name);
            }
        }
        for lit in LITERALS {
            v.add(lit);
        }
        v
    }

    fn add(&mut self, text: &str) {
        if self.index.contains_key(text) {
            return;
        }
        let toks = tokenize(text).expect("vocabulary entries lex");
        assert_eq!(toks.len(), 1, "vocabulary entry `{text}` is not a single token");
        self.index.insert(text.to_string(), self.entries.len());
        self.entries.push(VocabEntry { text: text.to_string(), kind: toks[0].kind });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> &VocabEntry {
        &self.entries[id]
    }

    pub fn id(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &VocabEntry> {
        self.entries.iter()
    }

    pub fn token(&self, id: usize) -> Token {
        let e = &self.entries[id];
        Token::synthetic(e.kind, e.text.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no token can extend the current prefix")]
pub struct DeadEnd;

/// `mask[v]` is true iff vocabulary entry `v` keeps the prefix viable. A
/// finished program yields an all-false mask; an unfinished one with no
/// viable entry is a dead end.
pub fn build_mask(state: &PrefixState, vocab: &Vocab) -> Result<Vec<bool>, DeadEnd> {
    let bits = state.expected_bits();
    let mask: Vec<bool> = vocab.iter().map(|e| bits & e.kind.bit() != 0).collect();
    if !mask.iter().any(|&b| b) && !state.is_complete() {
        return Err(DeadEnd);
    }
    Ok(mask)
}

/// Renormalized `mask ⊙ softmax(scores / temperature)`. Masked entries get
/// exactly zero. `None` when no unmasked entry has positive mass.
pub fn masked_distribution(scores: &[f64], mask: &[bool], temperature: f64) -> Option<Vec<f64>> {
    let live = |i: usize| mask[i] && scores[i] > f64::NEG_INFINITY && !scores[i].is_nan();
    let max = (0..scores.len()).filter(|&i| live(i)).map(|i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut p: Vec<f64> = if temperature <= 0.0 {
        (0..scores.len()).map(|i| if live(i) && scores[i] == max { 1.0 } else { 0.0 }).collect()
    } else {
        (0..scores.len()).map(|i| if live(i) { ((scores[i] - max) / temperature).exp() } else { 0.0 }).collect()
    };
    let total: f64 = p.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    p.iter_mut().for_each(|x| *x /= total);
    Some(p)
}

pub fn sample_masked(scores: &[f64], mask: &[bool], temperature: f64, rng: &mut impl Rng) -> Option<usize> {
    let p = masked_distribution(scores, mask, temperature)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Token,
    Fragment,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("generator does not support {0}-level decoding")]
    Unsupported(&'static str),
    #[error("request failed: {0}")]
    Http(String),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("scores have length {got}, vocabulary has {want}")]
    ScoreLength { got: usize, want: usize },
}

/// What a token-level generator sees before each token.
pub struct TokenContext<'a> {
    pub block: BlockKind,
    /// Tokens of the statement in progress.
    pub statement: &'a [Token],
    pub statements_in_block: usize,
    pub table: &'a SymbolTable,
    pub registry: &'a Registry,
    pub vocab: &'a Vocab,
    pub mask: &'a [bool],
}

/// What a fragment-level generator is asked to continue.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentRequest {
    pub block: BlockKind,
    /// The program text so far, ending with the kept part of the statement.
    pub template: String,
    /// Kept tokens of the statement in progress, space separated.
    pub partial: String,
    /// Why the previous proposal for this statement was rejected.
    pub violation: Option<String>,
    pub statements_in_block: usize,
}

pub trait CandidateGenerator {
    fn name(&self) -> &str;
    fn mode(&self) -> Mode;
    fn temperature(&self) -> f64;

    /// Unnormalized log-scores over the vocabulary; `-inf` rules a token out.
    fn next_token_scores(&mut self, _ctx: &TokenContext<'_>) -> Result<Vec<f64>, GeneratorError> {
        Err(GeneratorError::Unsupported("token"))
    }

    /// Text continuing `req.partial`, normally up to and including `;`, or
    /// `}` to end the block.
    fn propose_fragment(&mut self, _req: &FragmentRequest) -> Result<String, GeneratorError> {
        Err(GeneratorError::Unsupported("fragment"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub max_prior_statements: usize,
    pub max_likelihood_statements: usize,
    /// Failed proposals allowed per statement.
    pub retry_cap: usize,
    pub max_statement_tokens: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { max_prior_statements: 8, max_likelihood_statements: 3, retry_cap: 16, max_statement_tokens: 48 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("no valid {block} statement after {attempts} attempts; last violation: {last}")]
    RetryCap { block: BlockKind, attempts: usize, last: String },
    #[error("the generator closed an empty likelihood block")]
    EmptyLikelihood,
    #[error("invalid decoding context: {0}")]
    Context(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

/// Token accounting across one or more decodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStats {
    pub tokens_generated: usize,
    /// Generated tokens later cut away by backtracking.
    pub tokens_discarded: usize,
    pub retries: usize,
    pub statements: usize,
}

impl DecodeStats {
    pub fn add(&mut self, o: &DecodeStats) {
        self.tokens_generated += o.tokens_generated;
        self.tokens_discarded += o.tokens_discarded;
        self.retries += o.retries;
        self.statements += o.statements;
    }
}

enum Extend {
    Complete,
    Closed,
    Stuck(String),
}

/// Decoding state for one block: the program prefix, the symbol table, and
/// a stack of snapshots taken at statement starts.
pub struct DecodeSession<'r> {
    block: BlockKind,
    state: PrefixState,
    table: SymbolTable,
    snapshots: Vec<(PrefixState, SymbolTable)>,
    registry: &'r Registry,
    vocab: Vocab,
    rng: ChaCha8Rng,
    config: DecodeConfig,
    statements: Vec<Statement>,
    closed: bool,
    prefix_text: String,
    pub stats: DecodeStats,
}

fn decl_line(d: &DataDecl) -> String {
    format!("{}: {};", d.name, d.dtype)
}

impl<'r> DecodeSession<'r> {
    /// Positions a session at the start of `block` after `context`, whose
    /// earlier blocks must already be valid.
    pub fn new(
        context: &ModelProgram,
        block: BlockKind,
        registry: &'r Registry,
        config: DecodeConfig,
        seed: u64,
    ) -> Result<Self, DecodeError> {
        let mut table = SymbolTable::from_data(&context.data_decls).map_err(|v| DecodeError::Context(v.message))?;
        let mut text = String::from("model {\n  data {\n");
        for d in &context.data_decls {
            text.push_str(&format!("    {}\n", decl_line(d)));
        }
        text.push_str("  }\n  prior {\n");
        match block {
            BlockKind::Prior => {}
            BlockKind::Likelihood => {
                for s in &context.prior_stmts {
                    let r = validate_statement(s, BlockKind::Prior, &mut table, registry);
                    if !r.is_valid() {
                        return Err(DecodeError::Context(r.message));
                    }
                    text.push_str(&format!("    {}\n", render_statement(s)));
                }
                text.push_str("  }\n  likelihood {\n");
            }
            BlockKind::Data => return Err(DecodeError::Context("the data block is not decoded".into())),
        }
        let mut state = PrefixState::default();
        let toks = tokenize(&text).map_err(|e| DecodeError::Context(e.to_string()))?;
        grammar::feed(&mut state, toks).map_err(|e| DecodeError::Context(e.to_string()))?;
        Ok(DecodeSession {
            block,
            state,
            table,
            snapshots: Vec::new(),
            registry,
            vocab: Vocab::new(&context.data_decls, registry),
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
            statements: Vec::new(),
            closed: false,
            prefix_text: text,
            stats: DecodeStats::default(),
        })
    }

    pub fn block(&self) -> BlockKind {
        self.block
    }

    pub fn tokens(&self) -> &[Token] {
        self.state.tokens()
    }

    pub fn table(&self) -> &SymbolTable {
        &self.table
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn snapshot_depth(&self) -> usize {
        self.snapshots.len()
    }

    pub fn push_snapshot(&mut self) {
        self.snapshots.push((self.state.clone(), self.table.clone()));
    }

    /// Restores the prefix and table saved by the matching push.
    pub fn pop_snapshot(&mut self) -> bool {
        match self.snapshots.pop() {
            Some((state, table)) => {
                self.state = state;
                self.table = table;
                true
            }
            None => false,
        }
    }

    fn commit(&mut self) {
        self.snapshots.pop();
    }

    fn cap(&self) -> usize {
        match self.block {
            BlockKind::Likelihood => self.config.max_likelihood_statements,
            _ => self.config.max_prior_statements,
        }
    }

    /// Appends the block-closing brace.
    pub fn close(&mut self) {
        if !self.closed {
            let ok = self.state.push(Token::fixed(Terminal::RBrace));
            debug_assert!(ok, "block close rejected");
            self.closed = true;
        }
    }

    /// Produces the next statement, or `None` once the generator closes the
    /// block. On success the statement satisfies Φ against the table.
    pub fn sample_statement(
        &mut self,
        generator: &mut dyn CandidateGenerator,
    ) -> Result<Option<Statement>, DecodeError> {
        if self.closed {
            return Ok(None);
        }
        let out = match generator.mode() {
            Mode::Token => self.sample_tokens(generator),
            Mode::Fragment => self.sample_fragment(generator),
        }?;
        if let Some(s) = &out {
            self.statements.push(s.clone());
            self.stats.statements += 1;
        }
        Ok(out)
    }

    fn retry_cap(&mut self, last: String) -> DecodeError {
        self.pop_snapshot();
        DecodeError::RetryCap { block: self.block, attempts: self.config.retry_cap, last }
    }

    fn sample_tokens(&mut self, generator: &mut dyn CandidateGenerator) -> Result<Option<Statement>, DecodeError> {
        let start = self.state.len();
        self.push_snapshot();
        let mut failures = 0;
        let mut last = String::new();
        loop {
            if failures >= self.config.retry_cap {
                return Err(self.retry_cap(last));
            }
            let cut = match self.extend(generator, start)? {
                Extend::Closed => {
                    self.commit();
                    self.closed = true;
                    return Ok(None);
                }
                Extend::Stuck(msg) => {
                    last = msg;
                    0
                }
                Extend::Complete => {
                    let frag = self.state.tokens()[start..].to_vec();
                    let mut table = self.table.clone();
                    let ctx = &self.snapshots.last().expect("snapshot pushed").0;
                    let report = validate(&frag, ctx, &mut table, self.registry);
                    if report.is_valid() {
                        self.table = table;
                        self.commit();
                        return Ok(report.statement);
                    }
                    last = report.message.clone();
                    // A point span at the end would resample nothing.
                    report.span().map_or(0, |s| s.start).min(frag.len() - 1)
                }
            };
            self.stats.tokens_discarded += self.state.len() - start - cut;
            self.state.truncate(start + cut);
            failures += 1;
            self.stats.retries += 1;
        }
    }

    /// Samples tokens until the statement ends or the block closes.
    fn extend(&mut self, generator: &mut dyn CandidateGenerator, start: usize) -> Result<Extend, DecodeError> {
        loop {
            if self.state.len() - start >= self.config.max_statement_tokens {
                return Ok(Extend::Stuck(format!("statement longer than {} tokens", self.config.max_statement_tokens)));
            }
            let Ok(mask) = build_mask(&self.state, &self.vocab) else {
                return Ok(Extend::Stuck(DeadEnd.to_string()));
            };
            let ctx = TokenContext {
                block: self.block,
                statement: &self.state.tokens()[start..],
                statements_in_block: self.statements.len(),
                table: &self.table,
                registry: self.registry,
                vocab: &self.vocab,
                mask: &mask,
            };
            let scores = generator.next_token_scores(&ctx)?;
            if scores.len() != self.vocab.len() {
                return Err(GeneratorError::ScoreLength { got: scores.len(), want: self.vocab.len() }.into());
            }
            let Some(v) = sample_masked(&scores, &mask, generator.temperature(), &mut self.rng) else {
                return Ok(Extend::Stuck("no viable token has positive probability".into()));
            };
            let tok = self.vocab.token(v);
            let kind = tok.kind;
            let pushed = self.state.push(tok);
            debug_assert!(pushed, "masked token rejected");
            self.stats.tokens_generated += 1;
            match kind {
                Terminal::RBrace if self.state.len() - start == 1 => return Ok(Extend::Closed),
                Terminal::Semi => return Ok(Extend::Complete),
                _ => {}
            }
        }
    }

    fn template(&self, kept: &[Token]) -> String {
        let mut t = self.prefix_text.clone();
        for s in &self.statements {
            t.push_str(&format!("    {}\n", render_statement(s)));
        }
        t.push_str("    ");
        t.push_str(&join_tokens(kept));
        t
    }

    fn sample_fragment(&mut self, generator: &mut dyn CandidateGenerator) -> Result<Option<Statement>, DecodeError> {
        self.push_snapshot();
        let mut kept: Vec<Token> = Vec::new();
        let mut failures = 0;
        let mut last: Option<String> = None;
        loop {
            if failures >= self.config.retry_cap {
                return Err(self.retry_cap(last.unwrap_or_default()));
            }
            let req = FragmentRequest {
                block: self.block,
                template: self.template(&kept),
                partial: join_tokens(&kept),
                violation: last.clone(),
                statements_in_block: self.statements.len(),
            };
            let text = generator.propose_fragment(&req)?;
            let mut cont = match tokenize(&text) {
                Ok(t) => t,
                Err(e) => {
                    self.stats.tokens_generated += text.split_whitespace().count().max(1);
                    self.stats.tokens_discarded += text.split_whitespace().count().max(1);
                    failures += 1;
                    self.stats.retries += 1;
                    last = Some(e.to_string());
                    continue;
                }
            };
            // Some generators echo the kept prefix before continuing it.
            if !kept.is_empty()
                && cont.len() > kept.len()
                && cont.iter().zip(&kept).all(|(a, b)| a.kind == b.kind && a.text == b.text)
            {
                cont.drain(..kept.len());
            }
            if let Some(i) = cont.iter().position(|t| t.kind == Terminal::Semi) {
                cont.truncate(i + 1);
            }
            self.stats.tokens_generated += cont.len();
            if kept.is_empty() && cont.first().is_some_and(|t| t.kind == Terminal::RBrace) {
                if self.block == BlockKind::Likelihood && self.statements.is_empty() {
                    self.pop_snapshot();
                    return Err(DecodeError::EmptyLikelihood);
                }
                self.commit();
                self.close();
                return Ok(None);
            }
            if cont.last().is_none_or(|t| t.kind != Terminal::Semi) {
                cont.push(Token::fixed(Terminal::Semi));
            }
            let mut frag = kept.clone();
            frag.extend(cont);
            let mut table = self.table.clone();
            let report = validate(&frag, &self.state, &mut table, self.registry);
            if report.is_valid() {
                grammar::feed(&mut self.state, frag).expect("validated fragment parses");
                self.table = table;
                self.commit();
                return Ok(report.statement);
            }
            let cut = report.span().map_or(0, |s| s.start).min(frag.len() - 1);
            self.stats.tokens_discarded += frag.len() - cut;
            frag.truncate(cut);
            kept = frag;
            failures += 1;
            self.stats.retries += 1;
            last = Some(report.message);
        }
    }

    /// Decodes statements until the block closes or reaches its length cap.
    pub fn run(&mut self, generator: &mut dyn CandidateGenerator) -> Result<Vec<Statement>, DecodeError> {
        while !self.closed {
            if self.statements.len() >= self.cap() {
                self.close();
                break;
            }
            self.sample_statement(generator)?;
        }
        Ok(self.statements.clone())
    }
}

fn join_tokens(toks: &[Token]) -> String {
    toks.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
}

/// Block decoding and program assembly with running token accounting.
pub struct Decoder<'r> {
    pub registry: &'r Registry,
    pub config: DecodeConfig,
    pub stats: DecodeStats,
}

impl<'r> Decoder<'r> {
    pub fn new(registry: &'r Registry, config: DecodeConfig) -> Self {
        Decoder { registry, config, stats: DecodeStats::default() }
    }

    /// A new `which` block appended to `context`. Statements count towards
    /// `stats` even when decoding fails.
    pub fn decode_block(
        &mut self,
        context: &ModelProgram,
        which: BlockKind,
        generator: &mut dyn CandidateGenerator,
        seed: u64,
    ) -> Result<Vec<Statement>, DecodeError> {
        let mut session = DecodeSession::new(context, which, self.registry, self.config.clone(), seed)?;
        let out = session.run(generator);
        self.stats.add(&session.stats);
        out
    }

    pub fn generate_program(
        &mut self,
        dataset: &Dataset,
        generator: &mut dyn CandidateGenerator,
        seed: u64,
    ) -> Result<ModelProgram, DecodeError> {
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let mut prog = ModelProgram { data_decls: dataset.data_decls(), ..Default::default() };
        prog.prior_stmts = self.decode_block(&prog, BlockKind::Prior, generator, seeds.next_u64())?;
        prog.likelihood_stmts = self.decode_block(&prog, BlockKind::Likelihood, generator, seeds.next_u64())?;
        Ok(prog)
    }
}

pub fn decode_block(
    context: &ModelProgram,
    which: BlockKind,
    generator: &mut dyn CandidateGenerator,
    registry: &Registry,
    seed: u64,
) -> Result<Vec<Statement>, DecodeError> {
    Decoder::new(registry, DecodeConfig::default()).decode_block(context, which, generator, seed)
}

pub fn generate_program(
    dataset: &Dataset,
    generator: &mut dyn CandidateGenerator,
    registry: &Registry,
    seed: u64,
) -> Result<ModelProgram, DecodeError> {
    Decoder::new(registry, DecodeConfig::default()).generate_program(dataset, generator, seed)
}

#[cfg(test)]
mod tests;
