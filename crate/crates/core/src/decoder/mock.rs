//! A scripted fragment-level generator for tests and offline runs.

use serde::Deserialize;

use crate::ast::BlockKind;
use crate::grammar::{self, render_statement, ParseError};

use super::{CandidateGenerator, FragmentRequest, GeneratorError, Mode};

/// Replays fixed fragments, one queue per block, cycling when a queue runs
/// out. An empty queue answers `}`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct MockGenerator {
    #[serde(default)]
    pub prior: Vec<String>,
    #[serde(default)]
    pub likelihood: Vec<String>,
    #[serde(skip)]
    next: [usize; 2],
    /// Every request seen, in order.
    #[serde(skip)]
    pub requests: Vec<FragmentRequest>,
}

impl MockGenerator {
    pub fn new(prior: Vec<String>, likelihood: Vec<String>) -> Self {
        MockGenerator { prior, likelihood, ..Default::default() }
    }

    /// Queues every statement of each program followed by a block close, so
    /// whole programs are replayed in turn.
    pub fn from_programs(texts: &[&str]) -> Result<Self, ParseError> {
        let mut m = MockGenerator::default();
        for t in texts {
            let p = grammar::parse(t)?;
            m.prior.extend(p.prior_stmts.iter().map(render_statement));
            m.prior.push("}".into());
            m.likelihood.extend(p.likelihood_stmts.iter().map(render_statement));
            m.likelihood.push("}".into());
        }
        Ok(m)
    }

    /// `{"prior": [...], "likelihood": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Number of fragments handed out so far.
    pub fn calls(&self) -> usize {
        self.requests.len()
    }
}

impl CandidateGenerator for MockGenerator {
    fn name(&self) -> &str {
        "mock"
    }

    fn mode(&self) -> Mode {
        Mode::Fragment
    }

    fn temperature(&self) -> f64 {
        0.0
    }

    fn propose_fragment(&mut self, req: &FragmentRequest) -> Result<String, GeneratorError> {
        self.requests.push(req.clone());
        let (queue, slot) = match req.block {
            BlockKind::Likelihood => (&self.likelihood, 1),
            _ => (&self.prior, 0),
        };
        if queue.is_empty() {
            return Ok("}".into());
        }
        let out = queue[self.next[slot] % queue.len()].clone();
        self.next[slot] += 1;
        Ok(out)
    }
}
