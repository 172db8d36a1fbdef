//! Chat messages for fragment-level language-model generators.

use std::fmt::Write;

use serde::Serialize;

use crate::ast::BlockKind;
use crate::dist::Registry;
use crate::grammar::EBNF;
use crate::model::Dataset;

use super::FragmentRequest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    pub role: &'static str,
    pub content: String,
}

const SYSTEM: &str = "You help a statistician write Bayesian models in a small declarative modeling language. \
Answer with program text only: no prose, no markdown.";

/// The fixed part of every request: data summary, grammar and distributions.
pub fn preamble(dataset: &Dataset, registry: &Registry) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Data set `{}`: {}", dataset.name, dataset.description);
    let _ = writeln!(s, "Columns:");
    for d in dataset.data_decls() {
        let _ = writeln!(s, "  {}: {}", d.name, d.dtype);
    }
    let _ = writeln!(s, "\nSyntax (EBNF):\n{EBNF}");
    let _ = writeln!(s, "Distributions, with parameters in positional order:");
    for spec in registry.iter() {
        let params: Vec<&str> = spec.params.iter().map(|p| p.name).collect();
        let _ = writeln!(s, "  {}({})", spec.name, params.join(", "));
    }
    s.push_str(
        "\nPriors may not use discrete distributions. A likelihood statement observes one data column \
that has not been observed yet. Every name must be defined before it is used.\n",
    );
    s
}

pub fn messages(preamble: &str, req: &FragmentRequest) -> Vec<Message> {
    let block = match req.block {
        BlockKind::Likelihood => "likelihood",
        _ => "prior",
    };
    let mut user = String::from(preamble);
    let _ = writeln!(user, "\nProgram so far:\n{}", req.template);
    if req.partial.is_empty() {
        let _ = writeln!(
            user,
            "\nWrite the next statement of the {block} block, ending with `;`. \
If the {block} block is complete, reply with `}}` alone."
        );
    } else {
        let _ = writeln!(
            user,
            "\nThe last line is an unfinished statement: `{}`. Reply with only the tokens that come after it, \
up to and including the closing `;`.",
            req.partial
        );
    }
    if let Some(v) = &req.violation {
        let _ = writeln!(user, "A previous answer was rejected ({v}); give a corrected one.");
    }
    vec![Message { role: "system", content: SYSTEM.into() }, Message { role: "user", content: user }]
}

/// The code inside a reply, with markdown fences and surrounding blank lines
/// removed.
pub fn extract_code(reply: &str) -> String {
    let lines: Vec<&str> = reply.lines().filter(|l| !l.trim_start().starts_with("```")).collect();
    lines.join("\n").trim().to_string()
}
