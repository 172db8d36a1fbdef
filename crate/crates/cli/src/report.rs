//! The JSON report every command writes.

use std::fmt::Write as _;

use ppsynth::diagnostics::Thresholds;
use ppsynth::json::Real;
use ppsynth::refine::{Synthesis, TokenCount};
use ppsynth::DiagnosticsReport;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "ppsynth.report/1";
const FAMILY: &str = "ppsynth.report/";
const MAJOR: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    pub diagnostics: DiagnosticsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_record_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthSummary>,
}

/// Loop totals and every accepted candidate, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub attempts: usize,
    pub rejections: usize,
    pub likelihood_resamples: usize,
    pub valid: Vec<ValidEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidEntry {
    pub iteration: usize,
    pub score: u8,
    pub elpd: Real,
    pub elpd_se: Real,
    pub program: String,
}

impl SynthSummary {
    pub fn from_synthesis(s: &Synthesis) -> SynthSummary {
        let mut order: Vec<usize> = (0..s.valid.len()).collect();
        if let Some(b) = s.best {
            order.retain(|&i| i != b);
            order.insert(0, b);
        }
        SynthSummary {
            attempts: s.record.attempts.len(),
            rejections: s.rejections,
            likelihood_resamples: s.likelihood_resamples,
            valid: order
                .into_iter()
                .map(|i| {
                    let c = &s.valid[i];
                    ValidEntry {
                        iteration: c.iteration,
                        score: c.report.score,
                        elpd: c.report.elpd,
                        elpd_se: c.report.elpd_se,
                        program: c.text.clone(),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemaError {
    #[error("not a ppsynth report (schema `{0}`)")]
    Foreign(String),
    #[error("report schema major version {0} is not supported (expected {MAJOR})")]
    Major(String),
    #[error("{0}")]
    Json(String),
}

impl ReportFile {
    pub fn new(command: &str, diagnostics: DiagnosticsReport) -> ReportFile {
        ReportFile {
            schema: SCHEMA.into(),
            command: command.into(),
            dataset: None,
            seed: None,
            program: None,
            diagnostics,
            run_record_path: None,
            tokens: None,
            synthesis: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Parses a report, rejecting other schema families and major versions.
    pub fn from_json(text: &str) -> Result<ReportFile, SchemaError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
        let schema = v.get("schema").and_then(|s| s.as_str()).unwrap_or_default().to_string();
        let version = schema.strip_prefix(FAMILY).ok_or_else(|| SchemaError::Foreign(schema.clone()))?;
        let major = version.split('.').next().unwrap_or_default();
        if major.parse::<u32>() != Ok(MAJOR) {
            return Err(SchemaError::Major(major.to_string()));
        }
        serde_json::from_value(v).map_err(|e| SchemaError::Json(e.to_string()))
    }
}

fn num(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        format!("{v}")
    }
}

/// One line per diagnostics report: score, worst R̂ and ESS, divergences,
/// share of well-behaved k̂ and elpd.
pub fn summary_table(rows: &[(String, &DiagnosticsReport)], th: &Thresholds) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>8} {:>9} {:>9} {:>5} {:>6} {:>18}",
        "candidate", "score", "rhat_max", "ess_bulk", "ess_tail", "div", "k_ok", "elpd_loo"
    );
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>8} {:>9} {:>9} {:>5} {:>6} {:>18}",
            label,
            r.score,
            num(r.max_rhat(), 3),
            num(r.min_ess_bulk(), 0),
            num(r.min_ess_tail(), 0),
            r.divergences,
            num(r.k_fraction(th), 2),
            format!("{} ± {}", num(r.elpd.0, 2), num(r.elpd_se.0, 2)),
        );
    }
    out
}
