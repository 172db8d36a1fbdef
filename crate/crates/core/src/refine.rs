//! The synthesis loop. Programs are decoded block by block, gated on Φ,
//! fitted and scored; an unreliable program first has its likelihood
//! resampled (up to `alpha` times over the whole run), then its prior.

use std::collections::HashSet;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{BlockKind, ModelProgram};
use crate::decoder::{CandidateGenerator, DecodeConfig, DecodeError, DecodeStats, Decoder, GeneratorError};
use crate::diagnostics::{diagnose, DiagnosticsReport, Thresholds};
use crate::dist::Registry;
use crate::grammar::render;
use crate::inference::{nuts_sample, SamplerConfig, SamplerError};
use crate::json::Real;
use crate::model::{bind, Dataset};
use crate::semantics::check_program;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Rejection budget.
    pub r_max: usize,
    /// Likelihood resamples allowed before falling back to prior resampling.
    pub alpha: usize,
    /// Valid programs to collect.
    pub beta: usize,
    /// Minimum reliability score for acceptance.
    pub k: u8,
    pub thresholds: Thresholds,
    pub sampler: SamplerConfig,
    pub decode: DecodeConfig,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            r_max: 100,
            alpha: 2,
            beta: 4,
            k: 5,
            thresholds: Thresholds::default(),
            sampler: SamplerConfig::default(),
            decode: DecodeConfig::default(),
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        let bad = |m: &str| Err(RefineError::Config(m.to_string()));
        if self.r_max < 1 {
            return bad("r_max must be at least 1");
        }
        if self.alpha > self.r_max {
            return bad("alpha must not exceed r_max");
        }
        if self.beta < 1 {
            return bad("beta must be at least 1");
        }
        if !(1..=7).contains(&self.k) {
            return bad("k must be between 1 and 7");
        }
        self.sampler.validate().map_err(|e| RefineError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureClass {
    PhiViolation,
    DecodeRetryCap,
    EmptyLikelihood,
    BindFailure,
    InitFailure,
    SamplerError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Accept,
    LikelihoodResample,
    PriorResample,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub generated: usize,
    pub retried: usize,
}

impl From<DecodeStats> for TokenCount {
    fn from(s: DecodeStats) -> Self {
        TokenCount { generated: s.tokens_generated, retried: s.tokens_discarded }
    }
}

/// One loop iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub iteration: usize,
    /// Rejections before this iteration.
    pub r: usize,
    /// Likelihood resamples before this iteration.
    pub ell: usize,
    pub program: Option<String>,
    pub phi: Option<bool>,
    pub failure: Option<FailureClass>,
    pub message: Option<String>,
    pub score: Option<u8>,
    pub elpd: Option<Real>,
    pub sampler_seed: Option<u64>,
    /// Program text identical to an earlier iteration's.
    pub duplicate: bool,
    pub action: Action,
    pub tokens: TokenCount,
    pub diagnostics: Option<DiagnosticsReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub attempts: Vec<AttemptRecord>,
}

impl RunRecord {
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for a in &self.attempts {
            serde_json::to_writer(&mut w, a)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<RunRecord, serde_json::Error> {
        let attempts =
            text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(RunRecord { attempts })
    }

    /// Actions in order, for trace comparisons.
    pub fn actions(&self) -> Vec<Action> {
        self.attempts.iter().map(|a| a.action).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub program: ModelProgram,
    pub text: String,
    pub report: DiagnosticsReport,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub valid: Vec<Candidate>,
    pub best: Option<usize>,
    pub record: RunRecord,
    pub tokens: TokenCount,
    pub rejections: usize,
    pub likelihood_resamples: usize,
}

impl Synthesis {
    pub fn best(&self) -> Option<&Candidate> {
        self.best.map(|i| &self.valid[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalFailure {
    pub class: FailureClass,
    pub message: String,
}

/// Fits a candidate and scores it.
pub trait CandidateEvaluator {
    fn evaluate(&mut self, program: &ModelProgram, seed: u64) -> Result<DiagnosticsReport, EvalFailure>;
}

/// Binds to the dataset, runs NUTS and computes the diagnostics.
pub struct NutsEvaluator<'a> {
    pub dataset: &'a Dataset,
    pub registry: &'a Registry,
    pub sampler: SamplerConfig,
    pub thresholds: Thresholds,
}

impl CandidateEvaluator for NutsEvaluator<'_> {
    fn evaluate(&mut self, program: &ModelProgram, seed: u64) -> Result<DiagnosticsReport, EvalFailure> {
        let model = bind(program, self.dataset, self.registry)
            .map_err(|e| EvalFailure { class: FailureClass::BindFailure, message: e.to_string() })?;
        let cfg = SamplerConfig { seed, ..self.sampler.clone() };
        let draws = nuts_sample(&model, &cfg).map_err(|e| EvalFailure {
            class: match e {
                SamplerError::InitFailed { .. } => FailureClass::InitFailure,
                _ => FailureClass::SamplerError,
            },
            message: e.to_string(),
        })?;
        Ok(diagnose(&draws, &self.thresholds))
    }
}

/// Index of the highest-elpd entry; ties go to the higher score, then to
/// the earlier entry. Non-finite elpd ranks below every finite one.
pub fn best_index(keys: &[(f64, u8)]) -> Option<usize> {
    let norm = |e: f64| if e.is_nan() { f64::NEG_INFINITY } else { e };
    let mut best: Option<usize> = None;
    for (i, &(e, s)) in keys.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let (be, bs) = keys[b];
                norm(e) > norm(be) || (norm(e) == norm(be) && s > bs)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

pub fn select_best(valid: &[Candidate]) -> Option<&Candidate> {
    let keys: Vec<(f64, u8)> = valid.iter().map(|c| (c.report.elpd.0, c.report.score)).collect();
    best_index(&keys).map(|i| &valid[i])
}

/// Keeps the data and prior blocks, decodes a new likelihood.
pub fn resample_likelihood(
    prog: &ModelProgram,
    generator: &mut dyn CandidateGenerator,
    decoder: &mut Decoder<'_>,
    seed: u64,
) -> Result<ModelProgram, DecodeError> {
    let mut out = ModelProgram { likelihood_stmts: Vec::new(), ..prog.clone() };
    out.likelihood_stmts = decoder.decode_block(&out, BlockKind::Likelihood, generator, seed)?;
    Ok(out)
}

/// Keeps the data block, decodes a new prior and then a likelihood against
/// it.
pub fn resample_prior(
    prog: &ModelProgram,
    generator: &mut dyn CandidateGenerator,
    decoder: &mut Decoder<'_>,
    seed: u64,
) -> Result<ModelProgram, DecodeError> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ModelProgram { data_decls: prog.data_decls.clone(), ..Default::default() };
    out.prior_stmts = decoder.decode_block(&out, BlockKind::Prior, generator, seeds.next_u64())?;
    out.likelihood_stmts = decoder.decode_block(&out, BlockKind::Likelihood, generator, seeds.next_u64())?;
    Ok(out)
}

enum Next {
    Prior,
    Likelihood(ModelProgram),
}

pub fn synthesize(
    dataset: &Dataset,
    generator: &mut dyn CandidateGenerator,
    evaluator: &mut dyn CandidateEvaluator,
    registry: &Registry,
    config: &RefineConfig,
) -> Result<Synthesis, RefineError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut decoder = Decoder::new(registry, config.decode.clone());
    let data_only = ModelProgram { data_decls: dataset.data_decls(), ..Default::default() };
    let (mut r, mut ell) = (0, 0);
    let mut next = Next::Prior;
    let mut valid: Vec<Candidate> = Vec::new();
    let mut record = RunRecord::default();
    let mut seen: HashSet<String> = HashSet::new();

    while r < config.r_max && valid.len() < config.beta {
        let before = decoder.stats;
        let mut rec = AttemptRecord {
            iteration: record.attempts.len() + 1,
            r,
            ell,
            program: None,
            phi: None,
            failure: None,
            message: None,
            score: None,
            elpd: None,
            sampler_seed: None,
            duplicate: false,
            action: Action::PriorResample,
            tokens: TokenCount::default(),
            diagnostics: None,
        };
        let seed = rng.next_u64();
        let decoded = match &next {
            Next::Prior => resample_prior(&data_only, generator, &mut decoder, seed),
            Next::Likelihood(p) => resample_likelihood(p, generator, &mut decoder, seed),
        };
        let mut accepted = false;
        let mut kept_prior: Option<ModelProgram> = None;
        match decoded {
            Err(DecodeError::Generator(e)) => return Err(e.into()),
            Err(e) => {
                rec.failure = Some(match e {
                    DecodeError::EmptyLikelihood => FailureClass::EmptyLikelihood,
                    _ => FailureClass::DecodeRetryCap,
                });
                rec.message = Some(e.to_string());
                if let Next::Likelihood(p) = &next {
                    kept_prior = Some(p.clone());
                }
            }
            Ok(prog) => {
                let text = render(&prog);
                rec.duplicate = !seen.insert(text.clone());
                rec.program = Some(text.clone());
                match check_program(&prog, registry) {
                    Err(v) => {
                        rec.phi = Some(false);
                        rec.failure = Some(FailureClass::PhiViolation);
                        rec.message = Some(v.to_string());
                    }
                    Ok(_) => {
                        rec.phi = Some(true);
                        let sampler_seed = rng.next_u64();
                        rec.sampler_seed = Some(sampler_seed);
                        match evaluator.evaluate(&prog, sampler_seed) {
                            Err(f) => {
                                rec.failure = Some(f.class);
                                rec.message = Some(f.message);
                                kept_prior = Some(prog);
                            }
                            Ok(report) => {
                                rec.score = Some(report.score);
                                rec.elpd = Some(report.elpd);
                                rec.diagnostics = Some(report.clone());
                                if report.score >= config.k {
                                    accepted = true;
                                    let iteration = rec.iteration;
                                    valid.push(Candidate { program: prog, text, report, iteration });
                                } else {
                                    kept_prior = Some(prog);
                                }
                            }
                        }
                    }
                }
            }
        }
        if accepted {
            rec.action = Action::Accept;
            next = Next::Prior;
        } else {
            match kept_prior {
                Some(p) if ell < config.alpha => {
                    rec.action = Action::LikelihoodResample;
                    ell += 1;
                    next = Next::Likelihood(p);
                }
                _ => {
                    rec.action = Action::PriorResample;
                    next = Next::Prior;
                }
            }
            r += 1;
        }
        let mut delta = decoder.stats;
        delta.tokens_generated -= before.tokens_generated;
        delta.tokens_discarded -= before.tokens_discarded;
        rec.tokens = delta.into();
        record.attempts.push(rec);
    }
    let keys: Vec<(f64, u8)> = valid.iter().map(|c| (c.report.elpd.0, c.report.score)).collect();
    Ok(Synthesis {
        best: best_index(&keys),
        valid,
        record,
        tokens: decoder.stats.into(),
        rejections: r,
        likelihood_resamples: ell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::decoder::MockGenerator;
    use crate::grammar;
    use indexmap::IndexMap;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn report(score: u8, elpd: f64) -> DiagnosticsReport {
        DiagnosticsReport {
            schema: crate::diagnostics::REPORT_SCHEMA.into(),
            rhat: IndexMap::new(),
            ess_bulk: IndexMap::new(),
            ess_tail: IndexMap::new(),
            bfmi: vec![],
            divergences: 0,
            elpd: Real(elpd),
            elpd_se: Real(1.0),
            pareto_k: vec![],
            indicators: Default::default(),
            score,
            valid: score >= 5,
            flags: vec![],
        }
    }

    /// Scores programs by their likelihood's first distribution name.
    struct ByDist(HashMap<&'static str, (u8, f64)>, Vec<String>);

    impl CandidateEvaluator for ByDist {
        fn evaluate(&mut self, p: &ModelProgram, _seed: u64) -> Result<DiagnosticsReport, EvalFailure> {
            let name = p.likelihood_stmts[0].dist().unwrap().name.clone();
            self.1.push(render(p));
            let (s, e) = self.0[name.as_str()];
            Ok(report(s, e))
        }
    }

    const GOOD: &str = "model { data { y: vector[8]; sigma: vector[8]; } prior { mu ~ Normal(0, 5); } \
                        likelihood { y ~ Normal(mu, sigma); } }";

    fn config() -> RefineConfig {
        RefineConfig { seed: 3, ..Default::default() }
    }

    #[test]
    fn immediate_acceptances_stop_at_beta() {
        let ds = datasets::builtin("eight_schools").unwrap();
        let mut g = MockGenerator::from_programs(&[GOOD]).unwrap();
        let mut ev = ByDist(HashMap::from([("Normal", (7, -30.9))]), vec![]);
        let out = synthesize(&ds, &mut g, &mut ev, &Registry::default(), &config()).unwrap();
        assert_eq!(out.record.actions(), vec![Action::Accept; 4]);
        assert_eq!(out.valid.len(), 4);
        assert_eq!(out.best, Some(0));
        assert_eq!(out.best().unwrap().program, grammar::parse(GOOD).unwrap());
        assert!(out.record.attempts[1].duplicate && !out.record.attempts[0].duplicate);
        assert_eq!(out.rejections, 0);
    }

    #[test]
    fn likelihood_then_prior_resampling() {
        let ds = datasets::builtin("eight_schools").unwrap();
        let mut g = MockGenerator::new(
            vec!["mu ~ Normal(0, 5);".into(), "}".into(), "tau ~ HalfNormal(5);".into(), "}".into()],
            vec![
                "y ~ Cauchy(mu, sigma);".into(),
                "}".into(),
                "y ~ StudentT(3, mu, sigma);".into(),
                "}".into(),
                "y ~ Cauchy(0, sigma);".into(),
                "}".into(),
                "y ~ Normal(0, tau);".into(),
                "}".into(),
            ],
        );
        let scores = HashMap::from([("Cauchy", (3, -40.0)), ("StudentT", (4, -35.0)), ("Normal", (6, -31.0))]);
        let mut ev = ByDist(scores, vec![]);
        let cfg = RefineConfig { beta: 1, ..config() };
        let out = synthesize(&ds, &mut g, &mut ev, &Registry::default(), &cfg).unwrap();
        use Action::*;
        assert_eq!(out.record.actions(), vec![LikelihoodResample, LikelihoodResample, PriorResample, Accept]);
        // The prior is kept across likelihood resamples, replaced afterwards.
        assert!(ev.1[..3].iter().all(|t| t.contains("mu ~ Normal(0, 5);")));
        assert!(ev.1[3].contains("tau ~ HalfNormal(5);") && !ev.1[3].contains("mu ~"));
        assert_eq!(out.rejections, 3);
        assert_eq!(out.likelihood_resamples, 2);
        assert_eq!(out.record.attempts.iter().map(|a| a.r).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(out.record.attempts.iter().map(|a| a.ell).collect::<Vec<_>>(), vec![0, 1, 2, 2]);
    }

    #[test]
    fn hostile_generator_exhausts_the_budget() {
        let ds = datasets::builtin("eight_schools").unwrap();
        let mut g = MockGenerator::new(vec!["mu ~ ExtNormal(0);".into()], vec![]);
        let mut ev = ByDist(HashMap::new(), vec![]);
        let out = synthesize(&ds, &mut g, &mut ev, &Registry::default(), &config()).unwrap();
        assert_eq!(out.record.attempts.len(), 100);
        assert_eq!(out.rejections, 100);
        assert!(out.best.is_none() && out.valid.is_empty());
        assert!(out.record.attempts.iter().all(|a| a.failure == Some(FailureClass::DecodeRetryCap)));
        assert!(ev.1.is_empty());
        assert_eq!(g.calls(), 1600);
    }

    #[test]
    fn run_record_round_trips_as_jsonl() {
        let ds = datasets::builtin("eight_schools").unwrap();
        let mut g = MockGenerator::from_programs(&[GOOD]).unwrap();
        let mut ev = ByDist(HashMap::from([("Normal", (7, -30.9))]), vec![]);
        let out = synthesize(&ds, &mut g, &mut ev, &Registry::default(), &config()).unwrap();
        let mut buf = Vec::new();
        out.record.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(RunRecord::read_jsonl(&text).unwrap(), out.record);
    }

    #[test]
    fn config_bounds() {
        assert!(RefineConfig::default().validate().is_ok());
        assert!(RefineConfig { r_max: 0, ..Default::default() }.validate().is_err());
        assert!(RefineConfig { k: 8, ..Default::default() }.validate().is_err());
        assert!(RefineConfig { beta: 0, ..Default::default() }.validate().is_err());
        assert!(RefineConfig { alpha: 200, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn selection_rules() {
        assert_eq!(best_index(&[(-31.0, 7), (-30.7, 5)]), Some(1));
        assert_eq!(best_index(&[(-30.7, 6), (-30.7, 7)]), Some(1));
        assert_eq!(best_index(&[(-30.7, 7), (-30.7, 7)]), Some(0));
        assert_eq!(best_index(&[(f64::NAN, 7), (-100.0, 5)]), Some(1));
        assert_eq!(best_index(&[]), None);
    }

    proptest! {
        #[test]
        fn positive_scaling_keeps_the_choice(
            elpd in proptest::collection::vec(-100.0f64..-1.0, 1..8),
            c in 0.01f64..100.0,
        ) {
            let keys: Vec<(f64, u8)> = elpd.iter().map(|&e| (e, 6)).collect();
            let scaled: Vec<(f64, u8)> = elpd.iter().map(|&e| (e * c, 6)).collect();
            let i = best_index(&keys).unwrap();
            prop_assert!(keys.iter().all(|k| k.0 <= keys[i].0));
            prop_assert_eq!(Some(i), best_index(&scaled));
        }
    }

    #[test]
    fn real_fit_accepts_a_simple_model() {
        let ds = datasets::builtin("eight_schools").unwrap();
        let reg = Registry::default();
        let mut g = MockGenerator::from_programs(&[GOOD]).unwrap();
        let cfg = RefineConfig { beta: 1, ..config() };
        let mut ev = NutsEvaluator {
            dataset: &ds,
            registry: &reg,
            sampler: cfg.sampler.clone(),
            thresholds: cfg.thresholds.clone(),
        };
        let out = synthesize(&ds, &mut g, &mut ev, &reg, &cfg).unwrap();
        let best = out.best().unwrap();
        assert!(best.report.score >= 5);
        assert!((-33.0..=-29.0).contains(&best.report.elpd.0), "{}", best.report.elpd.0);
    }
}
