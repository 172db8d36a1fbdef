use super::*;
use crate::datasets;
use crate::grammar::{accepts_prefix, feed, render};
use crate::model::bind;
use crate::semantics::check_program;
use proptest::prelude::*;

fn eight() -> Dataset {
    datasets::builtin("eight_schools").unwrap()
}

fn data_only(ds: &Dataset) -> ModelProgram {
    ModelProgram { data_decls: ds.data_decls(), ..Default::default() }
}

fn state_after(text: &str) -> PrefixState {
    let mut s = PrefixState::default();
    feed(&mut s, tokenize(text).unwrap()).unwrap();
    s
}

fn allowed(mask: &[bool], vocab: &Vocab, text: &str) -> bool {
    mask[vocab.id(text).unwrap()]
}

const HEAD: &str = "model { data { y: vector[8]; sigma: vector[8]; } prior {";

#[test]
fn mask_after_tilde_wants_a_distribution() {
    let reg = Registry::default();
    let vocab = Vocab::new(&eight().data_decls(), &reg);
    let m = build_mask(&state_after(&format!("{HEAD} mu ~")), &vocab).unwrap();
    assert!(allowed(&m, &vocab, "Normal") && allowed(&m, &vocab, "HalfCauchy"));
    assert!(!allowed(&m, &vocab, ";") && !allowed(&m, &vocab, "(") && !allowed(&m, &vocab, "0"));
}

#[test]
fn mask_at_likelihood_statement_start() {
    let reg = Registry::default();
    let vocab = Vocab::new(&eight().data_decls(), &reg);
    let first = build_mask(&state_after(&format!("{HEAD} mu ~ Normal(0, 5); }} likelihood {{")), &vocab).unwrap();
    assert!(allowed(&first, &vocab, "y") && !allowed(&first, &vocab, "}"));
    let later =
        build_mask(&state_after(&format!("{HEAD} mu ~ Normal(0, 5); }} likelihood {{ y ~ Normal(mu, sigma);")), &vocab)
            .unwrap();
    assert!(allowed(&later, &vocab, "y") && allowed(&later, &vocab, "sigma") && allowed(&later, &vocab, "}"));
}

#[test]
fn finished_program_has_empty_mask() {
    let reg = Registry::default();
    let vocab = Vocab::new(&eight().data_decls(), &reg);
    let done = state_after(&format!("{HEAD} }} likelihood {{ y ~ Normal(0, sigma); }} }}"));
    assert!(build_mask(&done, &vocab).unwrap().iter().all(|&b| !b));
}

#[test]
fn masked_entries_get_zero_mass() {
    let scores = vec![5.0, 1.0, 0.0, f64::NEG_INFINITY];
    let mask = vec![false, true, true, true];
    let p = masked_distribution(&scores, &mask, 0.3).unwrap();
    assert_eq!(p[0], 0.0);
    assert_eq!(p[3], 0.0);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(p[1] > p[2]);
    assert!(masked_distribution(&scores, &[true, false, false, false], 1.0).is_some());
    assert!(masked_distribution(&scores, &[false, false, false, true], 1.0).is_none());
    let greedy = masked_distribution(&scores, &mask, 0.0).unwrap();
    assert_eq!(greedy, vec![0.0, 1.0, 0.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn masked_sampling_never_breaks_the_grammar(seed in 0u64..10_000) {
        // Uniform scores over the mask: a random walk through viable prefixes.
        let reg = Registry::default();
        let vocab = Vocab::new(&eight().data_decls(), &reg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = PrefixState::default();
        let scores = vec![0.0; vocab.len()];
        for _ in 0..250 {
            let mask = build_mask(&state, &vocab).expect("no dead ends in this grammar");
            for (v, &bit) in mask.iter().enumerate() {
                prop_assert_eq!(bit, accepts_prefix(&state, vocab.token(v)).is_some());
            }
            let Some(v) = sample_masked(&scores, &mask, 1.0, &mut rng) else { break };
            prop_assert!(state.push(vocab.token(v)));
        }
    }
}

/// Emits a fixed token script, one text per call, through the mask.
struct ScriptedTokens {
    script: Vec<&'static str>,
    at: usize,
}

impl CandidateGenerator for ScriptedTokens {
    fn name(&self) -> &str {
        "scripted"
    }
    fn mode(&self) -> Mode {
        Mode::Token
    }
    fn temperature(&self) -> f64 {
        1.0
    }
    fn next_token_scores(&mut self, ctx: &TokenContext<'_>) -> Result<Vec<f64>, GeneratorError> {
        let mut s = vec![f64::NEG_INFINITY; ctx.vocab.len()];
        let text = self.script[self.at % self.script.len()];
        self.at += 1;
        s[ctx.vocab.id(text).expect("scripted token in vocabulary")] = 0.0;
        Ok(s)
    }
}

#[test]
fn token_mode_resamples_from_the_violating_span() {
    let reg = Registry::default();
    let ds = eight();
    let mut s = DecodeSession::new(&data_only(&ds), BlockKind::Prior, &reg, DecodeConfig::default(), 1).unwrap();
    let base = s.tokens().to_vec();
    // `nu` is not a parameter of Normal: cut back to it and continue.
    let script = vec!["mu", "~", "Normal", "(", "0", ",", "nu", "=", "1", ")", ";", "sigma", "=", "10", ")", ";"];
    let mut g = ScriptedTokens { script, at: 0 };
    let stmt = s.sample_statement(&mut g).unwrap().unwrap();
    assert_eq!(render_statement(&stmt), "mu ~ Normal(0, sigma=10);");
    assert_eq!(s.stats.retries, 1);
    assert_eq!(s.stats.tokens_generated, 16);
    assert_eq!(s.stats.tokens_discarded, 5);
    let texts: Vec<&str> = s.tokens()[base.len()..].iter().map(|t| t.text.as_str()).collect();
    assert_eq!(texts, ["mu", "~", "Normal", "(", "0", ",", "sigma", "=", "10", ")", ";"]);
    assert_eq!(&s.tokens()[..base.len()], &base[..]);
    assert_eq!(s.snapshot_depth(), 0);
    assert!(s.table().contains("mu"));
}

#[test]
fn fragment_mode_repairs_a_bad_parameter_name() {
    let reg = Registry::default();
    let ds = eight();
    let mut g = MockGenerator::new(vec!["mu ~ Normal(0, std=10);".into(), "sigma=10);".into()], vec![]);
    let mut s = DecodeSession::new(&data_only(&ds), BlockKind::Prior, &reg, DecodeConfig::default(), 0).unwrap();
    let stmt = s.sample_statement(&mut g).unwrap().unwrap();
    assert_eq!(render_statement(&stmt), "mu ~ Normal(0, sigma=10);");
    assert_eq!(g.requests[1].partial, "mu ~ Normal ( 0 ,");
    assert!(g.requests[1].violation.as_deref().unwrap().contains("std"));
    assert_eq!(s.stats.retries, 1);
}

#[test]
fn fragment_mode_tolerates_an_echoed_prefix() {
    let reg = Registry::default();
    let ds = eight();
    let mut g = MockGenerator::new(vec!["mu ~ Normal(0, std=10);".into(), "mu ~ Normal(0, sigma=10);".into()], vec![]);
    let mut s = DecodeSession::new(&data_only(&ds), BlockKind::Prior, &reg, DecodeConfig::default(), 0).unwrap();
    let stmt = s.sample_statement(&mut g).unwrap().unwrap();
    assert_eq!(render_statement(&stmt), "mu ~ Normal(0, sigma=10);");
}

#[test]
fn adversarial_fragments_hit_the_retry_cap() {
    let reg = Registry::default();
    let ds = eight();
    let mut g = MockGenerator::new(vec!["~ ExtNormal(0);".into()], vec![]);
    let mut dec = Decoder::new(&reg, DecodeConfig::default());
    let err = dec.decode_block(&data_only(&ds), BlockKind::Prior, &mut g, 0).unwrap_err();
    assert!(matches!(err, DecodeError::RetryCap { attempts: 16, .. }), "{err}");
    assert_eq!(g.calls(), 16);
    assert_eq!(dec.stats.retries, 16);
}

#[test]
fn unknown_distribution_and_lex_errors_are_rejected() {
    let reg = Registry::default();
    let ds = eight();
    let mut g = MockGenerator::new(vec!["mu ~ ExtNormal(0, 1);".into(), "Normal(0, 1);".into()], vec![]);
    let mut s = DecodeSession::new(&data_only(&ds), BlockKind::Prior, &reg, DecodeConfig::default(), 0).unwrap();
    let stmt = s.sample_statement(&mut g).unwrap().unwrap();
    assert_eq!(render_statement(&stmt), "mu ~ Normal(0, 1);");
    assert_eq!(g.requests[1].partial, "mu ~");

    let mut g = MockGenerator::new(vec!["mu ~ Normal(0, 1) $;".into(), "mu ~ Normal(0, 1);".into()], vec![]);
    let mut s = DecodeSession::new(&data_only(&ds), BlockKind::Prior, &reg, DecodeConfig::default(), 0).unwrap();
    assert!(s.sample_statement(&mut g).unwrap().is_some());
    assert_eq!(s.stats.retries, 1);
}

#[test]
fn closing_an_empty_likelihood_is_an_error() {
    let reg = Registry::default();
    let ds = eight();
    let prog = ModelProgram {
        prior_stmts: vec![grammar::parse_statement("mu ~ Normal(0, 5);", BlockKind::Prior).unwrap()],
        ..data_only(&ds)
    };
    let mut g = MockGenerator::new(vec![], vec!["}".into()]);
    let err = decode_block(&prog, BlockKind::Likelihood, &mut g, &reg, 0).unwrap_err();
    assert_eq!(err, DecodeError::EmptyLikelihood);
}

#[test]
fn snapshots_restore_prefix_and_table() {
    let reg = Registry::default();
    let ds = eight();
    let mut s = DecodeSession::new(&data_only(&ds), BlockKind::Prior, &reg, DecodeConfig::default(), 0).unwrap();
    let mut g = MockGenerator::new(vec!["mu ~ Normal(0, 5);".into()], vec![]);
    s.push_snapshot();
    let (len, n) = (s.tokens().len(), s.table().len());
    s.sample_statement(&mut g).unwrap();
    assert!(s.tokens().len() > len && s.table().len() == n + 1);
    assert!(s.pop_snapshot());
    assert_eq!((s.tokens().len(), s.table().len()), (len, n));
    assert!(!s.pop_snapshot());
}

#[test]
fn mock_replays_whole_programs() {
    let reg = Registry::default();
    let ds = eight();
    let text = "model { data { y: vector[8]; sigma: vector[8]; } prior { mu ~ Normal(0, 5); tau ~ HalfCauchy(5); } \
                likelihood { y ~ Normal(mu, sigma); } }";
    let mut g = MockGenerator::from_programs(&[text]).unwrap();
    let p = generate_program(&ds, &mut g, &reg, 3).unwrap();
    assert_eq!(p, grammar::parse(text).unwrap());
}

#[test]
fn builtin_is_deterministic_per_seed() {
    let reg = Registry::default();
    let ds = eight();
    let run = |seed| {
        let mut g = BuiltinGenerator::new(&ds, None);
        render(&generate_program(&ds, &mut g, &reg, seed).unwrap())
    };
    assert_eq!(run(7), run(7));
    let distinct: std::collections::HashSet<String> = (0..10).map(run).collect();
    assert!(distinct.len() > 5);
}

#[test]
fn builtin_programs_declare_the_data() {
    let reg = Registry::default();
    let ds = eight();
    let p = generate_program(&ds, &mut BuiltinGenerator::new(&ds, None), &reg, 7).unwrap();
    let text = render(&p);
    assert!(text.contains("y: vector[8];") && text.contains("sigma: vector[8];"));
    assert_eq!(p.likelihood_stmts[0].target, "y");
    let ds = datasets::builtin("surgical").unwrap();
    let text = render(&generate_program(&ds, &mut BuiltinGenerator::new(&ds, None), &reg, 7).unwrap());
    assert!(text.contains("n: intvector[12];") && text.contains("r: intvector[12];"));
}

#[test]
fn builtin_block_caps_hold() {
    let reg = Registry::default();
    for name in datasets::BUILTIN_NAMES {
        let ds = datasets::builtin(name).unwrap();
        for seed in 0..30 {
            let p = generate_program(&ds, &mut BuiltinGenerator::new(&ds, None), &reg, seed).unwrap();
            assert!(p.prior_stmts.len() <= 8 && (1..=3).contains(&p.likelihood_stmts.len()));
        }
    }
}

#[test]
fn builtin_output_always_binds() {
    let reg = Registry::default();
    for name in datasets::BUILTIN_NAMES {
        let ds = datasets::builtin(name).unwrap();
        for seed in 0..40 {
            let mut g = BuiltinGenerator::new(&ds, None);
            let p = generate_program(&ds, &mut g, &reg, seed).unwrap_or_else(|e| panic!("{name}/{seed}: {e}"));
            check_program(&p, &reg).unwrap();
            let reparsed = grammar::parse(&render(&p)).unwrap();
            assert_eq!(reparsed, p);
            bind(&p, &ds, &reg).unwrap_or_else(|e| panic!("{name}/{seed}: {e}\n{}", render(&p)));
        }
    }
}

#[test]
fn likelihood_targets_are_data_columns() {
    let reg = Registry::default();
    let ds = datasets::builtin("peregrine").unwrap();
    let mut g = BuiltinGenerator::new(&ds, None);
    let mut dec = Decoder::new(&reg, DecodeConfig::default());
    let mut prog = data_only(&ds);
    prog.prior_stmts = dec.decode_block(&prog, BlockKind::Prior, &mut g, 5).unwrap();
    let before = prog.prior_stmts.clone();
    let lik = dec.decode_block(&prog, BlockKind::Likelihood, &mut g, 5).unwrap();
    assert!(lik.iter().all(|s| prog.data_decl(&s.target).is_some()));
    assert_eq!(prog.prior_stmts, before);
    let again = dec.decode_block(&prog, BlockKind::Likelihood, &mut g, 5).unwrap();
    assert_eq!(lik, again);
}

#[test]
fn token_counter_only_grows() {
    let reg = Registry::default();
    let ds = datasets::builtin("dugongs").unwrap();
    let mut g = BuiltinGenerator::new(&ds, None);
    let mut dec = Decoder::new(&reg, DecodeConfig::default());
    let mut last = 0;
    for seed in 0..20 {
        let _ = dec.generate_program(&ds, &mut g, seed);
        assert!(dec.stats.tokens_generated > last);
        assert!(dec.stats.tokens_discarded <= dec.stats.tokens_generated);
        last = dec.stats.tokens_generated;
    }
}
