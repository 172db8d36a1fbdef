use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ppsynth::ast::Span;
use ppsynth::decoder::{BuiltinGenerator, CandidateGenerator, HttpConfig, HttpGenerator, MockGenerator};
use ppsynth::dist::Support;
use ppsynth::grammar::{self, tokenize, ParseError, EBNF};
use ppsynth::inference::dump::{read_draws, write_draws};
use ppsynth::inference::SamplerError;
use ppsynth::refine::{synthesize, NutsEvaluator, RefineConfig, RefineError};
use ppsynth::semantics::{check_program, ProgramViolation};
use ppsynth::{bind, diagnose, nuts_sample, BlockKind, Dataset, DiagnosticsReport, ModelProgram, PosteriorDraws};
use ppsynth::{Registry, SamplerConfig, Thresholds};

use crate::args::{DiagnoseArgs, EvalArgs, GeneratorKind, SamplerArgs, SynthArgs};
use crate::dataset::{load_dataset, DatasetFile, Loaded};
use crate::report::{summary_table, ReportFile, SynthSummary};
use crate::{CliError, FailureKind, EXIT_NO_VALID_MODEL, EXIT_OK, EXIT_UNRELIABLE};

fn resolve_seed(seed: Option<u64>, err: &mut dyn Write) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        let _ = writeln!(err, "seed: {s}");
        s
    })
}

fn sampler_config(a: &SamplerArgs, seed: u64) -> SamplerConfig {
    SamplerConfig {
        chains: a.chains,
        draws: a.draws,
        tune: a.tune,
        target_accept: a.target_accept,
        seed,
        ..Default::default()
    }
}

fn thresholds(zeta: u8) -> Thresholds {
    Thresholds { zeta, ..Default::default() }
}

fn emit(report: &ReportFile, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, report.to_json()).map_err(|e| CliError::io(p.display(), e)),
        None => out.write_all(report.to_json().as_bytes()).map_err(|e| CliError::io("stdout", e)),
    }
}

fn exit_code(report: &DiagnosticsReport) -> i32 {
    if report.valid {
        EXIT_OK
    } else {
        EXIT_UNRELIABLE
    }
}

/// Source lines covering bytes `start..end` with the range underlined.
pub fn excerpt(src: &str, start: usize, end: usize) -> String {
    let start = start.min(src.len());
    let line_start = src[..start].rfind('\n').map_or(0, |i| i + 1);
    let line_end = src[start..].find('\n').map_or(src.len(), |i| start + i);
    let line_no = src[..start].matches('\n').count() + 1;
    let col = src[line_start..start].chars().count();
    let width = src[start..end.clamp(start, line_end)].chars().count().max(1);
    let gutter = " ".repeat(line_no.to_string().len());
    format!(
        "{gutter}--> line {line_no}, column {}\n{gutter} |\n{line_no} | {}\n{gutter} | {}{}\n",
        col + 1,
        &src[line_start..line_end],
        " ".repeat(col),
        "^".repeat(width)
    )
}

fn token_bytes(src: &str, span: Span) -> Option<(usize, usize)> {
    let toks = tokenize(src).ok()?;
    if span.start >= toks.len() {
        return Some((src.trim_end().len(), src.trim_end().len()));
    }
    let last = toks.get(span.end.max(span.start + 1) - 1).unwrap_or(&toks[span.start]);
    Some((toks[span.start].start, last.end.max(toks[span.start].end)))
}

fn syntax_error(src: &str, e: &ParseError) -> CliError {
    let mut out = CliError::new(FailureKind::Syntax, e.to_string());
    let bytes = match e {
        ParseError::Lex(l) => Some((l.offset, l.offset + l.ch.len_utf8())),
        _ => e.span().and_then(|s| token_bytes(src, s)),
    };
    out.excerpt = bytes.map(|(s, t)| excerpt(src, s, t));
    out
}

fn semantic_error(src: &str, program: &ModelProgram, v: &ProgramViolation) -> CliError {
    let mut out = CliError::new(FailureKind::Semantic, v.to_string());
    let stmt = match v.block {
        BlockKind::Prior => program.prior_stmts.get(v.index),
        BlockKind::Likelihood => program.likelihood_stmts.get(v.index),
        _ => None,
    };
    let span = v.violation.span;
    let span = match stmt {
        Some(st) if span.start == 0 && span.end == 0 => st.span,
        _ => span,
    };
    if stmt.is_some() {
        out.excerpt = token_bytes(src, span).map(|(s, t)| excerpt(src, s, t));
    }
    out
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub program: ModelProgram,
    pub text: String,
    pub draws: PosteriorDraws,
    pub report: DiagnosticsReport,
}

/// Parse, check, bind, sample and score one program. An empty data block
/// takes the dataset's columns.
pub fn evaluate_source(
    src: &str,
    dataset: &Dataset,
    sampler: &SamplerConfig,
    th: &Thresholds,
) -> Result<EvalOutput, CliError> {
    let registry = Registry::default();
    let mut program = grammar::parse(src).map_err(|e| syntax_error(src, &e))?;
    if program.data_decls.is_empty() {
        program.data_decls = dataset.data_decls();
    }
    check_program(&program, &registry).map_err(|v| semantic_error(src, &program, &v))?;
    let model = bind(&program, dataset, &registry).map_err(|e| CliError::new(FailureKind::Bind, e.to_string()))?;
    let draws = nuts_sample(&model, sampler).map_err(|e| {
        let kind = match e {
            SamplerError::InitFailed { .. } => FailureKind::Init,
            SamplerError::BadConfig(_) => FailureKind::Input,
            _ => FailureKind::Sampler,
        };
        CliError::new(kind, e.to_string())
    })?;
    let report = diagnose(&draws, th);
    Ok(EvalOutput { text: grammar::render(&program), program, draws, report })
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let seed = resolve_seed(a.sampler.seed, err);
    let loaded = load_dataset(&a.dataset)?;
    let src = fs::read_to_string(&a.model).map_err(|e| CliError::io(a.model.display(), e))?;
    let th = thresholds(a.sampler.zeta);
    let res = evaluate_source(&src, &loaded.dataset, &sampler_config(&a.sampler, seed), &th)?;
    if let Some(p) = &a.dump_draws {
        let f = File::create(p).map_err(|e| CliError::io(p.display(), e))?;
        write_draws(&res.draws, BufWriter::new(f)).map_err(|e| CliError::new(FailureKind::Io, e.to_string()))?;
    }
    let mut report = ReportFile::new("eval", res.report);
    report.dataset = Some(loaded.dataset.name.clone());
    report.seed = Some(seed);
    report.program = Some(res.text);
    emit(&report, a.out.as_deref(), out)?;
    let _ = write!(err, "{}", summary_table(&[("model".into(), &report.diagnostics)], &th));
    Ok(exit_code(&report.diagnostics))
}

pub fn cmd_diagnose(a: &DiagnoseArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let f = File::open(&a.draws).map_err(|e| CliError::io(a.draws.display(), e))?;
    let draws = read_draws(std::io::BufReader::new(f))
        .map_err(|e| CliError::input(format!("{}: malformed draws file: {e}", a.draws.display())))?;
    if draws.n_chains() < 2 {
        return Err(CliError::input(format!(
            "split R-hat needs at least 2 chains; {} has {}",
            a.draws.display(),
            draws.n_chains()
        )));
    }
    if draws.n_draws() < 4 {
        return Err(CliError::input("at least 4 draws per chain are needed"));
    }
    let th = thresholds(a.zeta);
    let report = ReportFile::new("diagnose", diagnose(&draws, &th));
    emit(&report, a.out.as_deref(), out)?;
    let _ = write!(err, "{}", summary_table(&[("draws".into(), &report.diagnostics)], &th));
    Ok(exit_code(&report.diagnostics))
}

fn support_name(s: Support) -> &'static str {
    match s {
        Support::RealLine => "real",
        Support::Positive => "positive",
        Support::UnitInterval => "unit interval",
        Support::NonnegInt => "non-negative integer",
        Support::Interval => "[lower, upper]",
    }
}

pub fn cmd_grammar(out: &mut dyn Write) -> Result<i32, CliError> {
    let mut s = format!("{EBNF}\nDistributions:\n");
    for spec in Registry::default().iter() {
        let params: Vec<&str> = spec.params.iter().map(|p| p.name).collect();
        s.push_str(&format!(
            "  {:<28} {}\n",
            format!("{}({})", spec.name, params.join(", ")),
            support_name(spec.support)
        ));
    }
    s.push_str("\nFunctions: exp, log, sqrt, logit, invlogit, pow(x, y)\n");
    out.write_all(s.as_bytes()).map_err(|e| CliError::io("stdout", e))?;
    Ok(EXIT_OK)
}

pub fn cmd_dataset(source: &str, out: &mut dyn Write) -> Result<i32, CliError> {
    let loaded = load_dataset(source)?;
    let file = DatasetFile::from_dataset(&loaded.dataset, loaded.response.as_deref());
    let text = serde_json::to_string_pretty(&file).expect("dataset serializes") + "\n";
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("stdout", e))?;
    Ok(EXIT_OK)
}

fn make_generator(
    a: &SynthArgs,
    loaded: &Loaded,
    registry: &Registry,
) -> Result<Box<dyn CandidateGenerator>, CliError> {
    match a.generator {
        GeneratorKind::Builtin => {
            let response = a.response.as_deref().or(loaded.response.as_deref());
            let mut g = BuiltinGenerator::new(&loaded.dataset, response);
            if let Some(t) = a.temperature {
                g = g.with_temperature(t);
            }
            Ok(Box::new(g))
        }
        GeneratorKind::Http => {
            let endpoint = a.endpoint.clone().ok_or_else(|| CliError::input("--generator http needs --endpoint"))?;
            let mut cfg = HttpConfig::new(endpoint);
            cfg.model = a.llm.clone();
            if let Some(t) = a.temperature {
                cfg.temperature = t;
            }
            if let Some(var) = &a.api_key_env {
                let key = std::env::var(var)
                    .map_err(|_| CliError::input(format!("environment variable `{var}` is not set")))?;
                cfg.api_key = Some(key);
            }
            let g = HttpGenerator::new(cfg, &loaded.dataset, registry)
                .map_err(|e| CliError::new(FailureKind::Generator, e.to_string()))?;
            Ok(Box::new(g))
        }
        GeneratorKind::Mock => {
            let path = a.mock_script.as_ref().ok_or_else(|| CliError::input("--generator mock needs --mock-script"))?;
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            let g = MockGenerator::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            Ok(Box::new(g))
        }
    }
}

fn with_seed(p: &Path, seed: u64) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match p.extension() {
        Some(ext) => format!("{stem}-seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-seed{seed}"),
    };
    p.with_file_name(name)
}

fn default_record(dataset: &str, seed: u64) -> PathBuf {
    let safe: String =
        dataset.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect();
    PathBuf::from(format!("ppsynth-{safe}-{seed}.jsonl"))
}

/// Everything one synthesis run produced.
#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub seed: u64,
    pub report: Option<ReportFile>,
    pub record_path: PathBuf,
    pub attempts: usize,
    pub seconds: f64,
    /// Summary rows for every reliable candidate, best first.
    pub table: String,
}

/// Runs the refinement loop once and writes the record, and when a reliable
/// model exists the report and program files.
pub fn synth_once(
    a: &SynthArgs,
    loaded: &Loaded,
    seed: u64,
    out_path: Option<&Path>,
    record_path: &Path,
) -> Result<SynthOutcome, CliError> {
    let clock = Instant::now();
    let registry = Registry::default();
    let th = thresholds(a.sampler.zeta);
    let config = RefineConfig {
        r_max: a.r_max,
        alpha: a.alpha.unwrap_or(2.min(a.r_max)),
        beta: a.beta,
        k: a.sampler.zeta,
        thresholds: th.clone(),
        sampler: sampler_config(&a.sampler, 0),
        seed,
        ..Default::default()
    };
    let mut generator = make_generator(a, loaded, &registry)?;
    let mut evaluator = NutsEvaluator {
        dataset: &loaded.dataset,
        registry: &registry,
        sampler: config.sampler.clone(),
        thresholds: th.clone(),
    };
    let syn =
        synthesize(&loaded.dataset, generator.as_mut(), &mut evaluator, &registry, &config).map_err(|e| match e {
            RefineError::Config(m) => CliError::input(m),
            RefineError::Generator(g) => CliError::new(FailureKind::Generator, g.to_string()),
        })?;
    let f = File::create(record_path).map_err(|e| CliError::io(record_path.display(), e))?;
    let mut w = BufWriter::new(f);
    syn.record.write_jsonl(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(record_path.display(), e))?;

    let summary = SynthSummary::from_synthesis(&syn);
    let by_iter = |it: usize| syn.valid.iter().find(|c| c.iteration == it).expect("listed candidate exists");
    let rows: Vec<(String, &DiagnosticsReport)> = summary
        .valid
        .iter()
        .enumerate()
        .map(|(i, v)| (format!("{}#{}", if i == 0 { "*" } else { " " }, v.iteration), &by_iter(v.iteration).report))
        .collect();
    let table = if rows.is_empty() { String::new() } else { summary_table(&rows, &th) };
    let report = syn.best().map(|best| {
        let mut r = ReportFile::new("synth", best.report.clone());
        r.dataset = Some(loaded.dataset.name.clone());
        r.seed = Some(seed);
        r.program = Some(best.text.clone());
        r.run_record_path = Some(record_path.display().to_string());
        r.tokens = Some(syn.tokens);
        r.synthesis = Some(summary.clone());
        r
    });
    if let (Some(r), Some(p)) = (&report, out_path) {
        let program = r.program.clone().unwrap_or_default();
        let ppl = p.with_extension("ppl");
        fs::write(&ppl, program).map_err(|e| CliError::io(ppl.display(), e))?;
        emit(r, Some(p), &mut std::io::sink())?;
    }
    Ok(SynthOutcome {
        seed,
        report,
        record_path: record_path.to_path_buf(),
        attempts: syn.record.attempts.len(),
        seconds: clock.elapsed().as_secs_f64(),
        table,
    })
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let base = resolve_seed(a.sampler.seed, err);
    let loaded = load_dataset(&a.dataset)?;
    let sweep = a.seeds > 1;
    let mut outcomes = Vec::new();
    for i in 0..a.seeds {
        let seed = base.wrapping_add(i);
        let out_path = a.out.as_ref().map(|p| if sweep { with_seed(p, seed) } else { p.clone() });
        let record = match (&a.record, &out_path) {
            (Some(r), _) if sweep => with_seed(r, seed),
            (Some(r), _) => r.clone(),
            (None, Some(o)) => o.with_extension("jsonl"),
            (None, None) => default_record(&loaded.dataset.name, seed),
        };
        let o = synth_once(a, &loaded, seed, out_path.as_deref(), &record)?;
        match &o.report {
            Some(r) => {
                if out_path.is_none() {
                    let text =
                        if sweep { serde_json::to_string(r).expect("report serializes") + "\n" } else { r.to_json() };
                    out.write_all(text.as_bytes()).map_err(|e| CliError::io("stdout", e))?;
                }
                let _ = writeln!(err, "seed {seed}: {} attempts, record {}", o.attempts, o.record_path.display());
                let _ = write!(err, "{}", o.table);
            }
            None => {
                let _ = writeln!(
                    err,
                    "seed {seed}: no reliable model after {} attempts; run record: {}",
                    o.attempts,
                    o.record_path.display()
                );
            }
        }
        outcomes.push(o);
    }
    if sweep {
        let _ = writeln!(
            err,
            "\n{:>20} {:>6} {:>5} {:>10} {:>9} {:>8}",
            "seed", "valid", "score", "elpd", "attempts", "seconds"
        );
        for o in &outcomes {
            let (n, score, elpd) = match o.report.as_ref().and_then(|r| r.synthesis.as_ref().map(|s| (r, s))) {
                Some((r, s)) => {
                    (s.valid.len(), r.diagnostics.score.to_string(), format!("{:.2}", r.diagnostics.elpd.0))
                }
                None => (0, "-".into(), "-".into()),
            };
            let _ =
                writeln!(err, "{:>20} {:>6} {:>5} {:>10} {:>9} {:>8.1}", o.seed, n, score, elpd, o.attempts, o.seconds);
        }
    }
    Ok(if outcomes.iter().any(|o| o.report.is_some()) { EXIT_OK } else { EXIT_NO_VALID_MODEL })
}
