use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ppsynth::inference::dump::{read_draws, write_draws};
use ppsynth::refine::{Action, RunRecord};
use ppsynth_cli::ReportFile;
use tempfile::TempDir;

const NONCENTERED: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/models/eight_schools_noncentered.ppl");
const CENTERED: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/models/eight_schools_centered.ppl");

fn ppsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppsynth")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const GOOD: &str = "model { data { y: vector[8]; sigma: vector[8]; } \
prior { mu ~ Normal(0, 5); tau ~ HalfNormal(5); theta_z[8] ~ Normal(0, 1); theta = mu + tau * theta_z; } \
likelihood { y ~ Normal(theta, sigma); } }";

#[test]
fn eval_reference_model() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let o = ppsynth(&["eval", "--model", NONCENTERED, "--dataset", "eight_schools", "--seed", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = ReportFile::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.command, "eval");
    assert_eq!(r.seed, Some(5));
    assert!(r.diagnostics.score >= 6);
    assert!(r.program.unwrap().contains("theta = mu + tau * theta_tilde;"));
    assert!(stderr(&o).contains("rhat_max"));
}

#[test]
fn eval_semantic_failure_names_class_and_span() {
    let dir = TempDir::new().unwrap();
    let m = write(
        &dir,
        "m.ppl",
        "model {\n  data { y: vector[8]; sigma: vector[8]; }\n  prior { mu ~ Normal(mu=0, std=10); }\n  likelihood { y ~ Normal(mu, sigma); }\n}\n",
    );
    let o = ppsynth(&["eval", "--model", s(&m), "--dataset", "eight_schools", "--seed", "1"]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("error[semantic]"), "{e}");
    assert!(e.contains("line 3, column 29"), "{e}");
    assert!(e.contains("^^^"), "{e}");
    assert!(o.stdout.is_empty());
}

#[test]
fn eval_other_failure_classes() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("model { data { } prior { mu ~ Normal(0, 1); } likelihood { y ~ Normal(mu, sigma); }", "error[syntax]"),
        ("model { data { } prior { mu ~ Gaussian(0, 1); } likelihood { y ~ Normal(mu, sigma); } }", "error[semantic]"),
        ("model { data { } prior { mu ~ Normal(0, 1); } likelihood { y ~ Normal(mu, $); } }", "error[syntax]"),
        ("model { data { y: vector[8]; sigma: vector[8]; w: real; } prior { mu ~ Normal(0, 1); } likelihood { y ~ Normal(mu, sigma); } }", "error[bind]"),
        ("model { data { } prior { mu ~ Normal(0, 1); } likelihood { y ~ Normal(mu * 1e300 * 1e300, sigma); } }", "error[init]"),
    ];
    for (i, (text, class)) in cases.iter().enumerate() {
        let m = write(&dir, &format!("m{i}.ppl"), text);
        let o = ppsynth(&[
            "eval",
            "--model",
            s(&m),
            "--dataset",
            "eight_schools",
            "--seed",
            "1",
            "--draws",
            "100",
            "--tune",
            "100",
        ]);
        assert_eq!(code(&o), 1, "case {i}: {}", stderr(&o));
        assert!(stderr(&o).contains(class), "case {i}: {}", stderr(&o));
    }
}

#[test]
fn centered_model_is_unreliable() {
    let o = ppsynth(&["eval", "--model", CENTERED, "--dataset", "eight_schools", "--seed", "20261018"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let r = ReportFile::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert!(r.diagnostics.divergences > 0);
    assert!(!r.diagnostics.indicators.s4_divergences);
}

#[test]
fn diagnose_reproduces_eval_and_checks_input() {
    let dir = TempDir::new().unwrap();
    let (rep, draws) = (dir.path().join("r.json"), dir.path().join("d.json"));
    let o = ppsynth(&[
        "eval",
        "--model",
        NONCENTERED,
        "--dataset",
        "eight_schools",
        "--seed",
        "9",
        "--draws",
        "400",
        "--tune",
        "400",
        "--out",
        s(&rep),
        "--dump-draws",
        s(&draws),
    ]);
    assert!(code(&o) == 0 || code(&o) == 2, "{}", stderr(&o));
    let eval = ReportFile::from_json(&std::fs::read_to_string(&rep).unwrap()).unwrap();

    let o = ppsynth(&["diagnose", "--draws", s(&draws)]);
    let again = ReportFile::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(again.command, "diagnose");
    assert_eq!(again.diagnostics, eval.diagnostics);

    let mut d = read_draws(std::fs::File::open(&draws).unwrap()).unwrap();
    d.divergent[1][17] = true;
    d.divergent[3][2] = true;
    let flagged = dir.path().join("flagged.json");
    write_draws(&d, std::fs::File::create(&flagged).unwrap()).unwrap();
    let o = ppsynth(&["diagnose", "--draws", s(&flagged)]);
    let r = ReportFile::from_json(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(r.diagnostics.divergences, eval.diagnostics.divergences + 2);
    assert!(!r.diagnostics.indicators.s4_divergences);
    assert_eq!(code(&o), if r.diagnostics.valid { 0 } else { 2 });

    d.draws.truncate(1);
    d.energy.truncate(1);
    d.divergent.truncate(1);
    d.pointwise_loglik.truncate(1);
    d.stats.truncate(1);
    let single = dir.path().join("single.json");
    write_draws(&d, std::fs::File::create(&single).unwrap()).unwrap();
    let o = ppsynth(&["diagnose", "--draws", s(&single)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("at least 2 chains"), "{}", stderr(&o));

    let junk = write(&dir, "junk.json", "{\"schema\": \"ppsynth.draws/1\"");
    let o = ppsynth(&["diagnose", "--draws", s(&junk)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("malformed"));
}

#[test]
fn synth_hostile_mock_exhausts_budget() {
    let dir = TempDir::new().unwrap();
    let script = write(&dir, "mock.json", r#"{"prior": ["mu ~ Normal(0, std=1);"], "likelihood": []}"#);
    let record = dir.path().join("rec.jsonl");
    let o = ppsynth(&[
        "synth",
        "--dataset",
        "eight_schools",
        "--generator",
        "mock",
        "--mock-script",
        s(&script),
        "--r-max",
        "1",
        "--seed",
        "0",
        "--record",
        s(&record),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains(s(&record)));
    let rec = RunRecord::read_jsonl(&std::fs::read_to_string(&record).unwrap()).unwrap();
    assert_eq!(rec.actions(), vec![Action::PriorResample]);
}

#[test]
fn synth_mock_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let script = write(
        &dir,
        "mock.json",
        r#"{"prior": ["mu ~ Normal(0, 5);", "tau ~ HalfNormal(5);", "theta_z[8] ~ Normal(0, 1);", "theta = mu + tau * theta_z;", "}"],
            "likelihood": ["y ~ Normal(theta, sigma);", "}"]}"#,
    );
    let out = dir.path().join("best.json");
    let o = ppsynth(&[
        "synth",
        "--dataset",
        "eight_schools",
        "--generator",
        "mock",
        "--mock-script",
        s(&script),
        "--beta",
        "2",
        "--seed",
        "4",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = ReportFile::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let program = std::fs::read_to_string(dir.path().join("best.ppl")).unwrap();
    assert_eq!(r.program.as_deref(), Some(program.as_str()));
    assert!(program.contains("theta = mu + tau * theta_z;"));
    assert_eq!(r.run_record_path.as_deref(), Some(s(&dir.path().join("best.jsonl"))));
    let syn = r.synthesis.unwrap();
    assert_eq!(syn.valid.len(), 2);
    assert!(r.tokens.unwrap().generated > 0);
    let rec = RunRecord::read_jsonl(&std::fs::read_to_string(dir.path().join("best.jsonl")).unwrap()).unwrap();
    assert_eq!(rec.actions(), vec![Action::Accept, Action::Accept]);
    assert!(rec.attempts[1].duplicate);
    assert!(stderr(&o).contains("*#1"));
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run.json");
    let run = || {
        let o = ppsynth(&[
            "synth",
            "--dataset",
            "surgical",
            "--seed",
            "3",
            "--draws",
            "300",
            "--tune",
            "300",
            "--beta",
            "1",
            "--r-max",
            "5",
            "--out",
            s(&out),
        ]);
        let read = |ext: &str| std::fs::read_to_string(out.with_extension(ext)).unwrap_or_default();
        (code(&o), read("json"), read("ppl"), read("jsonl"))
    };
    let a = run();
    let b = run();
    assert!(!a.1.is_empty());
    assert_eq!(a, b);
}

#[test]
fn synth_sweep_suffixes_paths() {
    let dir = TempDir::new().unwrap();
    let script = write(
        &dir,
        "mock.json",
        r#"{"prior": ["mu ~ Normal(0, 5);", "}"], "likelihood": ["y ~ Normal(mu, sigma);", "}"]}"#,
    );
    let out = dir.path().join("run.json");
    let o = ppsynth(&[
        "synth",
        "--dataset",
        "eight_schools",
        "--generator",
        "mock",
        "--mock-script",
        s(&script),
        "--beta",
        "1",
        "--seed",
        "10",
        "--seeds",
        "2",
        "--draws",
        "300",
        "--tune",
        "300",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for seed in [10, 11] {
        assert!(dir.path().join(format!("run-seed{seed}.json")).exists());
        assert!(dir.path().join(format!("run-seed{seed}.ppl")).exists());
        assert!(dir.path().join(format!("run-seed{seed}.jsonl")).exists());
    }
    assert!(stderr(&o).contains("attempts"));
}

#[test]
fn missing_seed_is_drawn_and_printed() {
    let dir = TempDir::new().unwrap();
    let m = write(&dir, "m.ppl", GOOD);
    let o = ppsynth(&["eval", "--model", s(&m), "--dataset", "eight_schools", "--draws", "200", "--tune", "200"]);
    let e = stderr(&o);
    let line = e.lines().find(|l| l.starts_with("seed: ")).expect("seed printed");
    let seed: u64 = line[6..].parse().unwrap();
    let r = ReportFile::from_json(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(r.seed, Some(seed));
}

#[test]
fn dataset_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let o = ppsynth(&["dataset", "eight_schools"]);
    assert_eq!(code(&o), 0);
    let file = write(&dir, "es.json", &String::from_utf8(o.stdout).unwrap());
    let m = write(&dir, "m.ppl", GOOD);
    let run = |ds: &str| {
        ppsynth(&["eval", "--model", s(&m), "--dataset", ds, "--seed", "2", "--draws", "200", "--tune", "200"]).stdout
    };
    assert_eq!(run(s(&file)), run("eight_schools"));

    let bad = write(
        &dir,
        "bad.json",
        r#"{"name": "d", "columns": {"k": [1, 2.5]}, "meta": {"description": "", "integer_columns": ["k"]}}"#,
    );
    let o = ppsynth(&["eval", "--model", s(&m), "--dataset", s(&bad), "--seed", "2"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("error[input]"));
}

#[test]
fn usage_errors_and_grammar() {
    assert_eq!(code(&ppsynth(&["eval", "--dataset", "eight_schools"])), 64);
    assert_eq!(code(&ppsynth(&["synth", "--dataset", "eight_schools", "--seeds", "0"])), 64);
    let o = ppsynth(&["grammar"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("likelihood_block") && text.contains("StudentT(nu, mu, sigma)"));
    assert_eq!(code(&ppsynth(&["--help"])), 0);
    let o = ppsynth(&["synth", "--dataset", "eight_schools", "--generator", "http", "--seed", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--endpoint"));
}

/// A chat endpoint that writes one statement per block and checks the key.
fn fake_endpoint(requests: usize) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut auth = Vec::new();
        for _ in 0..requests {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if let Some(v) = lower.strip_prefix("authorization:") {
                    auth.push(v.trim().to_string());
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let user = v["messages"][1]["content"].as_str().unwrap();
            let so_far = &user[user.find("Program so far:").unwrap()..];
            let reply = if so_far.contains("y ~") {
                "}"
            } else if so_far.contains("likelihood {") {
                "```\ny ~ Normal(mu, sigma);\n```"
            } else if so_far.contains("mu ~") {
                "}"
            } else {
                "mu ~ Normal(0, 10);"
            };
            let body =
                serde_json::json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}).to_string();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        auth
    });
    (url, handle)
}

#[test]
fn synth_over_http() {
    let (url, server) = fake_endpoint(4);
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("h.json");
    let o = Command::new(env!("CARGO_BIN_EXE_ppsynth"))
        .args([
            "synth",
            "--dataset",
            "eight_schools",
            "--generator",
            "http",
            "--endpoint",
            &url,
            "--api-key-env",
            "PPSYNTH_TEST_KEY",
            "--beta",
            "1",
            "--seed",
            "1",
            "--draws",
            "300",
            "--tune",
            "300",
            "--out",
            s(&out),
        ])
        .env("PPSYNTH_TEST_KEY", "k-123")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!stderr(&o).contains("k-123"));
    let auth = server.join().unwrap();
    assert_eq!(auth, vec!["bearer k-123"; 4]);
    let program = std::fs::read_to_string(dir.path().join("h.ppl")).unwrap();
    assert!(program.contains("mu ~ Normal(0, 10);") && program.contains("y ~ Normal(mu, sigma);"));
}

#[test]
fn missing_api_key_variable_is_an_input_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_ppsynth"))
        .args([
            "synth",
            "--dataset",
            "eight_schools",
            "--generator",
            "http",
            "--endpoint",
            "http://127.0.0.1:9/",
            "--api-key-env",
            "PPSYNTH_SURELY_UNSET",
            "--seed",
            "1",
        ])
        .env_remove("PPSYNTH_SURELY_UNSET")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("PPSYNTH_SURELY_UNSET"));
}
