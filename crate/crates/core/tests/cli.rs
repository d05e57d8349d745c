mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{openai_reply, StubServer};

fn maintlog(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_maintlog"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = maintlog(args, &[]);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Staged {
    dir: tempfile::TempDir,
}

impl Staged {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

/// synth -> ingest -> prep -> subsystem cohort on the given preset.
fn stage(preset: &str) -> Staged {
    let s = Staged {
        dir: tempfile::tempdir().unwrap(),
    };
    ok(&["synth", "--preset", preset, "--out", p(&s.path("synth"))]);
    ok(&[
        "ingest",
        "--input",
        p(&s.path("synth/raw_logs.csv")),
        "--mapping",
        p(&s.path("synth/mapping.conf")),
        "--out",
        p(&s.path("raw.jsonl")),
    ]);
    ok(&[
        "prep",
        "--corpus",
        p(&s.path("raw.jsonl")),
        "--sites",
        p(&s.path("synth/sites.csv")),
        "--out",
        p(&s.path("prep")),
    ]);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(s.path("synth/truth.json")).unwrap()).unwrap();
    ok(&[
        "cohort",
        "--corpus",
        p(&s.path("prep/corpus.jsonl")),
        "--kind",
        "subsystem",
        "--name",
        truth["mode_subsystem"].as_str().unwrap(),
        "--out",
        p(&s.path("cohort.json")),
    ]);
    s
}

fn analyze_args<'a>(s: &'a Staged, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "analyze",
        "--task",
        "failure-modes",
        "--corpus",
        p(&s.path("prep/corpus.jsonl")),
        "--cohort",
        p(&s.path("cohort.json")),
        "--audit-trail",
        p(&s.path("audit.jsonl")),
        "--out",
        p(&s.path("report.json")),
    ]
    .iter()
    .map(|x| x.to_string())
    .collect();
    v.extend(extra.iter().map(|x| x.to_string()));
    v
}

fn run(args: &[String], envs: &[(&str, &str)]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    maintlog(&refs, envs)
}

#[test]
fn stages_chain_through_files() {
    let s = stage("fuzz");
    let out = run(&analyze_args(&s, &[]), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = ok(&["report", "--input", p(&s.path("report.json")), "--format", "markdown"]);
    assert!(md.starts_with("# Failure Mode Analysis"));
    assert!(md.contains("Config hash"));
    let csv = ok(&["report", "--input", p(&s.path("report.json")), "--format", "plot-data"]);
    assert!(csv.starts_with("# "));
    let scores = ok(&[
        "score",
        "--report",
        p(&s.path("report.json")),
        "--truth",
        p(&s.path("synth/truth.json")),
    ]);
    let v: serde_json::Value = serde_json::from_str(&scores).unwrap();
    assert_eq!(v["metrics"]["mode_recall"], 1.0);
    let trail = std::fs::read_to_string(s.path("audit.jsonl")).unwrap();
    assert!(trail.lines().count() >= 2);
    assert!(
        !trail.contains("Power Converter"),
        "audit trail stores digests, not prompt text"
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let s = stage("minimal");
    let cfg = s.path("run.toml");
    std::fs::write(&cfg, "strategy = \"sampled\"\nfraction = 1.0\nseed = 5\n").unwrap();
    let mut args = vec!["--config".to_owned(), p(&cfg).to_owned()];
    args.extend(analyze_args(&s, &[]));
    assert!(run(&args, &[]).status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(s.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["provider_meta"]["strategy"], "sampled_fraction");
    assert_eq!(report["meta"]["seed"], 5);

    let mut args = vec!["--config".to_owned(), p(&cfg).to_owned()];
    args.extend(analyze_args(&s, &["--strategy", "full", "--seed", "9"]));
    assert!(run(&args, &[]).status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(s.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["provider_meta"]["strategy"], "full");
    assert_eq!(report["meta"]["seed"], 9);
}

#[test]
fn config_errors_exit_2() {
    let s = stage("minimal");
    assert_eq!(
        maintlog(&["synth", "--preset", "nope", "--out", p(&s.path("x"))], &[])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(maintlog(&["analyze", "--bogus"], &[]).status.code(), Some(2));
    let out = run(&analyze_args(&s, &["--provider", "gpt-5"]), &[("OPENAI_API_KEY", "")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("OPENAI_API_KEY"));
    let cfg = s.path("pin.toml");
    std::fs::write(&cfg, "template_version = \"v0\"\n").unwrap();
    let mut args = vec!["--config".to_owned(), p(&cfg).to_owned()];
    args.extend(analyze_args(&s, &[]));
    assert_eq!(run(&args, &[]).status.code(), Some(2));
    assert_eq!(
        run(&analyze_args(&s, &["--strategy", "sampled"]), &[]).status.code(),
        Some(2)
    );
}

#[test]
fn validation_errors_exit_3_with_json_format() {
    let s = stage("minimal");
    let mut args = vec!["--error-format".to_owned(), "json".to_owned()];
    args.extend(analyze_args(&s, &[]));
    let i = args.iter().position(|a| a == "failure-modes").unwrap();
    args[i] = "causal".into();
    let out = run(&args, &[]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "validation_error");
    assert_eq!(err["error"]["exit_code"], 3);
}

fn stub_profile(s: &Staged, url: &str, retries: u32) -> PathBuf {
    let path = s.path("profiles.toml");
    std::fs::write(
        &path,
        format!(
            "[[profile]]\nname = \"stub\"\nkind = \"openai\"\nmodel = \"m\"\nendpoint = \"{url}\"\n\
             api_key_env = \"STUB_KEY\"\ncontext_window_tokens = 100000\nmax_output_tokens = 1000\nmax_retries = {retries}\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn provider_errors_exit_4() {
    let s = stage("minimal");
    let server = StubServer::start(vec![(401, "{}".into())]);
    let profiles = stub_profile(&s, &server.url, 0);
    let out = run(
        &analyze_args(&s, &["--provider", "stub", "--profiles-file", p(&profiles)]),
        &[("STUB_KEY", "k")],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exhausted_retries_and_repairs_exit_5() {
    let s = stage("minimal");
    let server = StubServer::start(vec![(429, "{}".into())]);
    let profiles = stub_profile(&s, &server.url, 0);
    let args = analyze_args(&s, &["--provider", "stub", "--profiles-file", p(&profiles)]);
    assert_eq!(run(&args, &[("STUB_KEY", "k")]).status.code(), Some(5));

    let server = StubServer::start(vec![(200, openai_reply("no json here"))]);
    let profiles = stub_profile(&s, &server.url, 0);
    let args = analyze_args(
        &s,
        &[
            "--provider",
            "stub",
            "--profiles-file",
            p(&profiles),
            "--max-attempts",
            "2",
        ],
    );
    let out = run(&args, &[("STUB_KEY", "k")]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed_syntax"));
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn live_adapter_drives_a_workflow() {
    let s = stage("minimal");
    let corpus = std::fs::read_to_string(s.path("prep/corpus.jsonl")).unwrap();
    let log_line = corpus.lines().find(|l| l.contains("\"log_id\"")).unwrap();
    let log: serde_json::Value = serde_json::from_str(log_line).unwrap();
    let id = log["log_id"].as_str().unwrap();
    let quote: String = log["description"].as_str().unwrap().chars().take(12).collect();
    let answer = serde_json::json!({"modes": [{
        "name": "Breaker trips",
        "description": "Main breaker opening",
        "estimated_count": 1,
        "supporting_quotes": [{"log_id": id, "quote": quote}]
    }]});
    let server = StubServer::start(vec![(200, openai_reply(&answer.to_string()))]);
    let profiles = stub_profile(&s, &server.url, 0);
    let out = run(
        &analyze_args(&s, &["--provider", "stub", "--profiles-file", p(&profiles)]),
        &[("STUB_KEY", "k")],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(s.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["modes"][0]["name"], "Breaker trips");
    assert_eq!(report["report"]["modes"][0]["reconciled_count"], 1);
    assert_eq!(report["report"]["provider_meta"]["profile"], "stub");
}
