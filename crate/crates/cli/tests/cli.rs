use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaptive-survey"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("RUST_LOG").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}\nstdout: {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn data_rows(p: &Path) -> usize {
    read(p).lines().count() - 1
}

/// Planted dataset with eight parties.
fn demo(dir: &Path, n_questions: usize) -> PathBuf {
    let out = dir.join("data");
    ok(&["demo-data", "--out", s(&out), "--n-questions", &n_questions.to_string(), "--n-parties", "8", "--candidates-per-party", "6", "--n-voters", "300", "--seed", "4"]);
    out
}

const PARTIES: &str = "P0,P1,P2,P3,P4,P5,P6,P7";

fn generate_mock(data: &Path, out: &Path) {
    ok(&[
        "generate", "--questions", s(&data.join("questionnaire.json")), "--parties", PARTIES, "--transport", "mock",
        "--mock-profiles", s(&data.join("candidates.csv")), "--seed", "2", "--out", s(out),
    ]);
}

#[test]
fn demo_data_manifest_digests_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 10);
    let manifest: Value = serde_json::from_str(&read(&data.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "demo-data");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 4);
    for o in outputs {
        let bytes = std::fs::read(o["path"].as_str().unwrap()).unwrap();
        let digest = sha256_hex(&bytes);
        assert_eq!(o["sha256"].as_str().unwrap(), digest);
    }
    assert_eq!(data_rows(&data.join("candidates.csv")), 48);
}

fn sha256_hex(bytes: &[u8]) -> String {
    // Shells out so the check does not reuse the code under test.
    let tmp = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(tmp.path(), bytes).unwrap();
    let out = Command::new("sha256sum").arg(tmp.path()).output().unwrap();
    String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_string()
}

#[test]
fn generate_is_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 10);
    let (a, b, r) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("r"));
    generate_mock(&data, &a);
    generate_mock(&data, &b);
    assert_eq!(read(&a.join("gpt.csv")), read(&b.join("gpt.csv")));
    // Eight parties at the default five temperatures and ten trials.
    assert_eq!(data_rows(&a.join("gpt.csv")), 400);
    assert_eq!(data_rows(&a.join("temperatures.csv")), 5);

    ok(&[
        "generate", "--questions", s(&data.join("questionnaire.json")), "--parties", PARTIES, "--transport", "replay",
        "--fixtures", s(&a.join("fixtures.jsonl")), "--out", s(&r),
    ]);
    assert_eq!(read(&a.join("gpt.csv")), read(&r.join("gpt.csv")));
}

#[test]
fn generate_error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 6);
    let q = data.join("questionnaire.json");
    let out = dir.path().join("g");
    let live = ["generate", "--questions", s(&q), "--parties", "P0", "--api-key-env", "SURELY_UNSET_KEY_VAR", "--out", s(&out)];
    assert_eq!(code(&live), 2);
    assert_eq!(code(&["generate", "--reps", "many"]), 1);
    assert_eq!(code(&["generate", "--questions", s(&q), "--parties", "P0", "--transport", "carrier-pigeon", "--out", s(&out)]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn derive_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 10);
    let gen = dir.path().join("gen");
    generate_mock(&data, &gen);
    let q = data.join("questionnaire.json");
    let gpt = gen.join("gpt.csv");
    let out = dir.path().join("derived");

    ok(&["derive", "--questions", s(&q), "--in", s(&gpt), "--what", "means", "--out", s(&out)]);
    assert_eq!(data_rows(&out.join("gpt_means.csv")), 8);

    ok(&["derive", "--questions", s(&q), "--in", s(&gpt), "--what", "vertices", "--out", s(&out)]);
    let vertices = read(&out.join("vertices.csv"));
    for line in vertices.lines().skip(1) {
        assert!(line.split(',').skip(2).all(|v| v == "0" || v == "1"), "{line}");
    }

    assert_eq!(code(&["derive", "--questions", s(&q), "--in", s(&gpt), "--what", "voters", "--out", s(&out)]), 1);
    ok(&[
        "derive", "--questions", s(&q), "--in", s(&gpt), "--what", "voters", "--alpha", s(&data.join("party_results.csv")),
        "--n", "1200", "--seed", "1", "--out", s(&out),
    ]);
    assert_eq!(data_rows(&out.join("gpt_voters.csv")), 1200);
}

fn sim_flags<'a>(data: &'a Path, out: &'a Path) -> Vec<String> {
    [
        "--questions", s(&data.join("questionnaire.json")), "--voters", s(&data.join("voters.csv")),
        "--candidates", s(&data.join("candidates.csv")), "--out", s(out), "--grid-resolution", "31",
    ]
    .iter()
    .map(|x| x.to_string())
    .collect()
}

fn ok_owned(cmd: &str, flags: Vec<String>, extra: &[&str]) -> Output {
    let mut args: Vec<&str> = vec![cmd];
    args.extend(flags.iter().map(String::as_str));
    args.extend(extra);
    ok(&args)
}

#[test]
fn simulate_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 10);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let extra = ["--k", "4", "--users", "40", "--reps", "2", "--seed", "5"];
    ok_owned("simulate", sim_flags(&data, &a), &extra);
    ok_owned("simulate", sim_flags(&data, &b), &extra);
    for f in ["curves.csv", "interactions.csv", "curve_rep0.csv", "summary.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    assert_eq!(data_rows(&a.join("curves.csv")), 40);
    assert_eq!(data_rows(&a.join("interactions.csv")), 2 * 40 * 4);

    let mut args: Vec<String> = vec!["simulate".into()];
    args.extend(sim_flags(&data, &a));
    args.extend(["--init", "gpt"].map(String::from));
    assert_eq!(code(&args.iter().map(String::as_str).collect::<Vec<_>>()), 1);
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 8);
    let out = dir.path().join("sim");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "[simulate]\nquestions = {:?}\nvoters = {:?}\ncandidates = {:?}\nout = {:?}\nk = 3\nusers = 30\nreps = 1\ngrid_resolution = 21\n",
            s(&data.join("questionnaire.json")),
            s(&data.join("voters.csv")),
            s(&data.join("candidates.csv")),
            s(&out)
        ),
    )
    .unwrap();
    ok(&["simulate", "--config", s(&cfg), "--users", "20"]);
    assert_eq!(data_rows(&out.join("curves.csv")), 20);
    assert_eq!(data_rows(&out.join("interactions.csv")), 60);

    std::fs::write(&cfg, "[simulate]\nnot_a_flag = 1\n").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&cfg)]), 1);
}

#[test]
fn compare_sweep_and_replacement_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 45);
    let gen = dir.path().join("gen");
    ok(&[
        "generate", "--questions", s(&data.join("questionnaire.json")), "--parties", PARTIES, "--transport", "mock",
        "--mock-profiles", s(&data.join("candidates.csv")), "--reps", "2", "--out", s(&gen),
    ]);
    let gpt = gen.join("gpt.csv");
    let small = ["--users", "30", "--reps", "1"];

    let out = dir.path().join("sweep");
    let mut extra = vec!["--init", "gpt", "--init-data", s(&gpt), "--k-list", "5,10,15,20,25,30,35,40,45"];
    extra.extend(small);
    ok_owned("sweep", sim_flags(&data, &out), &extra);
    assert_eq!(data_rows(&out.join("break_even.csv")), 9);

    let out = dir.path().join("repl");
    let mut extra = vec!["--init-data", s(&gpt), "--gamma-list", "0.4,0.8,1.2,2,4,8", "--k", "5"];
    extra.extend(small);
    ok_owned("replacement", sim_flags(&data, &out), &extra);
    assert_eq!(data_rows(&out.join("overlap.csv")), 6);
    let series: std::collections::BTreeSet<String> =
        read(&out.join("curves.csv")).lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(series.len(), 7);

    let out = dir.path().join("cmp");
    let mut extra = vec!["--conditions", "coldstart,gpt,candidates", "--gpt", s(&gpt), "--k", "5"];
    extra.extend(small);
    ok_owned("compare", sim_flags(&data, &out), &extra);
    assert_eq!(data_rows(&out.join("break_even.csv")), 2);
    assert_eq!(data_rows(&out.join("curves.csv")), 90);
}

struct Server {
    child: Child,
    url: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn serve(data: &Path, state: &Path) -> Server {
    let mut child = bin()
        .args([
            "serve", "--port", "0", "--questions", s(&data.join("questionnaire.json")), "--candidates",
            s(&data.join("candidates.csv")), "--state-dir", s(state), "--k", "5",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected banner {line:?}")).to_string();
    Server { child, url }
}

#[test]
fn serve_health_and_restart_restore() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 8);
    let state = dir.path().join("state");
    let server = serve(&data, &state);
    let health: Value = ureq::get(format!("{}/v1/healthz", server.url)).call().unwrap().body_mut().read_json().unwrap();
    assert_eq!(health["status"], "ok");
    assert!(health["version"].is_string());
    let created: Value = ureq::post(format!("{}/v1/sessions", server.url)).send_empty().unwrap().body_mut().read_json().unwrap();
    let id = created["session_id"].as_str().unwrap().to_string();
    drop(server);

    let server = serve(&data, &state);
    let session: Value = ureq::get(format!("{}/v1/sessions/{id}", server.url)).call().unwrap().body_mut().read_json().unwrap();
    assert_eq!(session["status"], "active");
    assert_eq!(session["next_question"]["id"], created["question"]["id"]);
}

#[test]
fn serve_environment_and_precondition_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo(dir.path(), 6);
    let q = data.join("questionnaire.json");
    assert_eq!(code(&["serve", "--port", "0", "--questions", s(&q), "--candidates", s(&dir.path().join("missing.csv"))]), 1);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    assert_eq!(code(&["serve", "--port", &port, "--questions", s(&q), "--candidates", s(&data.join("candidates.csv"))]), 3);
}
