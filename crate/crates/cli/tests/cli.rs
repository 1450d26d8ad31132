use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SPLIT: &str = r#"{
  "nodes": [{"id": "i1", "mu": 3.0}, {"id": "i2", "mu": 2.0}, {"id": "i3", "mu": 2.0}],
  "sources": [{"id": "s1", "lambda": 1.0, "entry": {"i1": 1.0}}],
  "routing": {"i1": {"i2": 0.4, "i3": 0.6}, "i2": {}, "i3": {}},
  "network_type": "repeater_assisted",
  "erasure": {"model": "exponential", "kappa": 1.0}
}"#;

fn tandem(lambda: f64, kappa: f64) -> String {
    format!(
        r#"{{
  "nodes": [{{"id": "i1", "mu": 1.0}}, {{"id": "i2", "mu": 1.0}}],
  "sources": [{{"id": "s1", "lambda": {lambda}, "entry": {{"i1": 1.0}}}}],
  "routing": {{"i1": {{"i2": 1.0}}, "i2": {{}}}},
  "network_type": "repeater_less",
  "erasure": {{"model": "exponential", "kappa": {kappa}}}
}}"#
    )
}

const CYCLE: &str = r#"{
  "nodes": [{"id": "i1", "mu": 3.0}, {"id": "i2", "mu": 2.0}],
  "sources": [{"id": "s1", "lambda": 1.0, "entry": {"i1": 1.0}}],
  "routing": {"i1": {"i2": 0.5}, "i2": {"i1": 0.5}},
  "network_type": "repeater_assisted",
  "erasure": {"model": "exponential", "kappa": 1.0}
}"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn qjn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qjn")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn validate_reports_and_exits() {
    let sb = Sandbox::new();
    let ok = qjn(&["validate", p(&sb.file("t.json", &tandem(0.5, 1.0)))]);
    assert_eq!(ok.status.code(), Some(0));
    let text = stdout(&ok);
    assert!(text.contains("feed-forward"));
    assert_eq!(text.lines().filter(|l| l.starts_with('i') && l.contains(" 0.5 ")).count(), 2, "{text}");

    let hot = qjn(&["validate", p(&sb.file("hot.json", &tandem(1.2, 1.0)))]);
    assert_eq!(hot.status.code(), Some(2));
    assert!(stdout(&hot).contains("node i1 unstable"));

    let cyc = qjn(&["validate", p(&sb.file("c.json", CYCLE))]);
    assert_eq!(cyc.status.code(), Some(2));
    assert!(stdout(&cyc).contains("loop-back"));

    let bad = qjn(&["validate", p(&sb.file("bad.json", "{\"nodes\": ["))]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("syntax"));

    let missing = qjn(&["validate", p(&sb.path("absent.json"))]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn analyze_split_network() {
    let sb = Sandbox::new();
    let csv = sb.path("a.csv");
    let o = qjn(&["analyze", p(&sb.file("s.json", SPLIT)), "--csv", p(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("capacity = 0.397436"), "{text}");
    assert!(text.contains("s1>i1>i2>d") && text.contains("s1>i1>i3>d"));

    let body = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert!(lines[0].starts_with("# qjn v1, seed=none, spec_hash="));
    assert_eq!(lines[1], "source,lambda,capacity,method,route,probability,survival,contribution");
    assert_eq!(lines.len(), 4);
    assert!(!body.contains('\r'));
    let total: f64 = lines[2..].iter().map(|l| l.split(',').nth(7).unwrap().parse::<f64>().unwrap()).sum();
    let want = 0.4 * (2.0 / 3.0) * (1.6 / 2.6) + 0.6 * (2.0 / 3.0) * (1.4 / 2.4);
    assert!((total - want).abs() < 1e-15);
}

#[test]
fn analyze_tandem_and_clear_channel() {
    let sb = Sandbox::new();
    let o = qjn(&["analyze", p(&sb.file("t.json", &tandem(0.5, 1.0)))]);
    assert!(stdout(&o).contains("capacity = 0.0555556"));
    let o = qjn(&["analyze", p(&sb.file("t0.json", &tandem(0.5, 0.0)))]);
    assert!(stdout(&o).contains("capacity = 0.5 bits/sec"));

    let unknown = qjn(&["analyze", p(&sb.file("s.json", SPLIT)), "--source", "s9"]);
    assert_eq!(unknown.status.code(), Some(1));
    let cyc = qjn(&["analyze", p(&sb.file("c.json", CYCLE))]);
    assert_eq!(cyc.status.code(), Some(2));
    assert!(stderr(&cyc).contains("loop-back"));
    let hot = qjn(&["analyze", p(&sb.file("hot.json", &tandem(1.2, 1.0)))]);
    assert_eq!(hot.status.code(), Some(2));
}

#[test]
fn simulate_clear_channel_is_exact() {
    let sb = Sandbox::new();
    let csv = sb.path("e.csv");
    let o = qjn(&[
        "simulate",
        p(&sb.file("t0.json", &tandem(0.5, 0.0))),
        "--emissions",
        "5000",
        "--seed",
        "4",
        "--csv",
        p(&csv),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let body = fs::read_to_string(&csv).unwrap();
    let row: Vec<&str> = body.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "s1");
    assert_eq!(row[6], "0.5");
    assert_eq!(row[7], "0");
    assert_eq!(row[9], "true");
    assert!(body.starts_with("# qjn v1, seed=4, spec_hash="));
}

#[test]
fn simulate_cyclic_has_no_analytical_value() {
    let sb = Sandbox::new();
    let o = qjn(&["simulate", p(&sb.file("c.json", CYCLE)), "--emissions", "20000", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("n/a (loop-back)"));
}

#[test]
fn simulate_too_short_is_a_runtime_failure() {
    let sb = Sandbox::new();
    let o = qjn(&["simulate", p(&sb.file("s.json", SPLIT)), "--emissions", "10", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("insufficient data"));
}

#[test]
fn replications_do_not_depend_on_thread_count() {
    let sb = Sandbox::new();
    let spec = sb.file("s.json", SPLIT);
    let run = |threads: &str, out: &str| {
        let csv = sb.path(out);
        let o = Command::new(env!("CARGO_BIN_EXE_qjn"))
            .env("QJN_THREADS", threads)
            .args([
                "simulate",
                p(&spec),
                "--emissions",
                "20000",
                "--seed",
                "9",
                "--replications",
                "4",
                "--csv",
                p(&csv),
            ])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        fs::read(csv).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("3", "b.csv"));

    let o = Command::new(env!("CARGO_BIN_EXE_qjn"))
        .env("QJN_THREADS", "zero")
        .args(["simulate", p(&spec), "--emissions", "2000", "--seed", "9"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn trace_export_has_one_row_per_qubit() {
    let sb = Sandbox::new();
    let trace = sb.path("trace.csv");
    let o = qjn(&["simulate", p(&sb.file("s.json", SPLIT)), "--emissions", "300", "--seed", "2", "--trace", p(&trace)]);
    assert_eq!(o.status.code(), Some(0));
    let body = fs::read_to_string(trace).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[1], "qubit_id,source_id,emit_time,node_sequence,sojourn_sequence,erased,delivery_time");
    assert_eq!(lines.len(), 302);
    assert!(lines[2..].iter().all(|l| l.contains(",i1;i2,") || l.contains(",i1;i3,")));
}

#[test]
fn optimize_commands() {
    let o = qjn(&["optimize", "--topology", "tandem", "--m", "2", "--kappa", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0.438447"));

    let o = qjn(&["optimize", "--topology", "parallel", "--mu", "1", "--kappa", "1"]);
    let text = stdout(&o);
    assert!(text.contains("1.17157") && text.contains("0.5"), "{text}");

    let o = qjn(&["optimize", "--topology", "parallel", "--mu1", "2", "--mu2", "3", "--kappa", "1", "--lambda", "1.9"]);
    let text = stdout(&o);
    assert!(text.contains("golden_section") && text.contains("printed_formula"), "{text}");
    assert!(text.contains("0.3332"));

    let o = qjn(&["optimize", "--topology", "parallel", "--mu1", "2", "--mu2", "3", "--kappa", "1", "--lambda", "6"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qjn(&["optimize", "--topology", "tandem", "--m", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = qjn(&["optimize", "--topology", "tandem", "--m", "2", "--kappa", "0"]);
    assert_eq!(o.status.code(), Some(1));

    let sb = Sandbox::new();
    let o = qjn(&["optimize", p(&sb.file("t.json", &tandem(0.5, 1.0)))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0.438447"), "{}", stdout(&o));
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(2).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn sweep_kappa_at_zero_rate_is_all_zero() {
    let sb = Sandbox::new();
    let o = qjn(&[
        "sweep",
        p(&sb.file("t.json", &tandem(0.0, 1.0))),
        "--param",
        "kappa",
        "--from",
        "0",
        "--to",
        "3",
        "--steps",
        "7",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 7);
    assert!(r.iter().all(|row| row[5] == "0" && row[4] == "true"));
}

#[test]
fn sweep_flags_infeasible_points() {
    let sb = Sandbox::new();
    let spec = sb.file("t.json", &tandem(0.5, 1.0));
    let o = qjn(&["sweep", p(&spec), "--param", "lambda", "--from", "0.5", "--to", "1.5", "--steps", "3"]);
    let r = rows(&stdout(&o));
    assert_eq!(r.iter().map(|row| row[4].as_str()).collect::<Vec<_>>(), ["true", "false", "false"]);
    assert_eq!(r[1][5], "");

    let o = qjn(&["sweep", p(&spec), "--param", "mu", "--node", "i2", "--from", "0.2", "--to", "2", "--steps", "4"]);
    let r = rows(&stdout(&o));
    assert_eq!(r[0][4], "false");
    assert_eq!(r[3][4], "true");

    let o = qjn(&["sweep", p(&spec), "--param", "mu", "--from", "0.2", "--to", "2", "--steps", "4"]);
    assert_eq!(o.status.code(), Some(1));
    let o = qjn(&["sweep", p(&spec), "--param", "delta", "--from", "0", "--to", "1", "--steps", "4"]);
    assert_eq!(o.status.code(), Some(1));
    let o = qjn(&["sweep", p(&spec), "--param", "lambda", "--from", "1", "--to", "0", "--steps", "4"]);
    assert_eq!(o.status.code(), Some(1));
    let o = qjn(&["sweep", p(&spec), "--param", "lambda", "--from", "0", "--to", "1", "--steps", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_with_simulation_carries_intervals() {
    let sb = Sandbox::new();
    let spec = sb.file("s.json", SPLIT);
    let args = [
        "sweep",
        p(&spec),
        "--param",
        "kappa",
        "--from",
        "0.5",
        "--to",
        "1",
        "--steps",
        "2",
        "--simulate",
        "--seed",
        "5",
        "--emissions",
        "50000",
    ];
    let a = qjn(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let text = stdout(&a);
    assert!(text.starts_with("# qjn v1, seed=5, spec_hash="));
    for row in rows(&text) {
        let analytical: f64 = row[5].parse().unwrap();
        let sim: f64 = row[6].parse().unwrap();
        let hw: f64 = row[7].parse().unwrap();
        assert!(hw > 0.0 && (sim - analytical).abs() < 4.0 * hw, "{row:?}");
    }
    assert_eq!(text, stdout(&qjn(&args)));

    let o = qjn(&["sweep", p(&spec), "--param", "kappa", "--from", "0", "--to", "1", "--steps", "2", "--simulate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn presets_are_complete_and_deterministic() {
    for (preset, n) in [("fig3", 200), ("fig5", 202), ("fig6", 200)] {
        let a = stdout(&qjn(&["sweep", "--preset", preset]));
        assert_eq!(rows(&a).len(), n);
        assert_eq!(a, stdout(&qjn(&["sweep", "--preset", preset])));
    }
    let o = qjn(&["sweep", "--preset", "fig3", "--param", "kappa"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(qjn(&["bogus"]).status.code(), Some(1));
    assert_eq!(qjn(&[]).status.code(), Some(1));
    assert_eq!(qjn(&["--help"]).status.code(), Some(0));
}

fn example(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../networks").join(name).to_str().unwrap().to_string()
}

#[test]
fn bundled_networks() {
    for (name, code) in [("tandem.json", 0), ("split.json", 0), ("two_sources.json", 0), ("loopback.json", 2)] {
        assert_eq!(qjn(&["validate", &example(name)]).status.code(), Some(code), "{name}");
    }
    let o = qjn(&["analyze", &example("two_sources.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("(quadrature)"), "{}", stdout(&o));

    // the rate search runs right up to the stability edge of the table model
    let o = qjn(&["optimize", &example("two_sources.json"), "--source", "s2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("grid_refine"));

    let o = qjn(&[
        "sweep",
        &example("two_sources.json"),
        "--param",
        "delta",
        "--source",
        "s2",
        "--node",
        "i4",
        "--from",
        "0",
        "--to",
        "1",
        "--steps",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 7);
}
