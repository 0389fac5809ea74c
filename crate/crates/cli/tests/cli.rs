use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

const MINMAX_CSV: &str = "\
test,u1,u2,u3,u4,error
t1,0,1,1,0,1
t2,0,0,1,1,1
t3,0,0,1,0,1
t4,1,0,0,1,0
t5,1,1,0,0,0
";

const SCENARIO2_CSV: &str = "\
test,u1,u2,u3,u4,error
t1,0,0,1,1,1
t2,1,1,0,0,1
";

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("minmax.csv"), MINMAX_CSV).unwrap();
        std::fs::write(dir.path().join("scenario2.csv"), SCENARIO2_CSV).unwrap();
        std::fs::write(
            dir.path().join("single.csv"),
            "test,u1,u2,error\nt1,1,0,1\nt2,0,1,0\n",
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn doric(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doric"))
        .args(args)
        .output()
        .unwrap()
}

fn doric_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_doric"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Data rows of a table, split into whitespace-separated cells.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect()
}

#[test]
fn rank_by_causal_likelihood() {
    let f = Fixture::new();
    let out = doric(&[
        "rank",
        "--matrix",
        p(&f.path("minmax.csv")),
        "--measure",
        "cl",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(
        text,
        "rank  unit  score\n   1  u3    0.555555555556\n   2  u2    0.166666666667\n   3  u4    0.166666666667\n   4  u1    0\n"
    );

    let out = doric(&[
        "rank",
        "-m",
        p(&f.path("minmax.csv")),
        "--measure",
        "cl",
        "--not-faulty",
        "u1",
    ]);
    assert!(out.status.success());
    let r = rows(&stdout(&out));
    assert_eq!(r.len(), 3);
    assert_eq!(r[0][1..], ["u3".to_owned(), "0.555555555556".to_owned()]);
}

#[test]
fn rank_by_measure() {
    let f = Fixture::new();
    let out = doric(&["rank", "-m", p(&f.path("minmax.csv")), "--measure", "wong2"]);
    assert!(out.status.success());
    let r = rows(&stdout(&out));
    assert_eq!(r[0][1..], ["u3".to_owned(), "3".to_owned()]);
    assert_eq!(r[3][1..], ["u1".to_owned(), "-2".to_owned()]);

    let out = doric(&[
        "rank",
        "-m",
        p(&f.path("minmax.csv")),
        "--measure",
        "gp05",
        "--smoothing",
        "1/2",
        "--json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ranking"].as_array().unwrap().len(), 4);
}

#[test]
fn rank_json_is_exact() {
    let f = Fixture::new();
    let out = doric(&["rank", "-m", p(&f.path("minmax.csv")), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ranking"][0]["unit"], "u3");
    assert_eq!(v["ranking"][0]["score"]["numerator"], "5");
    assert_eq!(v["ranking"][0]["score"]["denominator"], "9");
}

#[test]
fn output_is_deterministic() {
    let f = Fixture::new();
    let m = f.path("minmax.csv");
    let args = ["rank", "-m", p(&m), "--measure", "ochiai"];
    assert_eq!(doric(&args).stdout, doric(&args).stdout);
}

#[test]
fn oracle_queries() {
    let f = Fixture::new();
    let m = f.path("minmax.csv");
    let first = |q: &str| {
        let out = doric(&["oracle", "-m", p(&m), "-q", q]);
        assert!(out.status.success(), "{q}");
        stdout(&out).split_whitespace().next().unwrap().to_owned()
    };
    assert_eq!(first("P(f3)"), "1");
    assert_eq!(first("P(H2 | u2)"), "1/6");
    assert_eq!(first("P(true)"), "1");
    assert_eq!(
        stdout(&doric(&["oracle", "-m", p(&m), "-q", "P(H3 | u3)"])),
        "5/9  0.555555555556\n"
    );

    let out = doric(&["oracle", "-m", p(&m), "-q", "P(h9)"]);
    assert_eq!(out.status.code(), Some(3));
    let out = doric(&["oracle", "-m", p(&m), "-q", "P(u1 | false)"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oracle_cap() {
    let f = Fixture::new();
    let wide = format!(
        "test,{},error\nt1,{},1\n",
        (1..=21)
            .map(|i| format!("u{i}"))
            .collect::<Vec<_>>()
            .join(","),
        vec!["1"; 21].join(",")
    );
    std::fs::write(f.path("wide.csv"), wide).unwrap();
    let out = doric(&["oracle", "-m", p(&f.path("wide.csv")), "-q", "P(h1)"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn localize_simulations() {
    let f = Fixture::new();
    let out = doric(&[
        "localize",
        "-m",
        p(&f.path("scenario2.csv")),
        "--faults",
        "u2",
        "--method",
        "clu",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let r = rows(&text);
    assert_eq!(
        r[0][1..],
        [
            "u1".to_owned(),
            "0.333333333333".to_owned(),
            "clean".to_owned()
        ]
    );
    assert_eq!(
        r[1][1..],
        ["u2".to_owned(), "1".to_owned(), "faulty".to_owned()]
    );
    assert!(text.ends_with("accuracy: 1\n"));

    let out = doric(&[
        "localize",
        "-m",
        p(&f.path("minmax.csv")),
        "--faults",
        "u3",
        "--method",
        "cln",
    ]);
    assert!(stdout(&out).ends_with("accuracy: 0\n"));

    let out = doric(&[
        "localize",
        "-m",
        p(&f.path("minmax.csv")),
        "--faults",
        "u1",
        "--method",
        "cln",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["accuracy"], 3);
    assert_eq!(v["inspections"][3]["unit"], "u1");

    let out = doric(&[
        "localize",
        "-m",
        p(&f.path("minmax.csv")),
        "--faults",
        "u3",
        "--method",
        "wong2",
    ]);
    assert!(stdout(&out).ends_with("accuracy: 0\n"));
}

#[test]
fn cl_rank_order_matches_cln_inspection_order() {
    let f = Fixture::new();
    let m = f.path("minmax.csv");
    let ranked: Vec<String> = rows(&stdout(&doric(&["rank", "-m", p(&m)])))
        .into_iter()
        .map(|r| r[1].clone())
        .collect();
    let out = doric(&["localize", "-m", p(&m), "--faults", "u1", "--method", "cln"]);
    let inspected: Vec<String> = rows(&stdout(&out))
        .into_iter()
        .filter(|r| r.len() == 4)
        .map(|r| r[1].clone())
        .collect();
    assert_eq!(ranked, inspected);
}

#[test]
fn localize_inconsistent_knowledge() {
    let f = Fixture::new();
    // the fault never runs, so clearing u1 leaves t1 unexplained
    let out = doric(&[
        "localize",
        "-m",
        p(&f.path("single.csv")),
        "--faults",
        "u2",
        "--method",
        "clu",
    ]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn interactive_localize() {
    let f = Fixture::new();
    let out = doric_stdin(
        &[
            "localize",
            "-m",
            p(&f.path("scenario2.csv")),
            "--interactive",
        ],
        "clean\nnonsense\nfaulty\n",
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("inspect u1"));
    assert!(text.contains("inspect u2    1  [clean/faulty]?"));
    assert!(text.ends_with("accuracy: 1\n"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown verdict"));

    let out = doric_stdin(
        &[
            "localize",
            "-m",
            p(&f.path("scenario2.csv")),
            "--interactive",
            "--json",
        ],
        "clean\n",
    );
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "stopped");
    assert_eq!(v["accuracy"], serde_json::Value::Null);
}

#[test]
fn usage_and_input_errors() {
    let f = Fixture::new();
    let m = f.path("minmax.csv");
    assert_eq!(doric(&["rank"]).status.code(), Some(2));
    assert_eq!(
        doric(&["rank", "-m", p(&m), "--measure", "nope"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        doric(&[
            "rank",
            "-m",
            p(&m),
            "--smoothing",
            "x",
            "--measure",
            "ochiai"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        doric(&["localize", "-m", p(&m), "--faults", "u1", "--method", "zzz"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        doric(&["rank", "-m", p(&f.path("missing.csv"))])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        doric(&["rank", "-m", p(&m), "--not-faulty", "u9"])
            .status
            .code(),
        Some(3)
    );
    std::fs::write(f.path("bad.csv"), "test,u1,error\nt1,2,1\n").unwrap();
    let out = doric(&["rank", "-m", p(&f.path("bad.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2, column 2"));
    // knowledge that leaves t3 without a cause
    assert_eq!(
        doric(&["rank", "-m", p(&m), "--not-faulty", "u3"])
            .status
            .code(),
        Some(5)
    );
}

#[test]
fn eval_writes_reports() {
    let f = Fixture::new();
    let corpus = f.path("corpus");
    std::fs::create_dir(&corpus).unwrap();
    std::fs::write(corpus.join("minmax.csv"), MINMAX_CSV).unwrap();
    std::fs::write(corpus.join("minmax.faults"), "u3\n").unwrap();
    std::fs::write(
        f.path("bench.json"),
        r#"{"corpus": {"dir": "corpus"}, "methods": ["cln", "clu", "wong2", "constant"]}"#,
    )
    .unwrap();
    let out_path = f.path("report.json");
    let out = doric(&[
        "eval",
        "--config",
        p(&f.path("bench.json")),
        "--out",
        p(&out_path),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.starts_with("method"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["schema"], "doric-report/1");
    assert_eq!(report["methods"][3]["mean_accuracy"], 2.0);
    let csv = std::fs::read_to_string(f.path("report.csv")).unwrap();
    assert!(csv.contains("cln,minmax,0,"));

    std::fs::write(
        f.path("synth.json"),
        r#"{"corpus": {"synthetic": {"units": 10, "tests": 12, "coverage_density": 0.4,
            "fault_count": 2, "fail_prob": 0.9, "count": 5, "seed": 3}}, "methods": ["cln", "ochiai"], "n_max": 4}"#,
    )
    .unwrap();
    let a = doric(&["eval", "--config", p(&f.path("synth.json")), "--json"]);
    let b = doric(&["eval", "--config", p(&f.path("synth.json")), "--json"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    std::fs::write(f.path("broken.json"), r#"{"methods": ["cln"]}"#).unwrap();
    assert_eq!(
        doric(&["eval", "--config", p(&f.path("broken.json"))])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn serve_rejects_bad_cors() {
    let out = doric(&["serve", "--port", "0", "--cors", "bad\norigin"]);
    assert_eq!(out.status.code(), Some(2));
}
