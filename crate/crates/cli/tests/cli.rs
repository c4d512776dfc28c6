use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name)
}

fn wshsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wshsa"))
        .args(args)
        .env_remove("WSHSA_BUDGET")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_example_one() {
    let out = wshsa(&["analyze", path(&corpus("example_one.json"))]);
    assert!(out.status.success());
    let text = stdout(&out);
    for line in [
        "a_star: 3\n",
        "d_star: 4\n",
        "class: C1Case3\n",
        "optimal_total_key_rate: 4 (exact)\n",
    ] {
        assert!(text.contains(line), "missing {line:?} in\n{text}");
    }
}

#[test]
fn analyze_example_two_lists_program() {
    let text = stdout(&wshsa(&["analyze", path(&corpus("example_two.json"))]));
    assert!(text.contains("class: C2\n"));
    assert!(text.contains("b_star: 1/2\n"));
    assert!(text.contains("program:\n"));
    assert!(
        text.contains("program_solution: [b_{2,1}=1/2, b_{2,2}=1/2, b_{2,3}=1/2, t=1/2]\n"),
        "{text}"
    );
}

#[test]
fn analyze_empty_families() {
    let text = stdout(&wshsa(&["analyze", path(&corpus("empty_case.json"))]));
    assert!(text.contains("a_star: 0\n"));
    assert!(text.contains("class: C1Case4\n"));
    assert!(text.contains("optimal_total_key_rate: 0 (exact)\n"));
}

#[test]
fn rate_example_one() {
    let out = wshsa(&["rate", path(&corpus("example_one.json"))]);
    assert!(stdout(&out).contains("optimal_total_key_rate: 4 (exact)\n"));
}

#[test]
fn synthesize_and_verify_example_two() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = dir.path().join("scheme.json");
    let report = dir.path().join("report.txt");
    let out = wshsa(&[
        "synthesize",
        path(&corpus("example_two.json")),
        "--verify",
        "--scheme-out",
        scheme.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("achieved_rate: 5/2\n"));
    assert!(text.contains("security: pass\n"));
    let again = wshsa(&[
        "verify",
        path(&corpus("example_two.json")),
        "--scheme",
        scheme.to_str().unwrap(),
    ]);
    assert!(again.status.success());
}

#[test]
fn synthesis_is_byte_identical_across_runs() {
    let instance = corpus("example_one.json");
    let args = ["synthesize", path(&instance), "--seed", "5", "--verify"];
    let a = wshsa(&args);
    let b = wshsa(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_example_one() {
    let out = wshsa(&[
        "simulate",
        path(&corpus("example_one.json")),
        "--scheme",
        path(&corpus("schemes/example_one.json")),
        "--seed",
        "7",
        "--rounds",
        "100",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("summary: 100/100 correct sums\n"));
}

#[test]
fn audit_reference_scheme() {
    let out = wshsa(&[
        "audit",
        path(&corpus("example_one.json")),
        "--scheme",
        path(&corpus("schemes/example_one.json")),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("lemma_violations: 0\n"));
}

#[test]
fn exhaustive_cross_check() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = dir.path().join("f2.json");
    let text = fs::read_to_string(corpus("schemes/example_one.json")).unwrap();
    fs::write(&scheme, text.replace("\"q\": 5", "\"q\": 2")).unwrap();
    let out = wshsa(&[
        "verify",
        path(&corpus("example_one.json")),
        "--scheme",
        scheme.to_str().unwrap(),
        "--exhaustive",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("mismatches: 0\n"));
}

#[test]
fn sweep_matches_golden() {
    let out = wshsa(&["sweep", path(&corpus(""))]);
    assert!(out.status.success());
    let golden = fs::read_to_string(corpus("sweep.golden.tsv")).unwrap();
    assert_eq!(stdout(&out), golden);
}

#[test]
fn sweep_of_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = wshsa(&["sweep", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 1);
}

#[test]
fn insecure_scheme_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = dir.path().join("leaky.json");
    let text = fs::read_to_string(corpus("schemes/example_one.json")).unwrap();
    let leaky = text
        .replace(
            "{\"user\": [1, 1], \"rows\": [[1, 0, 0, 0]]}",
            "{\"user\": [1, 1], \"rows\": [[0, 0, 0, 0]]}",
        )
        .replace("[[-1, -1, -1, -1]]", "[[0, -1, -1, -1]]");
    fs::write(&scheme, leaky).unwrap();
    let out = wshsa(&[
        "verify",
        path(&corpus("example_one.json")),
        "--scheme",
        scheme.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("security: FAIL\n"));
}

#[test]
fn exit_codes() {
    let missing = wshsa(&["analyze", "/nonexistent/instance.json"]);
    assert_eq!(missing.status.code(), Some(2));

    let infeasible = wshsa(&["synthesize", path(&corpus("infeasible_pair.json"))]);
    assert_eq!(infeasible.status.code(), Some(3));

    let budget = wshsa(&[
        "verify",
        path(&corpus("example_one.json")),
        "--scheme",
        path(&corpus("schemes/example_one.json")),
        "--exhaustive",
        "--state-budget",
        "100",
    ]);
    assert_eq!(budget.status.code(), Some(4));

    let mismatch = wshsa(&[
        "verify",
        path(&corpus("example_one.json")),
        "--scheme",
        path(&corpus("schemes/example_two.json")),
    ]);
    assert_eq!(mismatch.status.code(), Some(5));

    let no_scheme = wshsa(&["verify", path(&corpus("example_one.json"))]);
    assert_eq!(no_scheme.status.code(), Some(2));
}

#[test]
fn no_closure_rejects_open_families() {
    let open = corpus("strong_security.json");
    assert!(wshsa(&["rate", path(&open)]).status.success());
    let out = wshsa(&["rate", path(&open), "--no-closure"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("monotone"));
}

#[test]
fn budget_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_wshsa"))
        .args(["synthesize", path(&corpus("example_one.json")), "--verify"])
        .env("WSHSA_BUDGET", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
