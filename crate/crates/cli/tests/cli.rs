use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::{Command, Output};

use cfaudit_core::format::{parse_augmented, parse_scm};
use cfaudit_core::invariance::AuditReport;
use cfaudit_core::{Distribution, DistributionDoc, ExactScm, Prob, Value};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfaudit")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&[])), 1);
}

#[test]
fn bundled_models_match_builders() {
    for (name, builtin) in [("linear.scm.json", "linear"), ("review.scm.json", "review")] {
        let out = run(&["model", builtin]);
        assert_eq!(code(&out), 0);
        assert_eq!(stdout(&out), std::fs::read_to_string(fixture(name)).unwrap());
        let out = run(&["validate", path(&fixture(name))]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
}

#[test]
fn validation_failure_lists_violations() {
    let text = std::fs::read_to_string(fixture("linear.scm.json")).unwrap();
    let bad = text.replacen("\"1/5\"", "\"1/4\"", 1);
    assert_ne!(bad, text);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.scm.json");
    std::fs::write(&file, bad).unwrap();
    let out = run(&["validate", file.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("U_X"), "{}", stderr(&out));
}

#[test]
fn truncated_or_missing_file_is_a_parse_error() {
    let text = std::fs::read_to_string(fixture("linear.scm.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cut.scm.json");
    std::fs::write(&file, &text[..text.len() / 2]).unwrap();
    let out = run(&["validate", file.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
    assert_eq!(code(&run(&["validate", "/nonexistent/model.json"])), 3);
}

#[test]
fn linear_counterfactuals() {
    let m = fixture("linear.scm.json");
    let out = run(&["counterfactual", path(&m), "--target", "X", "--do", "Z=1", "--evidence", "X=1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().next(), Some("1: 1/3, 3: 2/3"));
    let out =
        run(&["counterfactual", path(&m), "--target", "X", "--do", "Z=1", "--evidence", "X=1", "--guess-context", "Z"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().next(), Some("3: 1"));
    let out = run(&[
        "counterfactual",
        path(&m),
        "--target",
        "X",
        "--do",
        "Z=-1",
        "--evidence",
        "X=1",
        "--guess-context",
        "Z",
    ]);
    assert_eq!(stdout(&out).lines().next(), Some("1: 1"));
}

#[test]
fn counterfactual_query_errors() {
    let m = fixture("linear.scm.json");
    let out = run(&["counterfactual", path(&m), "--target", "X", "--do", "Z=1", "--evidence", "X=5"]);
    assert_eq!(code(&out), 4);
    let out = run(&["counterfactual", path(&m), "--target", "X", "--evidence", "X=3", "--evidence", "Z=-1"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("impossible evidence"));
    let out = run(&["counterfactual", path(&m), "--target", "X", "--evidence", "X"]);
    assert_eq!(code(&out), 3);
    let out = run(&["counterfactual", path(&m), "--target", "X", "--evidence", "X=1", "--guess-context", "Z"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn json_distribution_round_trips() {
    let m = fixture("linear.scm.json");
    let out =
        run(&["counterfactual", path(&m), "--target", "X", "--do", "Z=-1", "--evidence", "X=1", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let doc: DistributionDoc = serde_json::from_str(&stdout(&out)).unwrap();
    let d: Distribution<Prob> = Distribution::from_doc(&doc).unwrap();
    assert_eq!(d.to_string(), "-1: 1/3, 1: 2/3");
    assert_eq!(serde_json::to_string_pretty(&d.to_doc()).unwrap() + "\n", stdout(&out));
}

#[test]
fn audits() {
    let out = run(&["audit", path(&fixture("linear.scm.json"))]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("cda partition: {-3, -1} {1, 3}"));
    assert!(text.contains("verdict: cda_strictly_finer"));

    let out = run(&["audit", path(&fixture("review.scm.json")), "--format", "json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), std::fs::read_to_string(fixture("review.audit.json")).unwrap());
    let report: AuditReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", stdout(&out));
}

#[test]
fn audit_of_independent_input_is_equal_and_discrete() {
    let scm: ExactScm = parse_scm(
        r#"{
          "variables": [{"name": "Z", "kind": "exogenous", "domain": ["a", "b"]},
                        {"name": "U", "kind": "exogenous", "domain": ["0", "1"]},
                        {"name": "X", "kind": "endogenous", "domain": ["0", "1"]}],
          "priors": {"Z": {"a": "1/2", "b": "1/2"}, "U": {"0": "1/3", "1": "2/3"}},
          "equations": [{"child": "X", "parents": ["U"],
                         "table": [{"given": ["0"], "value": "0"}, {"given": ["1"], "value": "1"}]}]
        }"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("indep.scm.json");
    std::fs::write(&file, cfaudit_core::format::scm_to_json(&scm)).unwrap();
    let out = run(&["audit", file.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("cf partition:  {0} {1}"));
    assert!(stdout(&out).contains("verdict: equal"));
}

fn augment(mode: &[&str]) -> Vec<cfaudit_core::augment::AugmentedExample<Prob>> {
    let m = fixture("review.scm.json");
    let d = fixture("review_single.jsonl");
    let mut args = vec!["augment", path(&m), "--data", path(&d), "--mode"];
    args.extend_from_slice(mode);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    parse_augmented(&stdout(&out)).unwrap()
}

fn x_primes(records: &[cfaudit_core::augment::AugmentedExample<Prob>]) -> BTreeSet<String> {
    records.iter().map(|r| r.x_prime.to_string()).collect()
}

#[test]
fn review_augmentation() {
    let guess = augment(&["guess"]);
    assert_eq!(guess.len(), 2);
    assert_eq!(x_primes(&guess), ["good_1|negative", "good_1|positive"].map(String::from).into());
    let full = augment(&["full"]);
    assert_eq!(x_primes(&full), ["good_1|negative", "good_1|neutral", "good_1|positive"].map(String::from).into());
    assert_eq!(full.len(), 4);
    let post = augment(&["posterior", "--tau", "0"]);
    assert_eq!(x_primes(&post), x_primes(&full));
    let half = augment(&["posterior", "--tau", "1/2"]);
    assert_eq!(x_primes(&half), x_primes(&guess));
    for r in guess.iter().chain(&full).chain(&post) {
        assert_eq!(r.y, Value::from("helpful"));
        assert_eq!(r.source_x, Value::from("good_1|positive"));
    }
}

#[test]
fn sampled_augmentation_is_reproducible_and_sound() {
    let a = augment(&["full", "--sample-k", "50", "--seed", "3"]);
    let b = augment(&["full", "--sample-k", "50", "--seed", "3"]);
    assert_eq!(a, b);
    assert_eq!(a.len(), 100);
    assert!(x_primes(&a).is_subset(&x_primes(&augment(&["full"]))));
    let c = augment(&["posterior", "--context-sample", "3", "--seed", "1"]);
    assert!(x_primes(&c).is_subset(&x_primes(&augment(&["full"]))));
}

#[test]
fn augment_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("aug.jsonl");
    let out = run(&[
        "augment",
        path(&fixture("review.scm.json")),
        "--data",
        path(&fixture("review_single.jsonl")),
        "--mode",
        "guess",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).is_empty());
    let text = std::fs::read_to_string(out_file).unwrap();
    assert_eq!(parse_augmented::<Prob>(&text).unwrap().len(), 2);
}

#[test]
fn augment_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    std::fs::write(
        &data,
        "{\"x\": \"good_1|positive\", \"y\": \"helpful\"}\n{\"x\": \"good_1|loud\", \"y\": \"helpful\"}\n",
    )
    .unwrap();
    let m = fixture("review.scm.json");
    let out = run(&["augment", path(&m), "--data", data.to_str().unwrap(), "--mode", "full"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("example 1"), "{}", stderr(&out));
    std::fs::write(&data, "{\"x\": \"good_1|positive\"}\n").unwrap();
    let out = run(&["augment", path(&m), "--data", data.to_str().unwrap(), "--mode", "full"]);
    assert_eq!(code(&out), 3);
    let out = run(&[
        "augment",
        path(&m),
        "--data",
        path(&fixture("review_single.jsonl")),
        "--mode",
        "posterior",
        "--tau",
        "1",
    ]);
    assert_eq!(code(&out), 1);
    let out = run(&[
        "augment",
        path(&m),
        "--data",
        path(&fixture("review_single.jsonl")),
        "--mode",
        "posterior",
        "--tau",
        "19/20",
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn demos_match_golden_reports() {
    for (which, name) in [("appendix", "appendix.report"), ("review", "review.report")] {
        let out = run(&["demo", which, "--format", "json"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert_eq!(stdout(&out), std::fs::read_to_string(fixture(&format!("{name}.json"))).unwrap());
        let out = run(&["demo", which]);
        assert_eq!(code(&out), 0);
        assert_eq!(stdout(&out), std::fs::read_to_string(fixture(&format!("{name}.txt"))).unwrap());
    }
    assert!(std::fs::read_to_string(fixture("appendix.report.txt")).unwrap().contains("verdict: cda_strictly_finer"));
}

#[test]
fn demo_parameters() {
    assert_eq!(code(&run(&["demo", "review", "--train-n", "0"])), 1);
    assert_eq!(code(&run(&["demo", "review", "--test-prior-ux", "3/2"])), 1);
    let out = run(&["demo", "review", "--train-n", "40", "--seed", "5"]);
    assert!(matches!(code(&out), 0 | 5), "{}", stderr(&out));
}

#[test]
fn sampled_draws_match_recorded_fixture() {
    let out = run(&[
        "augment",
        path(&fixture("review.scm.json")),
        "--data",
        path(&fixture("review_single.jsonl")),
        "--mode",
        "full",
        "--sample-k",
        "5",
        "--seed",
        "0",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), std::fs::read_to_string(fixture("review_full_k5_seed0.jsonl")).unwrap());
    let bare = augment(&["guess", "--sample-k"]);
    assert_eq!(bare.len(), 2);
}
