use std::path::Path;
use std::process::{Command, Output};

fn watson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_watson"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = watson(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sorted_listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn three_variable_library() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny.csv");
    std::fs::write(&data, "a,b,c\nx,p,u\ny,q,v\nx,q,u\ny,p,u\n").unwrap();
    let out = dir.path().join("plots");
    let manifest = ok(&["plots", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(manifest.lines().count(), 6);
    let files = sorted_listing(&out);
    assert_eq!(files.iter().filter(|f| f.ends_with("_bar1.svg")).count(), 3);
    assert_eq!(files.iter().filter(|f| f.ends_with("_panel2.svg")).count(), 3);
    assert!(!files.iter().any(|f| f.ends_with(".tmp")));
    assert!(manifest.contains("tiny_a-b_panel2.svg\tpanel2\ta,b"));

    let out3 = dir.path().join("three");
    ok(&["plots", "--data", s(&data), "--out", s(&out3), "--vars", "a,b,c"]);
    assert_eq!(sorted_listing(&out3), vec!["tiny_a-b-c_multipanel3.svg"]);
}

#[test]
fn library_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&["synth", "--kind", "survey", "--size", "3000", "--seed", "3", "--out", s(&gen)]);
    let data = gen.join("survey.csv");
    let codebook = gen.join("survey_codebook.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let ma = ok(&["plots", "--data", s(&data), "--codebook", s(&codebook), "--out", s(&a)]);
    let mb = ok(&["plots", "--data", s(&data), "--codebook", s(&codebook), "--out", s(&b)]);
    assert_eq!(ma, mb);
    assert_eq!(ma.lines().count(), 7 + 21);
    for f in sorted_listing(&a) {
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn synth_is_deterministic_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["synth", "--kind", "survey", "--size", "500", "--seed", seed, "--out", s(&out)]);
        std::fs::read(out.join("survey.csv")).unwrap()
    };
    let first = run("one", "7");
    assert_eq!(first, run("two", "7"));
    assert_ne!(first, run("three", "8"));
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 501);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 7);
}

#[test]
fn cohort_and_recommend() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("cohort");
    let listing = ok(&["synth", "--kind", "cohort", "--size", "1000", "--out", s(&gen)]);
    assert_eq!(listing.lines().count(), 3);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(gen.join("cohort_truth.json")).unwrap()).unwrap();
    assert_eq!(truth["therapies"].as_array().unwrap().len(), 4);

    let patient = dir.path().join("p.json");
    std::fs::write(&patient, r#"{"id": "x", "features": {"age": 25, "bmi": 20, "sex": "M"}}"#).unwrap();
    let cohort = gen.join("cohort.csv");
    let schema = gen.join("cohort_schema.json");
    let out = ok(&["recommend", "--cohort", s(&cohort), "--schema", s(&schema), "--patient", s(&patient)]);
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["best"], "T1");
    assert_eq!(r["per_therapy"]["T1"]["used_k"], 30);

    let strict = watson(&[
        "recommend", "--cohort", s(&cohort), "--schema", s(&schema), "--patient", s(&patient), "--k", "5000",
        "--k-min", "5000",
    ]);
    assert!(!strict.status.success());
    assert!(String::from_utf8_lossy(&strict.stderr).contains("error[NoEligibleTherapy]"));
}

#[test]
fn failures_exit_nonzero_with_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ragged.csv");
    std::fs::write(&data, "a,b\n1,2\n3\n").unwrap();
    let out = watson(&["plots", "--data", s(&data), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[RaggedRow]"));
    assert!(out.stdout.is_empty());

    let bad_kind = watson(&["synth", "--kind", "census", "--out", s(dir.path())]);
    assert!(!bad_kind.status.success());
}

#[test]
fn build_and_questions() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&["synth", "--kind", "survey", "--size", "2000", "--seed", "1", "--out", s(&gen)]);
    let data = gen.join("survey.csv");
    let table = dir.path().join("table.json");
    ok(&["build", "--data", s(&data), "--out", s(&table)]);
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&table).unwrap()).unwrap();
    let counts = t["counts"].as_array().unwrap();
    assert_eq!(counts.iter().map(|c| c.as_u64().unwrap()).sum::<u64>(), 2000);

    let qs = ok(&["questions", "--data", s(&data), "--vars", "department,choice_rank", "--max-q", "2"]);
    let qs: serde_json::Value = serde_json::from_str(&qs).unwrap();
    assert_eq!(qs.as_array().unwrap().len(), 2);
}
