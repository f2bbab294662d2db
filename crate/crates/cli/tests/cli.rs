use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn stelle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stelle"))
        .args(args)
        .env("STELLE_THREADS", "2")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = stelle(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(dir: &Path) -> PathBuf {
    let model = dir.join("model.json");
    let concepts = dir.join("concepts.txt");
    let train = data("pulse_train.csv");
    let out = ok(&["gen-concepts", "--data", s(&train), "--out", s(&concepts), "--per-var", "25", "--min-total", "50", "--seed", "3"]);
    assert!(out.contains("concepts\t50"), "{out}");
    ok(&["train", "--data", s(&train), "--concepts", s(&concepts), "--out", s(&model), "--seed", "3", "--epochs", "60", "--mc", "128"]);
    model
}

#[test]
fn train_predict_explain_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path());
    let (train, test) = (data("pulse_train.csv"), data("pulse_test.csv"));

    let a = ok(&["predict", "--model", s(&model), "--data", s(&test)]);
    let b = ok(&["predict", "--model", s(&model), "--data", s(&test)]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 21);
    // probabilities carry six significant digits
    let p = a.lines().nth(1).unwrap().split('\t').nth(2).unwrap();
    assert_eq!(p.chars().filter(char::is_ascii_digit).skip_while(|&c| c == '0').count(), 6, "{p}");

    let metrics = dir.path().join("local.json");
    let local = ok(&["explain-local", "--model", s(&model), "--data", s(&test), "--train-data", s(&train), "--cum", "0.8", "--metrics", s(&metrics)]);
    assert_eq!(local.lines().count(), 20);
    assert!(local.lines().all(|l| l.split('\t').count() == 4 && !l.ends_with('\t')));
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 20);

    let budget = ok(&["explain-local", "--model", s(&model), "--data", s(&test), "--train-data", s(&train), "--budget", "1"]);
    assert_eq!(budget.lines().count(), 20);

    let global = ok(&["explain-global", "--model", s(&model), "--train-data", s(&train), "--coverage", "0.5"]);
    assert_eq!(global.lines().count(), 2);
    let one = ok(&["explain-global", "--model", s(&model), "--train-data", s(&train), "--class", "1"]);
    assert!(one.starts_with("1\t"));

    let eval = ok(&["evaluate", "--model", s(&model), "--data", s(&test), "--train-data", s(&train)]);
    let acc: f64 = eval.lines().next().unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!(acc >= 0.9, "{eval}");
    for key in ["global_micro", "f1", "local\t", "global\t"] {
        assert!(eval.contains(key), "{key} missing from {eval}");
    }
}

#[test]
fn failures_are_one_line_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let cases: [(Vec<&str>, i32); 3] = [
        (vec!["predict", "--model", s(&missing), "--data", "x.csv"], 3),
        (vec!["predict", "--bogus"], 2),
        (vec!["explain-local", "--model", "m", "--data", "d", "--train-data", "t", "--budget", "1", "--cum", "0.5"], 2),
    ];
    for (args, code) in cases {
        let out = stelle(&args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error:"));
    }

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,0,0,1,2\na,0,1,1\n").unwrap();
    let out = stelle(&["gen-concepts", "--data", s(&bad), "--out", s(&dir.path().join("c.txt"))]);
    assert_eq!(out.status.code(), Some(4));

    let out = stelle(&["gen-concepts", "--data", s(&data("pulse_train.csv")), "--out", "c.txt", "--sim-threshold", "2"]);
    assert_eq!(out.status.code(), Some(5));
}
