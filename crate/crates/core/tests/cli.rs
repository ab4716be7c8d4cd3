use std::path::Path;
use std::process::{Command, Output};

fn tugwar(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tugwar"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_fields_with_provenance_header() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tugwar(
        &[
            "solve", "--p", "3", "--eps", "0.1", "--method", "both", "--fd-h", "0.05",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict: PASS"));
    for f in ["dpp_field.csv", "fd_field.csv", "convergence.csv"] {
        let text = std::fs::read_to_string(tmp.path().join(f)).unwrap();
        assert!(text.starts_with("# tugwar 0.1.0 config="), "{f}");
    }
    let j = read_json(&tmp.path().join("solve.json"));
    assert_eq!(j["tool"], "tugwar 0.1.0");
    assert_eq!(j["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn solve_without_p_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(tugwar(&["solve"], tmp.path()).status.code(), Some(2));
    assert_eq!(
        tugwar(&["solve", "--p", "0.5"], tmp.path()).status.code(),
        Some(2)
    );
    assert_eq!(tugwar(&["bogus"], tmp.path()).status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("solve.json.in");
    std::fs::write(
        &cfg,
        r#"{"p": 2.0, "eps": 0.2, "method": "fd", "fd_h": 0.1}"#,
    )
    .unwrap();
    let out = tmp.path().join("run");
    let o = tugwar(
        &["solve", "--config", cfg.to_str().unwrap(), "--eps", "0.1"],
        &out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let j = read_json(&out.join("solve.json"));
    assert_eq!(j["config"]["p"], 2.0);
    assert_eq!(j["config"]["eps"], 0.1);
    assert_eq!(j["config"]["method"], "fd");

    std::fs::write(&cfg, r#"{"p": 2.0, "unknown": 1}"#).unwrap();
    let o = tugwar(&["solve", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn couple_rejects_wide_cone_and_flags_small_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tugwar(&["couple", "--theta0", "0.2"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    let o = tugwar(
        &[
            "couple",
            "--trials",
            "10",
            "--steps",
            "2000",
            "--alignment-configs",
            "2",
            "--alignment-samples",
            "1000",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict: INDETERMINATE"));
    assert!(tmp.path().join("coupled_trace.csv").exists());
}

#[test]
fn constants_compare_and_chain_pass() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in [
        &["constants"][..],
        &["compare"][..],
        &["chain", "--fuzz", "300"][..],
    ] {
        let o = tugwar(cmd, tmp.path());
        assert_eq!(o.status.code(), Some(0), "{cmd:?}: {}", stdout(&o));
    }
    let table = std::fs::read_to_string(tmp.path().join("constants.csv")).unwrap();
    assert!(table.lines().count() > 3 * 9 * 3);
    let cmp = read_json(&tmp.path().join("compare.json"));
    assert_eq!(cmp["result"]["crossover_d"], 5);
    assert!(tmp.path().join("chain.json").exists());
}

#[test]
fn planar_writes_experiments_and_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tugwar(
        &["planar", "--ps", "6,2", "--trials", "100", "--fuzz", "100"],
        tmp.path(),
    );
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict: "));
    let csv = std::fs::read_to_string(tmp.path().join("planar_experiments.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(tmp.path().join("planar_fit.json").exists());
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["chain", "--fuzz", "200", "--seed", "11"];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    tugwar(&args, &a);
    tugwar(&args, &b);
    assert_eq!(
        std::fs::read(a.join("chain.json")).unwrap(),
        std::fs::read(b.join("chain.json")).unwrap()
    );

    let c = tmp.path().join("c");
    tugwar(&["chain", "--fuzz", "200", "--seed", "12"], &c);
    let ja = read_json(&a.join("chain.json"));
    let jc = read_json(&c.join("chain.json"));
    assert_ne!(ja["config_hash"], jc["config_hash"]);
}
