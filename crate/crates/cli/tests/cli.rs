use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interp-lab"))
        .args(args)
        .current_dir(cwd)
        .env("INTERP_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_fit_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&["gen", "--model", "gmm", "--k", "3", "--n", "12", "--p", "300", "--mu-scale", "0.2", "--seed", "4", "--out", "data.csv"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    for kind in ["mni", "svm", "simplex-ova", "ova", "ovo"] {
        let out = format!("w_{kind}.csv");
        let o = run(&["fit", "--data", "data.csv", "--kind", kind, "--out", &out], d);
        assert!(o.status.success(), "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        let weights = fs::read_to_string(d.join(&out)).unwrap();
        let rows = weights.lines().count();
        assert_eq!(rows, 3, "{kind}");
        let sidecar: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join(format!("w_{kind}.json"))).unwrap()).unwrap();
        assert_eq!(sidecar["seed"], 4);
    }

    let o = run(&["check", "--data", "data.csv", "--dump-full", "full.csv"], d);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["det_con"].is_boolean());
    assert!(report["svm_equals_mni"].is_boolean());
    let full = fs::read_to_string(d.join("full.csv")).unwrap();
    assert_eq!(full.lines().count(), 1 + 3 * 12);
}

#[test]
fn gen_is_deterministic_and_writes_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen", "--model", "mlm", "--k", "3", "--n", "16", "--bilevel", "1.5,0.3,0.5", "--seed", "9"];
    let a = run(&args, dir.path());
    let b = run(&args, dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("# p,n,k,seed"));
}

#[test]
fn fit_on_inseparable_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "# p,n,k,seed\n# 1,2,2,0\n# values\n0,1.0\n1,1.0\n").unwrap();
    let o = run(&["fit", "--data", "bad.csv", "--kind", "svm", "--out", "w.csv"], d);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(&["sweep", "--preset", "nope"], d).status.code(), Some(2));
    fs::write(d.join("bad.json"), r#"{"model": "gmm", "trails": 3}"#).unwrap();
    assert_eq!(run(&["sweep", "--config", "bad.json"], d).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--model", "gmm", "--n", "10", "--k", "3"], d).status.code(), Some(2));
    assert_eq!(run(&["fit", "--data", "missing.csv", "--out", "w.csv"], d).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--bogus-flag"], d).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--preset", "fig6", "--condition", "0.1"], d).status.code(), Some(2));
    assert_eq!(run(&["gen", "--model", "mlm", "--k", "3", "--n", "16", "--bilevel", "1.5,0.3"], d).status.code(), Some(2));
}

#[test]
fn sweep_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"experiment": "tiny", "model": "gmm", "grid": {"n": [6], "p": [80], "k": [3], "mu_scale": [0.3]},
                 "trials": 5, "n_test": 200, "output": "tiny.csv"}"#;
    fs::write(d.join("tiny.json"), cfg).unwrap();
    let o = run(&["sweep", "--config", "tiny.json", "--trials", "2"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("tiny.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(d.join("tiny.summary.json").exists());

    let o = run(&["plot", "--csv", "tiny.csv", "--x", "trial", "--y", "interp_fraction", "--out", "f.svg"], d);
    assert!(o.status.success());
    assert!(fs::read_to_string(d.join("f.svg")).unwrap().contains("<polyline"));
    let o = run(&["plot", "--csv", "tiny.csv", "--x", "p", "--y", "nope"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn barplot_writes_32_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&["barplot", "--seed", "3", "--out", "bars.csv"], d);
    assert!(o.status.success());
    let text = fs::read_to_string(d.join("bars.csv")).unwrap();
    assert_eq!(text.lines().count(), 33);
    assert_eq!(text.lines().next().unwrap(), "sample,label,class,value");
}

#[test]
fn sweep_help_lists_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let help = stdout(&run(&["sweep", "--help"], dir.path()));
    for key in ["base_seed", "n_test", "mu_scale", "bilevel", "paper-scale", "INTERP_LAB_THREADS"] {
        assert!(help.contains(key), "{key}");
    }
}
