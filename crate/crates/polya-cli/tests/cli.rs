use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn polya(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polya")).args(args).env_remove("POLYA_SEED").output().expect("binary runs")
}

fn polya_env(args: &[&str], seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polya")).args(args).env("POLYA_SEED", seed).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).expect("utf-8")
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).expect("json output")
}

/// Data rows of a CSV output: everything after the comment block and the header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn header(text: &str) -> String {
    text.lines().find(|l| !l.starts_with('#')).expect("header").to_string()
}

#[test]
fn constants_of_the_basic_urn() {
    let v = json(&polya(&["constants", "--family", "py", "--p", "2", "--sigma", "1", "--ell", "1"]));
    assert_eq!(v["result"]["psi"], 3.0);
    assert!((v["result"]["lambda"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-14);
    assert!((v["result"]["kappa"].as_f64().unwrap() - 1.046_819_168_979_87).abs() < 1e-13);
    assert_eq!(v["polya_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["seed"], 1);
    assert_eq!(v["config"]["spec"]["family"], "polya_young");
}

#[test]
fn urn_exact_raw_moments_are_rational_in_exact_mode() {
    let text = stdout(&polya(&[
        "urn-exact", "--family", "py", "--p", "2", "--sigma", "1", "--ell", "1", "--w0", "1", "--b0", "1", "--N", "2",
        "--moments", "2",
    ]));
    assert_eq!(header(&text), "s,moment");
    assert_eq!(rows(&text), vec![vec!["1", "2"], vec!["2", "14/3"]]);
    assert!(text.contains("# polya 0.1.0"));
    assert!(text.contains("# seed: 1"));
}

#[test]
fn float_mode_prints_fifteen_significant_digits() {
    let text = stdout(&polya(&["urn-exact", "--N", "2", "--moments", "2", "--mode", "float"]));
    assert_eq!(rows(&text)[1], vec!["2", "4.66666666666667"]);
}

#[test]
fn exact_pmf_sums_to_one() {
    let text = stdout(&polya(&["urn-exact", "--N", "6", "--quantity", "pmf", "--sigma", "1/2", "--ell", "3/2"]));
    let total: f64 = rows(&text)
        .iter()
        .map(|r| {
            let (n, d) = r[1].split_once('/').unwrap_or((&r[1], "1"));
            n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap()
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn decomposition_report_has_scale_and_residuals() {
    let v = json(&polya(&["verify", "--what", "decomposition", "--family", "py", "--p", "2", "--sigma", "1", "--ell", "1", "--smax", "6"]));
    let reports = v["result"]["reports"].as_array().expect("reports");
    let gamma = reports.iter().find(|r| r["case"] == "gamma_product").expect("gamma product case");
    assert!((gamma["fitted_scale"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert_eq!(gamma["printed_scale"], 27.0);
    let rows = gamma["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r["relative_residual"].as_f64().unwrap() < 1e-9));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(polya(&["urn-exact", "--bogus"]).status.code(), Some(2));
    assert_eq!(polya(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(polya(&["urn-exact", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(polya(&["urn-exact", "--family", "nope"]).status.code(), Some(2));
    assert_eq!(polya_env(&["crp"], "not-a-number").status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_one() {
    let out = polya(&["tail-sum", "--N", "100", "--N-far", "200"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("N_far"));
    assert_eq!(polya(&["urn-exact", "--sigma=-1"]).status.code(), Some(1));
    assert_eq!(polya(&["crp", "--a", "3/2"]).status.code(), Some(1));
}

#[test]
fn help_exits_with_zero() {
    assert_eq!(polya(&["--help"]).status.code(), Some(0));
    assert_eq!(polya(&["tree-sim", "--help"]).status.code(), Some(0));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"N": 5, "replicates": 3, "seed": 11, "spec": {"family": "polya_young", "p": 3, "sigma": 1, "ell": 2, "initial": [2, 1]}}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let v = json(&polya(&["urn-sim", "--config", cfg, "--N", "7", "--format", "json"]));
    assert_eq!(v["config"]["N"], 7);
    assert_eq!(v["config"]["replicates"], 3);
    assert_eq!(v["seed"], 11);
    assert_eq!(v["config"]["spec"]["p"], 3);
    assert_eq!(v["config"]["trajectory"], false);
    let v = json(&polya(&["urn-sim", "--config", cfg, "--p", "2", "--w0", "5", "--format", "json"]));
    assert_eq!(v["config"]["spec"]["p"], 2);
    assert_eq!(v["config"]["spec"]["ell"], 2);
    assert_eq!(v["config"]["spec"]["initial"], serde_json::json!([5, 1]));
}

#[test]
fn seed_comes_from_environment_unless_given() {
    let v: Value = serde_json::from_str(&stdout(&polya_env(&["crp", "--format", "json"], "77"))).unwrap();
    assert_eq!(v["seed"], 77);
    let v: Value = serde_json::from_str(&stdout(&polya_env(&["crp", "--format", "json", "--seed", "5"], "77"))).unwrap();
    assert_eq!(v["seed"], 5);
    let a = stdout(&polya_env(&["urn-sim", "--replicates", "4"], "123"));
    let b = stdout(&polya(&["urn-sim", "--replicates", "4", "--seed", "123"]));
    assert_eq!(a, b);
}

fn reproduces(args: &[&str], ext: &str) {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join(format!("first.{ext}"));
    let second = dir.path().join(format!("second.{ext}"));
    let mut a: Vec<&str> = args.to_vec();
    a.extend(["--output", first.to_str().unwrap()]);
    stdout(&polya(&a));
    stdout(&polya(&[args[0], "--config", first.to_str().unwrap(), "--output", second.to_str().unwrap()]));
    assert_eq!(read(&first), read(&second), "{args:?}");
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn embedded_config_reproduces_the_payload() {
    reproduces(&["urn-sim", "--N", "30", "--replicates", "20", "--seed", "4", "--sigma", "1/2"], "csv");
    reproduces(&["urn-exact", "--N", "12", "--quantity", "rising", "--family", "triangular", "--ell1", "1", "--ell2", "2", "--p", "2"], "csv");
    reproduces(&["tail-sum", "--N", "40", "--N-far", "640", "--replicates", "50", "--seed", "8", "--format", "json"], "json");
    reproduces(&["tree-sim", "--N", "25", "--tree", "gport", "--tree-alpha", "1/2", "--seed", "3"], "csv");
    reproduces(&["stirling", "--N", "6", "--t", "2", "--replicates", "5", "--seed", "2"], "csv");
    reproduces(&["crp", "--N", "30", "--replicates", "10", "--theta-bar", "1/2"], "json");
    reproduces(&["urn-limit", "--smax", "4", "--ell", "1/2"], "csv");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let base = ["urn-sim", "--N", "200", "--replicates", "64", "--seed", "21"];
    let one = stdout(&polya(&[&base[..], &["--threads", "1"]].concat()));
    let three = stdout(&polya(&[&base[..], &["--threads", "3"]].concat()));
    assert_eq!(rows(&one), rows(&three));
    let base = ["verify", "--what", "descendants", "--N", "15", "--index", "3", "--replicates", "500"];
    let a = json(&polya(&[&base[..], &["--threads", "1"]].concat()));
    let b = json(&polya(&[&base[..], &["--threads", "4"]].concat()));
    assert_eq!(a["result"]["tv_distance"], b["result"]["tv_distance"]);
}

#[test]
fn exact_mode_simulation_counts_are_rational() {
    let text = stdout(&polya(&["urn-sim", "--N", "6", "--trajectory", "--sigma", "1/2", "--ell", "1/3", "--mode", "exact"]));
    assert_eq!(header(&text), "step,color_0,color_1,total");
    let all = rows(&text);
    assert_eq!(all[1][3], "5/2");
    assert_eq!(all[6], vec!["6".to_string(), all[6][1].clone(), all[6][2].clone(), "6".to_string()]);
    assert!(all.iter().flatten().all(|cell| !cell.contains('.')));
}

#[test]
fn stirling_text_marks_thick_symbols_and_parses_back() {
    let text = stdout(&polya(&["stirling", "--N", "4", "--d", "2", "--p", "2", "--t", "3", "--seed", "6"]));
    let perm = rows(&text)[0][1].clone();
    assert_eq!(perm.matches('!').count(), 6);
    let parsed = json(&polya(&["stirling", "--action", "parse", "--perm", &perm, "--N", "4", "--d", "2", "--p", "2", "--t", "3", "--format", "json"]));
    assert_eq!(parsed["result"]["permutation"], perm.as_str());
    let bad = polya(&["stirling", "--action", "parse", "--perm", "1 2! 1", "--t", "1"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn stirling_counts_table() {
    let text = stdout(&polya(&["stirling", "--action", "count", "--N", "3", "--d", "2", "--p", "2", "--t", "3"]));
    assert_eq!(rows(&text), vec![vec!["0", "1", "1"], vec!["1", "1", "3"], vec!["2", "3", "8"], vec!["3", "24", "10"]]);
}

#[test]
fn tree_sim_views() {
    let text = stdout(&polya(&["tree-sim", "--N", "8"]));
    assert_eq!(header(&text), "id,label,kind,parent,slot");
    let bracket = stdout(&polya(&["tree-sim", "--N", "8", "--view", "bracket"]));
    let forest = &rows(&bracket)[0][0];
    assert!(forest.starts_with("1"));
    assert!(forest.contains("8!"));
    let v = json(&polya(&["tree-sim", "--N", "8", "--view", "profile", "--format", "json", "--offset", "crp", "--tree", "gport", "--tree-alpha", "1"]));
    assert_eq!(v["columns"], serde_json::json!(["branch_size", "branches"]));
}

#[test]
fn crp_exact_table_law() {
    let text = stdout(&polya(&["crp", "--exact", "--N", "5", "--p", "2"]));
    let total: f64 = rows(&text)
        .iter()
        .map(|r| {
            let (n, d) = r[1].split_once('/').unwrap_or((&r[1], "1"));
            n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap()
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn verifiers_run() {
    for what in ["martingale", "bijection", "blocks", "crp", "outdegree", "root-descendants", "branch"] {
        let mut args = vec!["verify", "--what", what, "--replicates", "200", "--N", "12"];
        if what == "outdegree" {
            args.extend(["--tree", "gport"]);
        }
        let v = json(&polya(&args));
        assert_eq!(v["command"], "verify", "{what}");
        assert!(v["result"].is_object(), "{what}");
    }
}

#[test]
fn spec_file_flag_reads_a_urn_spec_document() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    std::fs::write(&path, r#"{"family": "triangular", "p": 2, "sigma": 1, "ell1": 1, "ell2": 2, "initial": [1, 1]}"#).unwrap();
    let v = json(&polya(&["constants", "--spec", path.to_str().unwrap()]));
    assert_eq!(v["result"]["family"], "triangular");
    assert_eq!(v["result"]["psi"], 2.5);
    assert!(v["config"].get("spec_file").is_none());
}
