use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn smoothcert(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothcert")).args(args).current_dir(dir).output().expect("spawn binary")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const THREE_INPUTS: &str = r#"{"input_id":"a","phase":"selection","n":100,"counts":{"0":80,"1":15,"2":5}}
{"input_id":"a","phase":"estimation","n":10000,"counts":{"0":8000,"1":1500,"2":400,"3":100}}
{"input_id":"b","phase":"selection","n":100,"counts":{"2":90,"0":10}}
{"input_id":"b","phase":"estimation","n":10000,"counts":{"2":9000,"0":600,"1":300,"3":100},"sigma":0.25}
{"input_id":"c","phase":"selection","n":100,"counts":{"1":40,"0":35,"2":25}}
{"input_id":"c","phase":"estimation","n":10000,"counts":{"1":3800,"0":3600,"2":2600}, "num_classes":4}
"#;

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    std::fs::write(dir.path().join(name), body).unwrap();
    name.to_string()
}

#[test]
fn certify_three_inputs_populates_partition_columns() {
    let dir = TempDir::new().unwrap();
    let file = write(&dir, "counts.jsonl", THREE_INPUTS);
    let out = smoothcert(&["certify", &file], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("# {\"command\":\"certify\""));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "a");
    assert_eq!(rows[0][4], "0");
    assert!(!rows[0][5].is_empty());
    assert_eq!(rows[0][10], "certified");
    assert_eq!(rows[1][2], "0.25");
    assert_eq!(rows[1][4], "2");
    assert_eq!(rows[2][10], "abstain");
}

#[test]
fn sigma_flag_is_a_fallback_for_records_without_sigma() {
    let dir = TempDir::new().unwrap();
    let file = write(&dir, "counts.jsonl", THREE_INPUTS);
    let rows = data_rows(&stdout(&smoothcert(&["certify", &file, "--sigma", "1"], dir.path())));
    assert_eq!(rows[0][2], "1");
    assert_eq!(rows[1][2], "0.25");
}

#[test]
fn each_method_runs() {
    let dir = TempDir::new().unwrap();
    let file = write(&dir, "counts.jsonl", THREE_INPUTS);
    for method in ["pearson_clopper", "bonferroni", "cpm"] {
        let out = smoothcert(&["certify", &file, "--method", method], dir.path());
        assert!(out.status.success());
        assert!(data_rows(&stdout(&out)).iter().all(|r| r[1] == method));
    }
}

#[test]
fn duplicate_and_incomplete_inputs_produce_error_rows() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{THREE_INPUTS}{}\n{}\n",
        r#"{"input_id":"a","phase":"selection","n":1,"counts":{"0":1}}"#,
        r#"{"input_id":"d","phase":"estimation","n":10,"counts":{"0":9,"1":1}}"#
    );
    let file = write(&dir, "counts.jsonl", &body);
    let out = smoothcert(&["certify", &file], dir.path());
    assert!(out.status.success());
    let rows = data_rows(&stdout(&out));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][10], "error");
    assert_eq!(rows[1][10], "certified");
    assert_eq!(rows[3][0], "d");
    assert_eq!(rows[3][10], "error");
}

#[test]
fn count_sum_mismatch_is_an_error_row() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "counts.jsonl",
        "{\"input_id\":1,\"phase\":\"selection\",\"n\":10,\"counts\":{\"0\":10}}\n{\"input_id\":1,\"phase\":\"estimation\",\"n\":10,\"counts\":{\"0\":3,\"1\":3}}\n",
    );
    let rows = data_rows(&stdout(&smoothcert(&["certify", &file], dir.path())));
    assert_eq!(rows[0][10], "error");
}

#[test]
fn malformed_json_exits_with_data_error() {
    let dir = TempDir::new().unwrap();
    let file = write(&dir, "bad.jsonl", "{\"input_id\":1,\n");
    let out = smoothcert(&["certify", &file], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn missing_file_exits_with_data_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(smoothcert(&["certify", "absent.jsonl"], dir.path()).status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(smoothcert(&["certify", "x.jsonl", "--bogus"], dir.path()).status.code(), Some(1));
}

#[test]
fn invalid_alpha_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let file = write(&dir, "counts.jsonl", THREE_INPUTS);
    assert_eq!(smoothcert(&["certify", &file, "--alpha", "0"], dir.path()).status.code(), Some(1));
    assert_eq!(smoothcert(&["certify", &file, "--sigma=-1"], dir.path()).status.code(), Some(1));
}

#[test]
fn zero_replications_exit_with_config_error() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "exp.json",
        r#"{"true_p":[0.5,0.3,0.2],"n":1000,"alpha":0.05,"procedure":"cpm","replications":0,"seed":1}"#,
    );
    let out = smoothcert(&["coverage", &file], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn off_simplex_true_p_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "exp.json",
        r#"{"true_p":[0.5,0.3,0.3],"n":1000,"alpha":0.05,"procedure":"cpm","replications":10000,"seed":1}"#,
    );
    assert_eq!(smoothcert(&["coverage", &file], dir.path()).status.code(), Some(1));
}

#[test]
fn coverage_fixed_row() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "exp.json",
        r#"[{"true_p":[0.6,0.3,0.1],"n":500,"alpha":0.05,"procedure":"bonferroni_c","replications":10000,"seed":3}]"#,
    );
    let out = smoothcert(&["coverage", &file], dir.path());
    assert!(out.status.success());
    let rows = data_rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "fixed");
    assert_eq!(rows[0][1], "bonferroni_c");
    assert_eq!(rows[0][10], "covers");
}

#[test]
fn pub_reports_layers_and_total() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "layers.json",
        r#"[{"kind":"dense","matrix":[[3,0],[0,1]]},{"kind":"activation"},{"kind":"norm","value":2},{"kind":"pooling"}]"#,
    );
    let out = smoothcert(&["pub", &file], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    let total: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!((total - 6.0).abs() < 1e-9);
}

#[test]
fn pub_overflow_reports_log_value() {
    let dir = TempDir::new().unwrap();
    let layers: Vec<String> = (0..400).map(|_| r#"{"kind":"norm","value":1e10}"#.to_string()).collect();
    let file = write(&dir, "layers.json", &format!("[{}]", layers.join(",")));
    let out = smoothcert(&["pub", &file], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    assert!(last.contains("\"overflow, see log\""));
    let log_pub: f64 = last.rsplit(',').nth(1).unwrap().parse().unwrap();
    assert!((log_pub - 400.0 * 1e10f64.ln()).abs() < 1e-9);
}

#[test]
fn wrong_layer_record_is_config_error() {
    let dir = TempDir::new().unwrap();
    let file = write(&dir, "layers.json", r#"[{"kind":"norm","value":-1}]"#);
    assert_eq!(smoothcert(&["pub", &file], dir.path()).status.code(), Some(1));
}

#[test]
fn curves_grid_has_requested_points() {
    let dir = TempDir::new().unwrap();
    let out = smoothcert(&["curves", "--points", "7"], dir.path());
    assert!(out.status.success());
    let rows = data_rows(&stdout(&out));
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[6][5], "false");
}

#[test]
fn selfcheck_passes() {
    let dir = TempDir::new().unwrap();
    let out = smoothcert(&["selfcheck"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data_rows(&stdout(&out)).iter().all(|r| r[3] == "pass"));
}

#[test]
fn synth_then_certify_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = smoothcert(&["synth", "--inputs", "4", "--seed", "11", "--out", "a.jsonl"], dir.path());
    let b = smoothcert(&["synth", "--inputs", "4", "--seed", "11", "--batch", "7", "--out", "b.jsonl"], dir.path());
    assert!(a.status.success() && b.status.success());
    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    let strip = |s: String| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(read("a.jsonl")), strip(read("b.jsonl")));

    let first = smoothcert(&["certify", "a.jsonl"], dir.path());
    let second = smoothcert(&["certify", "a.jsonl"], dir.path());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(data_rows(&stdout(&first)).len(), 4);
}

#[test]
fn manifest_records_input_digest() {
    let dir = TempDir::new().unwrap();
    let file = write(&dir, "counts.jsonl", THREE_INPUTS);
    let text = stdout(&smoothcert(&["certify", &file], dir.path()));
    let manifest: serde_json::Value =
        serde_json::from_str(text.lines().next().unwrap().trim_start_matches("# ")).unwrap();
    let digest = manifest["inputs"]["counts.jsonl"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert_eq!(manifest["method"], "cpm");
    assert_eq!(manifest["alpha"], 0.001);
}
