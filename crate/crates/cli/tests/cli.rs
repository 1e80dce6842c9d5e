use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rclm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rclm")).args(args).output().expect("spawn rclm")
}

fn record(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "expected a single-line record");
    serde_json::from_str(&text).unwrap()
}

fn write_data(dir: &Path) -> String {
    let path = dir.join("d.csv");
    let mut text = String::from("y,x1,x2,w1,w2\n");
    for i in 0..25 {
        let x1 = i as f64 * 0.37 % 3.0;
        let x2 = (i * 7 % 11) as f64;
        let w1 = (i as f64 * 1.3).sin();
        let w2 = (i * 13 % 29) as f64 + 0.5;
        let y = 0.8 * x1 + w1 + ((i * 29 % 31) as f64) / 31.0;
        text.push_str(&format!("{y},{x1},{x2},{w1},{w2}\n"));
    }
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn anova_record_has_df_equal_to_p() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let r = record(&rclm(&["rank-anova", "--data", &data, "--y", "y", "--x", "x1", "--scores", "wilcoxon"]));
    assert_eq!(r["result"]["df"], 1);
    assert_eq!(r["result"]["method"], "anova_rank");
    assert_eq!(r["config"]["scores"], "wilcoxon");
    let p = r["result"]["p_asymptotic"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    let r = record(&rclm(&["rank-anova", "--data", &data, "--x", "x1,x2", "--scores", "vdw"]));
    assert_eq!(r["result"]["df"], 2);
}

#[test]
fn ancova_monte_carlo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let args = [
        "rank-ancova", "--data", &data, "--y", "y", "--x", "x1", "--covariates", "w1", "--perm", "mc", "--B", "999",
        "--seed", "7",
    ];
    let a = rclm(&args);
    let b = rclm(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r = record(&a);
    assert_eq!(r["config"]["permutation"]["seed"], 7);
    assert_eq!(r["config"]["permutation"]["b"], 999);
    assert_eq!(r["result"]["q"], 1);
    let p = r["result"]["p_permutation"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("r.json");
    let o = rclm(&["rank-ancova", "--data", &data, "--x", "x1,x2", "--covariates", "w1,w2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), o.stdout);
}

#[test]
fn are_without_noise_is_one() {
    let r = record(&rclm(&["are", "--scores", "wilcoxon", "--error", "normal:0,1", "--noise", "none"]));
    assert!((r["report"]["are_latent"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    let r = record(&rclm(&["are", "--scores", "wilcoxon", "--error", "normal:0,1", "--noise", "normal:0,1"]));
    assert!((r["report"]["are_latent"].as_f64().unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn perm_null_lists_all_permutations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.csv");
    std::fs::write(&path, "y,x1\n0.3,1\n1.7,2\n0.9,3\n2.2,4\n").unwrap();
    let r = record(&rclm(&["perm-null", "--data", path.to_str().unwrap(), "--x", "x1"]));
    assert_eq!(r["null_distribution"].as_array().unwrap().len(), 24);
    let p = r["result"]["p_permutation"].as_f64().unwrap();
    assert!((p * 24.0 - (p * 24.0).round()).abs() < 1e-9);
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    assert_eq!(rclm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rclm(&["rank-anova", "--data", &data]).status.code(), Some(2));
    assert_eq!(rclm(&["rank-anova", "--data", &data, "--x", "x1", "--perm", "mc"]).status.code(), Some(2));
    assert_eq!(rclm(&["rank-anova", "--data", &data, "--x", "x1", "--perm", "exact"]).status.code(), Some(2));
    assert_eq!(rclm(&["rank-anova", "--data", &data, "--x", "nope"]).status.code(), Some(3));
    let blank = dir.path().join("blank.csv");
    std::fs::write(&blank, "y,x1\n1,2\n3,\n4,5\n6,1\n").unwrap();
    let o = rclm(&["rank-anova", "--data", blank.to_str().unwrap(), "--x", "x1"]);
    assert_eq!(o.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("row 3") && msg.contains("x1"), "{msg}");
    let tied = dir.path().join("tied.csv");
    std::fs::write(&tied, "y,x1\n1,2\n1,3\n4,5\n6,1\n").unwrap();
    assert_eq!(rclm(&["rank-anova", "--data", tied.to_str().unwrap(), "--x", "x1"]).status.code(), Some(3));
    let o = rclm(&["rank-anova", "--data", tied.to_str().unwrap(), "--x", "x1", "--ties", "midrank"]);
    assert!(o.status.success());
}

#[test]
fn simulate_writes_csv_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(
        &cfg,
        r#"{"model":"quadratic","n":20,"beta1_grid":[0.0,0.5],"replications":100,"seed":3,"design_seed":4,
            "noise_law":"normal:0,0.7"}"#,
    )
    .unwrap();
    let csv1 = dir.path().join("a.csv");
    let csv2 = dir.path().join("b.csv");
    let a = rclm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", csv1.to_str().unwrap()]);
    let b = rclm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", csv2.to_str().unwrap()]);
    let r = record(&a);
    let mut rb = record(&b);
    rb["out"] = r["out"].clone();
    assert_eq!(r, rb);
    assert_eq!(r["config"]["seed"], 3);
    assert_eq!(r["points"].as_array().unwrap().len(), 2);
    let t1 = std::fs::read_to_string(&csv1).unwrap();
    assert_eq!(t1, std::fs::read_to_string(&csv2).unwrap());
    assert!(t1.starts_with("beta1,power_anova,power_ancova,mc_se,n,model,error_law,noise_law,scores,seed\n"));
    assert!(t1.lines().nth(1).unwrap().contains(r#",20,quadratic,"normal:0,1","normal:0,0.7",wilcoxon,3"#));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"model":"cubic","n":20,"seed":1,"design_seed":1}"#).unwrap();
    assert_eq!(rclm(&["simulate", "--config", bad.to_str().unwrap()]).status.code(), Some(3));
}
