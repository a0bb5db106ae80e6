use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ttcomp(args: &[&str], workers: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ttcomp"));
    c.args(args);
    match workers {
        Some(w) => c.env("TTCOMP_WORKERS", w),
        None => c.env_remove("TTCOMP_WORKERS"),
    };
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn verdict(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad verdict ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn run_ok(cmd: &str, config: &str, extra: &[&str]) -> (Value, String) {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", config);
    let out = dir.path().join("out");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = ttcomp(&args, None);
    let v = verdict(&o);
    assert_eq!(o.status.code(), Some(0), "{v:#}");
    assert_eq!(v["passed"], true);
    (v, std::fs::read_to_string(out).unwrap())
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[i].parse().unwrap()).collect()
}

#[test]
fn figure3_small_grid() {
    let (v, csv) = run_ok("figure3", r#"{"m":[4,9,16,100]}"#, &[]);
    assert_eq!(v["rows"], 4);
    assert!(csv.starts_with("ensemble,M_sensors,beta_probability,"));
    assert!(column(&csv, "H_sqrt_partition_bits").iter().all(|&h| h < 14.5));
    assert!(column(&csv, "dp_max_abs_diff_bits").iter().all(|&d| d <= 1e-9));
}

#[test]
fn figure3_sparse_ensemble_checks_divergence() {
    let (v, _) = run_ok("figure3", r#"{"m":[4,64,1024],"ensembles":[{"ensemble":"inverse_m"}]}"#, &[]);
    let names: Vec<&str> = v["assertions"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"one_partition_diverges"));
}

#[test]
fn figure4_matches_hand_computation_at_four_sensors() {
    let (_, csv) = run_ok("figure4", r#"{"m":[4],"power_db":[20]}"#, &[]);
    // groups {1,2},{3,4}, beta = 1/2: a group speaking first has step entropy
    // H(Bin(2,1/2)) = 1.5, second 0.25 * 1.5; two rounds, power 2P each
    let d = (1.5 + 0.25 * 1.5) / 2.0;
    let mrgb = 0.25 * (0.5f64 + 200.0).log2() / d;
    let h2 = |x: f64| -x * x.log2() - (1.0 - x) * (1.0 - x).log2();
    let hit = 1.0 - 0.5f64.powi(4);
    let denom = 4.0 * h2(0.5) - 3.0 * hit * h2((4.0 * 0.5 / hit - 1.0) / 3.0);
    let irr = 0.5 * (1.0f64 + 400.0).log2() / denom;
    assert!((column(&csv, "mrgb_rate_bits_per_channel_use")[0] - mrgb).abs() < 1e-6);
    assert!((column(&csv, "irr_upper_bound_bits_per_channel_use")[0] - irr).abs() < 1e-6);
    assert!((column(&csv, "power_linear")[0] - 100.0).abs() < 1e-9);
}

#[test]
fn figure4_default_grid() {
    let (v, _) = run_ok("figure4", "{}", &[]);
    assert_eq!(v["rows"], 3);
}

#[test]
fn failed_assertion_exits_one_with_case() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"m":[100,1000],"irr_factor":0.5}"#);
    let out = dir.path().join("o.csv");
    let o = ttcomp(&["figure4", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let v = verdict(&o);
    assert_eq!(v["passed"], false);
    assert!(v["assertions"].as_array().unwrap().iter().any(|a| a["passed"] == false));
}

#[test]
fn bad_configs_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o.csv");
    for text in [r#"{"m":[]}"#, r#"{"experiment":"figure4"}"#, r#"{"unknown":1}"#, "not json"] {
        let cfg = write_config(dir.path(), "c.json", text);
        let o = ttcomp(&["figure3", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(verdict(&o)["error"].is_string());
    }
    let o = ttcomp(&["figure3"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_check_small() {
    let (v, csv) = run_ok("oracle-check", r#"{"cases":30,"max_m":6}"#, &["--seed", "9"]);
    assert!(v["rows"].as_u64().unwrap() >= 60);
    assert!(column(&csv, "abs_diff_bits").iter().all(|&d| d <= 1e-9));
}

#[test]
fn lemma_sweep_small() {
    let (_, csv) = run_ok("lemma-sweep", r#"{"cases":40,"max_m":500,"seeds":[1,2]}"#, &[]);
    let h = column(&csv, "max_shift_entropy_bits");
    let b = column(&csv, "bound_bits");
    assert!(h.iter().zip(&b).all(|(h, b)| h < b));
}

#[test]
fn rate_table_small() {
    let cfg = r#"{"ensembles":[{"ensemble":"constant","c":0.3},{"ensemble":"inverse_sqrt_m"}],
                 "m":[100,1000],"power_linear":[10,1000],"rules":[{"rule":"lemma"},{"rule":"sqrt"}]}"#;
    let (v, csv) = run_ok("rate-table", cfg, &["--format", "csv"]);
    assert_eq!(v["rows"], 16);
    let mrgb = column(&csv, "mrgb_rate_bits_per_channel_use");
    let cut = column(&csv, "cutset_full_bound_bits_per_channel_use");
    assert!(mrgb.iter().zip(&cut).all(|(a, c)| a <= c));
}

#[test]
fn simulate_runs_both_protocols() {
    let (v, csv) = run_ok("simulate", r#"{"m":[5,12],"seeds":[3],"simulation":{"k":2000}}"#, &[]);
    assert_eq!(v["rows"], 2);
    assert!(column(&csv, "mismatches_count").iter().all(|&x| x == 0.0));

    let cfg = r#"{"seeds":[1,2],"simulation":{"function":{"kind":"maximum","q":8},"binary_search":true,"k":3000,
                 "source":{"q":8,"pmfs":[[0.5,0.1,0.1,0.1,0.1,0.05,0.05,0],[0,0,0,0,0,0,0,1],[0.125,0.125,0.125,0.125,0.125,0.125,0.125,0.125]]}}}"#;
    let (v, _) = run_ok("simulate", cfg, &[]);
    assert_eq!(v["rows"], 2);

    let cfg = r#"{"m":[6],"seeds":[4],"simulation":{"function":{"kind":"heavy_hitters","threshold":2,"q":3},
                 "partition_rule":{"rule":"sqrt"},"shift":{"mode":"fixed","d":1},"k":1000}}"#;
    run_ok("simulate", cfg, &[]);
}

#[test]
fn json_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o.json");
    let o = ttcomp(&["figure3", "--out", out.to_str().unwrap(), "--format", "json"], None);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(doc["experiment"], "figure3");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn reruns_are_byte_identical_for_any_worker_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"cases":25,"max_m":7,"m":[6,20],"seeds":[5,6],"simulation":{"k":1500}}"#);
    for cmd in ["oracle-check", "simulate", "figure3"] {
        let mut outputs = Vec::new();
        for workers in [None, Some("1"), Some("3")] {
            let out = dir.path().join(format!("{cmd}-{}.csv", workers.unwrap_or("d")));
            let o = ttcomp(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], workers);
            assert_eq!(o.status.code(), Some(0));
            outputs.push(std::fs::read(out).unwrap());
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]), "{cmd}");
    }
}

#[test]
fn worker_variable_is_validated() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o.csv");
    let o = ttcomp(&["figure3", "--out", out.to_str().unwrap()], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
}
