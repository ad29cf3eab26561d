use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = "[data]\ngenerator = simple\npi = 0.5\nn = 30\nm = 25\nseed = 3\n\n[bo]\n\
                    grid_min = -3\ngrid_max = 3\ngrid_size = 15\nl = 10\nr = 10\ncalibration_points = 5\n";

fn run(dir: &Path, command: &str, extra: &str) -> Output {
    let config = dir.join(format!("{command}.ini"));
    fs::write(&config, format!("{BASE}{extra}")).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bayesimp"))
        .arg(command)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join(format!("{command}-out")))
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn zero_budget_writes_header_only_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "bo", "budget = 0\nseeds = 1\n");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = tmp.path().join("bo-out/traces/BayesIMP_seed3.csv");
    assert_eq!(fs::read_to_string(trace).unwrap(), "iter,x,t,incumbent,ei\n");
}

#[test]
fn bo_writes_one_trace_per_method_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "bo", "budget = 2\nseeds = 10\n");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traces = fs::read_dir(tmp.path().join("bo-out/traces")).unwrap().count();
    assert_eq!(traces, 30);
    let (header, rows) = read_csv(&tmp.path().join("bo-out/aggregate.csv"));
    assert_eq!(header, ["method", "iter", "median", "q25", "q75", "runs"]);
    for method in ["BayesIMP", "Sampling", "PlainGP"] {
        let medians: Vec<f64> = rows.iter().filter(|r| r[0] == method).map(|r| r[2].parse().unwrap()).collect();
        assert_eq!(medians.len(), 2);
        assert!(medians.windows(2).all(|w| w[1] >= w[0]), "{method}: {medians:?}");
    }
}

#[test]
fn calibration_table_has_nine_rows_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "calibrate", "seeds = 2\nmc_samples = 10000\n");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&tmp.path().join("calibrate-out/calibration.csv"));
    for method in ["IMP", "BayesIME", "BayesIMP", "Sampling"] {
        let mine: Vec<_> = rows.iter().filter(|r| r[0] == method).collect();
        assert_eq!(mine.len(), 9, "{method}");
        for r in mine {
            let e: f64 = r[2].parse().unwrap();
            assert!((0.0..=1.0).contains(&e));
        }
    }
}

#[test]
fn ablation_curves_have_nonnegative_std() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "ablation", "seeds = 1\n");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&tmp.path().join("ablation-out/curves_BayesIMP.csv"));
    assert_eq!(header, ["seed", "x", "mean", "std"]);
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn gen_writes_both_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "gen", "");
    assert!(out.status.success());
    let (h1, r1) = read_csv(&tmp.path().join("gen-out/d1.csv"));
    let (h2, r2) = read_csv(&tmp.path().join("gen-out/d2.csv"));
    assert_eq!((r1.len(), r2.len()), (30, 25));
    assert!(h1.contains(&"y".to_string()) && h2.contains(&"t".to_string()));
    let meta = fs::read_to_string(tmp.path().join("gen-out/meta.txt")).unwrap();
    assert!(meta.contains("seed = 3"));
}

#[test]
fn bad_config_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "gen", "[model]\nunknown_key = 1\n");
    assert_eq!(out.status.code(), Some(2));
    let config = tmp.path().join("pi.ini");
    fs::write(&config, "[data]\ngenerator = simple\npi = 1.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bayesimp"))
        .args(["gen", "--out"])
        .arg(tmp.path().join("x"))
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("π out of range [0,1]"));
}

#[test]
fn unwritable_output_exits_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("gen-out");
    fs::write(&blocker, "not a directory").unwrap();
    let out = run(tmp.path(), "gen", "");
    assert_eq!(out.status.code(), Some(4));
}
