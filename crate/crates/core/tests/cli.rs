use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neuromap::optimize::{AlgoParams, Algorithm};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn neuromap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuromap"))
        .args(args)
        .env_remove("NEUROMAP_OUT_ROOT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(o: &Output, key: &str) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} in {}", stdout(o)))
}

fn toy() -> String {
    root().join("workloads/toy_chain.toml").display().to_string()
}

fn write_signal(path: &Path, values: &[f64]) {
    let mut s = String::from("timestamp,value\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", i * 1_000_000));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn simulate_writes_the_run_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = neuromap(&["simulate", "--workload", &toy(), "--cores", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(field(&o, "cores"), "6");
    assert!(field(&o, "energy_pj").parse::<f64>().unwrap() > 0.0);
    for f in [
        "summary.txt",
        "snapshots_cores.csv",
        "snapshots_interconnects.csv",
        "output_snapshot.csv",
        "gui_setting.csv",
        "mapping.csv",
        "placement.csv",
        "hw.toml",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn infeasible_mapping_names_the_core() {
    let tmp = tempfile::tempdir().unwrap();
    let hw = tmp.path().join("hw.toml");
    std::fs::write(&hw, "mem_per_core_bits = 4096\n").unwrap();
    let o = neuromap(&[
        "simulate",
        "--workload",
        &toy(),
        "--hw",
        hw.to_str().unwrap(),
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("core") && err.contains("M_pc"), "{err}");
}

#[test]
fn compare_reports_the_shift() {
    let tmp = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..40).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
    let a = tmp.path().join("a.csv");
    write_signal(&a, &values);
    let o = neuromap(&["compare", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&o, "peak"), "1");
    assert_eq!(field(&o, "shift_ms"), "0");

    // Delay by 3 samples of 1 ms.
    let mut shifted = vec![0.0; 3];
    shifted.extend(&values);
    let b = tmp.path().join("b.csv");
    write_signal(&b, &shifted);
    let o = neuromap(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--max-shift-ms", "10"]);
    assert_eq!(field(&o, "lag_samples"), "3");
    assert_eq!(field(&o, "shift_ms"), "3");

    let o = neuromap(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--min-peak",
        "0.999",
        "--max-shift-ms",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(field(&o, "distorted"), "true");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = neuromap(&["simulate", "--workload", &toy(), "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-flag"));
}

#[test]
fn shipped_params_parse() {
    let ga = AlgoParams::load(&root().join("params/ga.toml")).unwrap();
    assert_eq!((ga.algorithm, ga.pop_size), (Algorithm::Ga, 30));
    let nsga = AlgoParams::load(&root().join("params/nsga2.toml")).unwrap();
    assert_eq!((nsga.algorithm, nsga.pop_size, nsga.offspring), (Algorithm::Nsga2, 40, 10));
    let pso = AlgoParams::load(&root().join("params/pso.toml")).unwrap();
    assert_eq!(pso.algorithm, Algorithm::Pso);
}

#[test]
fn optimize_then_report_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let o = neuromap(&[
        "optimize",
        "--workload",
        &toy(),
        "--hw",
        root().join("configs/hw_toy.toml").to_str().unwrap(),
        "--params",
        root().join("params/pso.toml").to_str().unwrap(),
        "--pop-size",
        "6",
        "--generations",
        "2",
        "--frames",
        "3",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run_dir = field(&o, "run_dir");
    let summary = PathBuf::from(field(&o, "summary_dir"));
    let before = std::fs::read(summary.join("energyOpt.csv")).unwrap();
    let r = neuromap(&["report", &run_dir]);
    assert!(r.status.success());
    assert_eq!(std::fs::read(summary.join("energyOpt.csv")).unwrap(), before);
    assert!(tmp.path().join("experiments/index.csv").is_file());
}

#[test]
fn mismatched_algorithm_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = neuromap(&[
        "optimize",
        "--workload",
        &toy(),
        "--algo",
        "ga",
        "--params",
        root().join("params/nsga2.toml").to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
