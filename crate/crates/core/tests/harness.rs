use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use da_core::harness::{exit, report, run_twin_experiment, sweep, ExperimentConfig, RunStatus};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn smoke(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&example("smoke_l63.toml")).unwrap();
    cfg.output = out.to_path_buf();
    cfg
}

fn da(args: &[&str]) -> (i32, String, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_da")).args(args).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

#[test]
fn every_example_config_loads_and_round_trips() {
    for entry in fs::read_dir(example("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(cfg, back, "{}", path.display());
            assert_eq!(cfg.hash(), back.hash());
        }
    }
}

#[test]
fn hash_ignores_output_but_not_parameters() {
    let a = smoke(Path::new("a"));
    let b = smoke(Path::new("b"));
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let c = a.with_param("sigma", "0.25").unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn with_param_resolves_aliases_and_paths() {
    let cfg = smoke(Path::new("x"));
    assert_eq!(cfg.with_param("sigma", "0.1").unwrap().observation.sigma, 0.1);
    assert_eq!(cfg.with_param("beta", "2").unwrap().filter.beta, Some(2.0));
    assert_eq!(cfg.with_param("time.horizon", "3").unwrap().time.horizon, 3.0);
    assert_eq!(cfg.with_param("replicas", "7").unwrap().replicas, 7);
    assert!(cfg.with_param("filter.nonsense", "1").is_err());
    assert!(cfg.with_param("sigma", "-1").is_err());
    assert!(cfg.with_param("no.such.path", "1").is_err());
}

#[test]
fn gain_scales_with_sigma() {
    let text = fs::read_to_string(example("3dvar_nse.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let g = cfg.filter.gain.unwrap();
    for s in [0.2, 0.1, 0.05] {
        let c = cfg.with_param("sigma", &s.to_string()).unwrap();
        assert!((c.beta().unwrap() - g * s * s).abs() < 1e-15);
    }
}

#[test]
fn malformed_configs_are_rejected() {
    let good = fs::read_to_string(example("smoke_l63.toml")).unwrap();
    let cases = [
        good.replace("sigma = 0.5", "sigma = 0.0"),
        good.replace("beta = 5.0", ""),
        good.replace("dt = 0.002", "dt = -1.0"),
        good.replace("kind = \"3dvar\"", "kind = \"particle\""),
        good.replace("[time]", "[time]\nbogus = 1"),
        good.replace("replicas = 4", "replicas = 0"),
        "not = [toml".into(),
    ];
    for (i, text) in cases.iter().enumerate() {
        assert!(ExperimentConfig::from_toml(text).is_err(), "case {i} accepted");
    }
}

#[test]
fn smoke_run_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let a = run_twin_experiment(&smoke(&dir.path().join("a"))).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0, "smoke run took {:?}", start.elapsed());
    run_twin_experiment(&smoke(&dir.path().join("b"))).unwrap();
    // config.toml records the output directory, which differs
    for f in ["summary.json", "series.csv", "replicas.csv", "bound_report.json", "manifest.json"] {
        let x = fs::read_to_string(dir.path().join("a").join(f)).unwrap();
        let y = fs::read_to_string(dir.path().join("b").join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
    let s = &a.summary;
    assert_eq!(s.completed, 4);
    assert!(s.limsup.unwrap().limsup.is_finite());
    // the conditions are not met for Lorenz 63, and the status says so
    assert_eq!(s.status, RunStatus::ConditionsFalse);
    assert!(!a.series.is_empty());
}

#[test]
fn seeds_change_the_noise() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_twin_experiment(&smoke(&dir.path().join("a"))).unwrap();
    let mut cfg = smoke(&dir.path().join("b"));
    cfg.seeds.obs_noise += 1;
    let b = run_twin_experiment(&cfg).unwrap();
    assert_ne!(a.summary.limsup.unwrap().limsup, b.summary.limsup.unwrap().limsup);
}

#[test]
fn sweep_writes_one_directory_per_value_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path());
    cfg.time.horizon = 2.0;
    cfg.replicas = 2;
    let values: Vec<String> = ["0.5", "0.25"].map(String::from).to_vec();
    let cells = sweep(&cfg, "sigma", &values, dir.path()).unwrap();
    assert_eq!(cells.len(), 2);
    for v in &values {
        assert!(dir.path().join(format!("sigma_{v}")).join("summary.json").exists());
    }
    let rows = report(dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].run, "sigma_0.25");
    assert_eq!(rows[0].sigma, 0.25);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = example("smoke_l63.toml");
    let cfg = cfg.to_str().unwrap();

    let (code, stdout, _) = da(&["verify-identities", "--seed", "7", "--samples", "20"]);
    assert_eq!(code, exit::SUCCESS, "{stdout}");
    assert!(stdout.contains("trace_cancellation"));

    let (code, stdout, _) = da(&["run", "--config", cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, exit::CONDITIONS_FALSE, "{stdout}");
    assert!(out.join("summary.json").exists());

    let (code, _, _) = da(&["report", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, exit::SUCCESS);
    assert!(dir.path().join("report.csv").exists());

    let (code, _, _) = da(&["run", "--config", cfg, "--frobnicate"]);
    assert_eq!(code, exit::RUN_ERROR);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[system]\nkind = \"lorenz63\"\n").unwrap();
    let (code, _, stderr) = da(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, exit::RUN_ERROR);
    assert!(stderr.contains("error"));

    let (code, _, _) = da(&["run"]);
    assert_eq!(code, exit::RUN_ERROR);

    let (code, _, _) = da(&["--help"]);
    assert_eq!(code, exit::SUCCESS);
}

#[test]
fn cli_sweep_and_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example("smoke_l63.toml");
    let (code, stdout, stderr) = da(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--replicas",
        "1",
        "--param",
        "beta",
        "--values",
        "2,5",
    ]);
    assert_eq!(code, exit::CONDITIONS_FALSE, "{stdout}{stderr}");
    assert!(dir.path().join("beta_2").join("summary.json").exists());
    assert!(dir.path().join("beta_5").join("summary.json").exists());
    assert!(dir.path().join("report.csv").exists());

    let (code, stdout, _) = da(&["calibrate", "--config", example("enkf_l96.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, exit::SUCCESS, "{stdout}");
    assert!(stdout.contains("c_L"));
    assert!(dir.path().join("calibration.json").exists());
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example("smoke_l63.toml");
    let mut texts = Vec::new();
    for t in ["1", "3"] {
        let out = dir.path().join(t);
        let (code, _, _) = da(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", t]);
        assert_eq!(code, exit::CONDITIONS_FALSE);
        texts.push(fs::read_to_string(out.join("summary.json")).unwrap() + &fs::read_to_string(out.join("series.csv")).unwrap());
    }
    assert!(texts[0] == texts[1]);
}
