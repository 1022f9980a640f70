use std::fs;
use std::path::Path;
use std::process::Command;

use ngdpinn_cli::config::ProblemKind;
use ngdpinn_cli::{exit, parse_config_str, run, Mode, Overrides, RunManifest, Status};
use ngdpinn_core::{ActivationKind, GramReport};

fn ngdpinn(args: &[&str], cfg: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ngdpinn"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn minimal_pinn_config_gets_defaults() {
    let cfg = parse_config_str("mode = \"pinn-ngd\"\nseed = 1\nd = 2\nn1 = 4\nn2 = 4\nm = 64\n", &Overrides::default())
        .unwrap();
    assert_eq!(cfg.instance.as_deref(), Some("poly-sine"));
    assert_eq!(cfg.activation, Some(ActivationKind::ReluCubed));
    assert_eq!(cfg.iters, Some(500));
    assert_eq!((cfg.diag_remainder, cfg.diag_drift, cfg.diag_gram), (Some(true), Some(true), Some(false)));
    assert_eq!(cfg.n_mc, None);

    let again = parse_config_str(&cfg.to_toml(), &Overrides::default()).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn overrides_replace_file_values() {
    let o = Overrides {
        mode: Some(Mode::GramReport),
        out: Some("elsewhere".into()),
        seed: Some(99),
    };
    let cfg = parse_config_str("mode = \"regression-gd\"\nseed = 1\nn = 4\nd = 2\n", &o).unwrap();
    assert_eq!(cfg.mode, Mode::GramReport);
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.problem, Some(ProblemKind::Regression));
    assert_eq!(cfg.out, Path::new("elsewhere"));
}

#[test]
fn fixed_eta_without_value_names_eta() {
    let src = "mode = \"regression-gd\"\nseed = 1\nn = 4\nd = 2\nm = 16\neta_mode = \"fixed\"\n";
    let err = parse_config_str(src, &Overrides::default()).unwrap_err();
    assert_eq!(err.key.as_deref(), Some("eta"));
    assert!(err.to_string().contains("eta"));
}

#[test]
fn unknown_key_reports_its_line() {
    let src = "mode = \"regression-gd\"\nseed = 1\nwidth = 16\n";
    let err = parse_config_str(src, &Overrides::default()).unwrap_err();
    assert_eq!(err.key.as_deref(), Some("width"));
    assert_eq!(err.line, Some(3));
    assert!(err.to_string().starts_with("line 3, key `width`"), "{err}");
}

#[test]
fn inapplicable_and_invalid_keys_are_rejected() {
    let cases = [
        ("mode = \"regression-gd\"\nseed = 1\nn = 4\nd = 2\nm = 8\nn1 = 3\n", "n1"),
        ("mode = \"pinn-ngd\"\nseed = 1\nd = 1\nn1 = 2\nn2 = 2\nm = 8\nn_mc = 500\n", "n_mc"),
        ("mode = \"pinn-ngd\"\nseed = 1\nd = 1\nn1 = 2\nn2 = 2\nm = 8\neta_mode = \"fixed\"\neta = 1.5\n", "eta"),
        ("mode = \"pinn-gd\"\nseed = 1\nd = 1\nn1 = 2\nn2 = 2\nm = 8\nactivation = \"relu\"\n", "activation"),
        ("mode = \"regression-gd\"\nseed = 1\nn = 4\nd = 2\nm = 8\neta = 0.1\n", "eta"),
        ("mode = \"check-suite\"\nseed = 1\nm = 8\n", "m"),
        ("mode = \"pinn-gd\"\nseed = 1\nd = 1\nn1 = 2\nn2 = 2\nm = 8\ninstance = \"wave\"\n", "instance"),
    ];
    for (src, key) in cases {
        let err = parse_config_str(src, &Overrides::default()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some(key), "{src}: {err}");
    }
}

#[test]
fn gram_report_contains_spectral_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(
        &format!(
            "mode = \"gram-report\"\nseed = 5\nn = 6\nd = 3\nm = 512\nout = {:?}\n",
            tmp.path().join("g")
        ),
        &Overrides::default(),
    )
    .unwrap();
    let m = run(&cfg).unwrap();
    assert_eq!(m.status, Status::Pass);
    let text = fs::read_to_string(cfg.out.join("report.json")).unwrap();
    for key in ["lambda0", "spectral_norm_hinf", "suggested_eta"] {
        assert!(text.contains(key), "missing {key}");
    }
    let report: GramReport = serde_json::from_str(&text).unwrap();
    assert!(report.lambda0 > 0.0);
    assert!((report.suggested_eta - 0.5 / report.spectral_norm_hinf).abs() < 1e-15);
    assert!(report.concentration_error.is_some());
}

#[test]
fn regression_run_writes_manifest_with_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let cfg_path = tmp.path().join("r.toml");
    fs::write(&cfg_path, "seed = 2\nn = 6\nd = 2\nm = 256\niters = 60\n").unwrap();
    let o = ngdpinn(&["regression-gd"], &cfg_path, &out);
    let m = manifest(&out);
    assert_eq!(o.status.code(), Some(i32::from(m.status.exit_code())));
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for f in ["config.toml", "dataset.json", "report.json", "trace.csv", "trace.json"] {
        assert!(names.contains(&f), "missing {f} in {names:?}");
    }
    for f in &m.files {
        assert_eq!(fs::metadata(out.join(&f.path)).unwrap().len(), f.bytes);
        assert_eq!(f.sha256.len(), 64);
    }
    assert!(!out.join("manifest.json.tmp").exists());
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 62);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("p.toml");
    fs::write(&cfg_path, "seed = 8\nd = 1\nn1 = 5\nn2 = 5\nm = 128\niters = 15\nn_mc = 1000\n").unwrap();
    let out = tmp.path().join("p");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let o = ngdpinn(&["pinn-gd"], &cfg_path, &out);
        assert!(o.status.success() || o.status.code() == Some(i32::from(exit::CHECK_FAILURE)));
        let m = manifest(&out);
        let files: Vec<(String, Vec<u8>)> = m
            .files
            .iter()
            .map(|f| (f.path.clone(), fs::read(out.join(&f.path)).unwrap()))
            .collect();
        snapshots.push((m.files, files));
        fs::remove_dir_all(&out).unwrap();
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn quick_suite_exit_code_matches_rollup() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("s.toml");
    fs::write(&cfg_path, "seed = 1\nprofile = \"quick\"\nn_mc = 2000\n").unwrap();
    let out = tmp.path().join("s");
    let o = ngdpinn(&["check-suite"], &cfg_path, &out);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let expected = match report["overall"].as_str().unwrap() {
        "fail" => exit::CHECK_FAILURE,
        _ => exit::PASS,
    };
    assert_eq!(o.status.code(), Some(i32::from(expected)));
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() >= 10);
    for c in checks {
        assert!(out.join(c["file"].as_str().unwrap()).exists());
    }
}

#[test]
fn config_errors_exit_with_invalid_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("bad.toml");
    fs::write(&cfg_path, "seed = 1\nn = 4\nd = 2\nm = 8\nbogus = 1\n").unwrap();
    let o = ngdpinn(&["regression-gd"], &cfg_path, &tmp.path().join("x"));
    assert_eq!(o.status.code(), Some(i32::from(exit::INVALID_CONFIG)));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = ngdpinn(&["regression-gd"], &tmp.path().join("missing.toml"), &tmp.path().join("x"));
    assert_eq!(o.status.code(), Some(i32::from(exit::INVALID_CONFIG)));
}

#[test]
fn divergence_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("div.toml");
    fs::write(
        &cfg_path,
        "seed = 1\nd = 1\nn1 = 4\nn2 = 4\nm = 64\nactivation = \"relu-cubed\"\neta_mode = \"fixed\"\neta = 1e4\niters = 50\nn_mc = 1000\n",
    )
    .unwrap();
    let out = tmp.path().join("div");
    let o = ngdpinn(&["pinn-gd"], &cfg_path, &out);
    assert_eq!(o.status.code(), Some(i32::from(exit::NUMERICAL_FAILURE)));
    let m = manifest(&out);
    assert_eq!(m.status, Status::NumericalFailure);
    assert!(m.message.is_some());
    assert!(out.join("trace.csv").exists());
}
