use std::process::Command;

use iff::{BcCriterion, Criterion, SystemConfig};
use iff_cli::{run, ConfigError, Settings, CSV_HEADER, MANIFEST};

fn quick(extra: &str) -> Settings {
    Settings::parse(&format!("trials = 3\nsnr = 0,10\nmax_iters = 20\n{extra}")).unwrap()
}

#[test]
fn empty_config_gives_defaults() {
    let sc = Settings::parse("").unwrap().resolve().unwrap();
    let want = SystemConfig::symmetric(2, 2, 1, 0.0);
    let c = &sc.cfg;
    assert_eq!((c.pairs, c.relay_antennas, &c.user_antennas, &c.messages), (2, 2, &want.user_antennas, &want.messages));
    assert_eq!((c.relay_noise, c.user_noise, c.delta, c.target_rate), (1.0, 1.0, 1e-3, 1.0));
    assert!(c.uplink_gain.iter().chain(&c.downlink_gain).all(|&g| g == 1.0));
    assert_eq!((c.uplink_error, c.downlink_error), (0.0, 0.0));
    assert_eq!(sc.snr, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    assert_eq!(sc.schemes.len(), 2);
}

#[test]
fn zero_pairs_name_k() {
    match Settings::parse("K = 0").unwrap().resolve() {
        Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "K"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unknown_keys_are_errors() {
    match Settings::parse("K = 2\nbogus = 1\n") {
        Err(ConfigError::UnknownKey { line, key }) => assert_eq!((line, key.as_str()), (2, "bogus")),
        other => panic!("unexpected {other:?}"),
    }
    assert!(Settings::new().set("bogus", "1").is_err());
}

#[test]
fn malformed_values_name_the_field() {
    for (text, field) in [
        ("delta = abc", "delta"),
        ("snr = 5:0:10", "snr"),
        ("schemes = sum:min:robust", "schemes"),
        ("N_k = 2,2,2", "N_k"),
        ("trials = 0", "trials"),
        ("sigma2_h = 2", "sigma2_h"),
    ] {
        let err = Settings::parse(text).unwrap().resolve().unwrap_err();
        assert!(err.to_string().starts_with(field), "{text}: {err}");
    }
    assert!(matches!(Settings::parse("no equals sign"), Err(ConfigError::Syntax { line: 1, .. })));
}

#[test]
fn scheme_tokens_round_trip() {
    let sc = Settings::parse("schemes = max:sum:robust:err=0.1:n=1, sum:max:nonrobust").unwrap().resolve().unwrap();
    let a = &sc.schemes[0];
    assert_eq!((a.ma, a.bc, a.robust, a.csi_error, a.antennas), (Criterion::MaxEquation, BcCriterion::SumMse, true, Some(0.1), Some(1)));
    let b = &sc.schemes[1];
    assert_eq!((b.ma, b.bc, b.robust, b.csi_error), (Criterion::SumEquation, BcCriterion::MaxMse, false, None));
    let again = Settings::parse(&sc.manifest()).unwrap().resolve().unwrap();
    assert_eq!(again, sc);
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sc = quick("seed = 9\nsigma2_h = 0.1\nsigma2_g = 0.1\nschemes = sum:sum:robust,max:max:nonrobust").resolve().unwrap();
    let first = run(&sc, &dir.path().join("a")).unwrap();
    let manifest = Settings::load(&dir.path().join("a").join(MANIFEST)).unwrap().resolve().unwrap();
    let second = run(&manifest, &dir.path().join("b")).unwrap();
    for (x, y) in first.iter().zip(&second) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(std::fs::read(dir.path().join("a").join(MANIFEST)).unwrap(), std::fs::read(dir.path().join("b").join(MANIFEST)).unwrap());
}

#[test]
fn fig2_preset_adds_equation_columns() {
    let dir = tempfile::tempdir().unwrap();
    let sc = Settings::preset("fig2").unwrap().overlay(&Settings::parse("trials = 2").unwrap()).resolve().unwrap();
    assert_eq!(sc.snr.len(), 1);
    let paths = run(&sc, dir.path()).unwrap();
    assert_eq!(paths.len(), 2);
    for p in paths {
        let text = std::fs::read_to_string(p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), format!("{CSV_HEADER},nonconverged,mse_eq1,mse_eq2"));
        assert_eq!(lines.next().unwrap().split(',').count(), 10);
    }
}

#[test]
fn fig7_preset_covers_three_error_levels() {
    let sc = Settings::preset("fig7").unwrap().resolve().unwrap();
    for family in [Criterion::SumEquation, Criterion::MaxEquation] {
        let s: Vec<_> = sc.schemes.iter().filter(|s| s.ma == family).map(|s| (s.csi_error.unwrap(), s.robust)).collect();
        assert_eq!(s, vec![(0.0, false), (0.1, true), (0.1, false), (0.4, true), (0.4, false)]);
    }
    let labels: std::collections::HashSet<_> = sc.schemes.iter().map(|s| s.label.clone()).collect();
    assert_eq!(labels.len(), sc.schemes.len());
}

#[test]
fn binary_reports_errors_and_writes_results() {
    let exe = env!("CARGO_BIN_EXE_iff");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "K = 0\n").unwrap();
    let out = Command::new(exe).arg("--config").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("K"));

    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "name = t\nschemes = sum:sum:nonrobust\nmax_iters = 20\n").unwrap();
    let res = dir.path().join("res");
    let out = Command::new(exe)
        .args(["--config", good.to_str().unwrap(), "--trials", "2", "--snr", "0:10:20", "--seed", "5", "--out", res.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(res.join("t_sum_sum_nonrobust.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let manifest = std::fs::read_to_string(res.join(MANIFEST)).unwrap();
    assert!(manifest.contains("seed = 5\n") && manifest.contains("trials = 2\n") && manifest.contains("snr = 0,10,20\n"));
}
