use std::path::PathBuf;
use std::process::Command;

use proptest::prelude::*;
use wavelab::config::{Detector, Method, ProfileKind, SystemSection};
use wavelab::csv::float;
use wavelab::experiments::{acpr_obo, ber, ccdf};
use wavelab::{ExperimentConfig, HarnessError, Runner};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small_2x2() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::minimal(SystemSection {
        n_t: 2,
        n_r: 2,
        order: 4,
        subcarriers: 16,
        oversampling: 4,
    });
    cfg.seed = 11;
    cfg.ber.p_snr_db = vec![5.0, 15.0];
    cfg.ber.frames = 12;
    cfg.ccdf.frames = 100;
    cfg.acpr_obo.frames = 8;
    cfg
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = ExperimentConfig::parse("[system]\nn_t = 2\nn_r = 2\norder = 4\n").unwrap();
    assert_eq!(cfg.seed, 0);
    assert_eq!((cfg.system.subcarriers, cfg.system.oversampling), (72, 4));
    assert_eq!(cfg.channel.profile, ProfileKind::Multipath);
    assert_eq!(cfg.transmitter.method, Method::None);
    assert_eq!(cfg.receiver.detector, Detector::Mle);
    assert_eq!(cfg.amplifier.ibo_db, 6.0);
    assert_eq!(cfg.ber.frames, 7000);
    assert_eq!(cfg.ber.p_snr_db.len(), 7);
}

#[test]
fn misspelled_key_is_named() {
    let err = ExperimentConfig::parse("[system]\nn_t = 2\nn_r = 2\norder = 4\n[amplifier]\nibo = 3.0\n").unwrap_err();
    assert!(matches!(err, HarnessError::Config(ref m) if m.contains("ibo")), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn missing_system_is_rejected() {
    let err = ExperimentConfig::parse("seed = 3\n").unwrap_err();
    assert!(matches!(err, HarnessError::Config(ref m) if m.contains("system")), "{err}");
}

#[test]
fn shipped_configs_round_trip() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = wavelab::load_config(&path).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
    }
}

#[test]
fn cross_field_rules_are_enforced() {
    let mut cfg = small_2x2();
    cfg.transmitter.method = Method::Cae;
    assert!(cfg.validate().is_err());
    cfg.receiver.detector = Detector::Cae;
    cfg.amplifier.enabled = false;
    assert!(cfg.validate().is_err());

    let mut cfg = small_2x2();
    cfg.system.n_r = 3;
    cfg.channel.profile = ProfileKind::Identity;
    assert!(cfg.validate().is_err());

    let mut cfg = small_2x2();
    cfg.train.gradual_start_epoch = cfg.train.epochs;
    assert!(cfg.validate().is_ok());
    cfg.train.gradual_start_epoch += 1;
    assert!(cfg.validate().is_err());
}

#[test]
fn missing_checkpoint_is_a_config_error() {
    let mut cfg = small_2x2();
    cfg.transmitter.method = Method::Cae;
    cfg.receiver.detector = Detector::Cae;
    cfg.transmitter.checkpoint = Some("/nonexistent/model.ckpt".into());
    let err = ber::run_ber(&cfg, &Runner::new(Some(1)).unwrap()).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let mut cfg = small_2x2();
    cfg.transmitter.method = Method::Slm;
    cfg.transmitter.slm_candidates = 4;
    let one = Runner::new(Some(1)).unwrap();
    let three = Runner::new(Some(3)).unwrap();
    let a = ber::ber_table(&ber::run_ber(&cfg, &one).unwrap()).render();
    let b = ber::ber_table(&ber::run_ber(&cfg, &three).unwrap()).render();
    assert_eq!(a, b);
    let a = ccdf::ccdf_table(&ccdf::run_ccdf(&cfg, &one).unwrap()).render();
    let b = ccdf::ccdf_table(&ccdf::run_ccdf(&cfg, &three).unwrap()).render();
    assert_eq!(a, b);
}

#[test]
fn seed_controls_every_draw() {
    let runner = Runner::new(None).unwrap();
    let cfg = small_2x2();
    let first = ber::ber_table(&ber::run_ber(&cfg, &runner).unwrap()).render();
    let second = ber::ber_table(&ber::run_ber(&cfg, &runner).unwrap()).render();
    assert_eq!(first, second);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(first, ber::ber_table(&ber::run_ber(&other, &runner).unwrap()).render());
}

#[test]
fn noiseless_linear_link_is_error_free() {
    let mut cfg = small_2x2();
    cfg.channel.profile = ProfileKind::Identity;
    cfg.amplifier.enabled = false;
    cfg.ber.p_snr_db = vec![f64::INFINITY, 300.0];
    for detector in [Detector::Mle, Detector::Zf] {
        cfg.receiver.detector = detector;
        let points = ber::run_ber(&cfg, &Runner::new(None).unwrap()).unwrap();
        assert!(points.iter().all(|p| p.y == 0.0), "{detector:?}: {points:?}");
    }
}

#[test]
fn zero_forcing_never_beats_ml_on_average() {
    let mut cfg = small_2x2();
    cfg.amplifier.enabled = false;
    cfg.ber.p_snr_db = vec![5.0, 10.0];
    cfg.ber.frames = 60;
    let runner = Runner::new(None).unwrap();
    let mle = ber::run_ber(&cfg, &runner).unwrap();
    cfg.receiver.detector = Detector::Zf;
    let zf = ber::run_ber(&cfg, &runner).unwrap();
    for (m, z) in mle.iter().zip(&zf) {
        assert!(z.y >= m.y, "zf {} < mle {} at {} dB", z.y, m.y, m.x);
    }
}

#[test]
fn acpr_obo_rows_depend_only_on_method() {
    let mut cfg = small_2x2();
    cfg.acpr_obo.methods = vec![Method::None, Method::Cf, Method::None];
    let rows = acpr_obo::run_acpr_obo(&cfg, &Runner::new(None).unwrap()).unwrap();
    assert_eq!(rows[0], rows[2]);
    assert!(rows[1].acpr_db < rows[0].acpr_db);
    let text = acpr_obo::acpr_obo_table(&rows).render();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn ccdf_endpoints() {
    let curve = ccdf::ccdf_curve(&[3.0, 5.0, 9.0], &[0.0, 4.0, 9.0, 60.0]);
    let values: Vec<f64> = curve.iter().map(|p| p.y).collect();
    assert_eq!(values, vec![1.0, 2.0 / 3.0, 0.0, 0.0]);
    assert_eq!(ccdf::threshold_at(&curve, 0.5), Some(9.0));
}

proptest! {
    #[test]
    fn csv_floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn ccdf_is_monotone(samples in prop::collection::vec(0.0..20.0f64, 1..200)) {
        let grid: Vec<f64> = (0..=60).map(|i| i as f64 * 0.25).collect();
        let curve = ccdf::ccdf_curve(&samples, &grid);
        prop_assert!(curve.windows(2).all(|w| w[1].y <= w[0].y));
        prop_assert!(curve.iter().all(|p| (0.0..=1.0).contains(&p.y)));
    }
}

fn wavelab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wavelab")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\nn_t = 2\nn_r = 2\norder = 5\n").unwrap();
    let out = wavelab(&["ber", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("order"));

    let missing = wavelab(&["ccdf", "--config", "/nonexistent.toml"]);
    assert_eq!(missing.status.code(), Some(1));

    let good = configs_dir().join("ccdf_qpsk_2x2.toml");
    let csv = dir.path().join("ccdf.csv");
    let ok = wavelab(&[
        "ccdf",
        "--config",
        good.to_str().unwrap(),
        "--frames",
        "100",
        "--workers",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("papr0_db,ccdf,frames,stderr\n"));

    let stdout = wavelab(&["ccdf", "--config", good.to_str().unwrap(), "--frames", "100"]);
    assert_eq!(String::from_utf8_lossy(&stdout.stdout), text);
}
