use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use msa_cli::manifest::sha256_hex;
use msa_cli::{load_manifest, parse_config, parse_config_str, ScenarioConfig, CONFIG_FILE, MANIFEST_FILE};

const MINIMAL: &str = r#"{
    "geometry": {"rows": 2, "cols": 2},
    "tx_paths": [{"gain_re": 1.0, "gain_im": 0.0,
                  "surface": {"theta_rad": 0.3, "phi_rad": 1.0},
                  "terminal": {"theta_rad": 0.0, "phi_rad": 0.0}}],
    "rx_paths": [{"gain_re": 0.6, "gain_im": -0.2, "delay_s": 4e-9,
                  "surface": {"theta_rad": 0.8, "phi_rad": 2.5},
                  "terminal": {"theta_rad": 0.2, "phi_rad": 0.0}}],
    "ber_sweep": {"snr_db": [0, 4, 8, 12], "min_bits": 20000, "target_errors": 100},
    "diversity_sweep": {"elements": [4, 8, 16], "realizations": 40}
}"#;

fn msa(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_msa"));
    cmd.args(args).env_remove("MSA_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("MSA_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn same_seed_gives_identical_metric_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        ok(&msa(&["ber-sweep", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seed", seed, "--quiet"], None));
    }
    let read = |d: &Path| fs::read(d.join("ber.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn ber_sweep_csv_falls_with_snr() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("run");
    ok(&msa(&["ber-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"], None));
    let csv = fs::read_to_string(out.join("ber.csv")).unwrap();
    let ber: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ber.len(), 4);
    assert!(ber.windows(2).all(|w| w[1] < w[0]), "{ber:?}");
}

#[test]
fn effective_config_round_trips() {
    let cfg = parse_config_str(MINIMAL).unwrap();
    let again = parse_config_str(&cfg.to_json()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.to_json(), again.to_json());

    let example = ScenarioConfig::example();
    assert_eq!(parse_config_str(&example.to_json()).unwrap(), example);

    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("run");
    ok(&msa(&["precode", "--config", &path, "--out", out.to_str().unwrap(), "--quiet"], None));
    assert_eq!(parse_config(&out.join(CONFIG_FILE)).unwrap(), cfg);
}

#[test]
fn negative_noise_variance_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let text = MINIMAL.replacen("\"geometry\"", "\"noise\": {\"sigma2\": -1}, \"geometry\"", 1);
    let err = parse_config_str(&text).unwrap_err();
    assert!(err.to_string().contains("noise.sigma2"), "{err}");

    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("run");
    let res = msa(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("noise.sigma2"));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_fail_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replacen("\"rows\": 2", "\"rows\": 2, \"pitch\": 0.01", 1));
    let res = msa(&["simulate", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()], None);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("pitch"));
}

#[test]
fn flags_override_config_and_env_sets_the_default_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replacen("\"geometry\"", "\"seed\": 5, \"geometry\"", 1));
    let env_dir = tmp.path().join("from_env");
    ok(&msa(&["diversity-sweep", "--config", &cfg, "--quiet"], Some(&env_dir)));
    let m = load_manifest(&env_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.config.seed, 5);
    assert_eq!(m.config.diversity_sweep.realizations, 40);

    let flag_dir = tmp.path().join("from_flag");
    ok(&msa(
        &["diversity-sweep", "--config", &cfg, "--out", flag_dir.to_str().unwrap(), "--seed", "7", "--trials", "12", "--quiet"],
        Some(&env_dir),
    ));
    let m = load_manifest(&flag_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.config.seed, 7);
    assert_eq!(m.config.diversity_sweep.realizations, 12);
}

#[test]
fn manifest_indexes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    ok(&msa(&["sense", "--out", out.to_str().unwrap(), "--quiet"], None));
    let m = load_manifest(&out.join(MANIFEST_FILE)).unwrap();
    let mut on_disk: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = m.outputs.iter().map(|o| o.file.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    for o in &m.outputs {
        let bytes = fs::read(out.join(&o.file)).unwrap();
        assert_eq!(sha256_hex(&bytes), o.sha256);
        assert_eq!(bytes.len() as u64, o.bytes);
    }
    for name in ["drive_waveform.csv", "target_spectrogram.csv", "recovered_probe0.csv", "fidelity.csv"] {
        assert!(listed.iter().any(|l| l == name), "{name}");
    }
    let header: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("recovered_probe0.json")).unwrap()).unwrap();
    let rows = fs::read_to_string(out.join("recovered_probe0.csv")).unwrap().lines().count();
    assert_eq!(header["frames"].as_u64().unwrap() as usize, rows);
    let fid = fs::read_to_string(out.join("fidelity.csv")).unwrap();
    for line in fid.lines().skip(1) {
        let f: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(f >= 0.95, "{line}");
    }
}

#[test]
fn failed_write_leaves_no_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    fs::create_dir_all(out.join("precode.json")).unwrap();
    let res = msa(&["precode", "--out", out.to_str().unwrap()], None);
    assert!(!res.status.success());
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("precode.json")]);
}

#[test]
fn trials_flag_is_rejected_where_meaningless() {
    let tmp = tempfile::tempdir().unwrap();
    let res = msa(&["sense", "--trials", "3", "--out", tmp.path().join("o").to_str().unwrap()], None);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("--trials"));
}

#[test]
fn rerun_reproduces_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("run");
    ok(&msa(&["diversity-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"], None));
    let manifest = out.join(MANIFEST_FILE);
    let replay_dir = tmp.path().join("replay");
    ok(&msa(&["rerun", "--manifest", manifest.to_str().unwrap(), "--out", replay_dir.to_str().unwrap(), "--quiet"], None));
    assert_eq!(fs::read(out.join("diversity.csv")).unwrap(), fs::read(replay_dir.join("diversity.csv")).unwrap());

    let text = fs::read_to_string(&manifest).unwrap();
    let m = load_manifest(&manifest).unwrap();
    let entry = m.outputs.iter().find(|o| o.file == "diversity.csv").unwrap();
    let forged = text.replace(&entry.sha256, &"0".repeat(64));
    let forged_path = tmp.path().join("forged.json");
    fs::write(&forged_path, forged).unwrap();
    let res = msa(&["rerun", "--manifest", forged_path.to_str().unwrap(), "--out", tmp.path().join("r2").to_str().unwrap()], None);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("diversity.csv"));

    let edited = text.replacen("\"realizations\": 40", "\"realizations\": 41", 1);
    assert_ne!(edited, text);
    fs::write(&forged_path, edited).unwrap();
    let res = msa(&["rerun", "--manifest", forged_path.to_str().unwrap(), "--out", tmp.path().join("r3").to_str().unwrap()], None);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("hash"));
}
