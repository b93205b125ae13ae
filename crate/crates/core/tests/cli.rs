use std::process::{Command, Output};

fn nespin(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nespin"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("NESPIN_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("nespin-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn eigen_lists_twenty_levels() {
    let o = nespin(&["eigen", "--material", "Si:Bi", "--b0", "0.1"], None);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let levels = v["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 20);
    let sum: f64 = levels.iter().map(|l| l["energy_MHz"].as_f64().unwrap()).sum();
    // H₀ is traceless
    assert!(sum.abs() < 1e-6, "{sum}");
}

#[test]
fn s_band_spectrum_rows() {
    let o = nespin(&["spectrum", "--material", "Si:Bi", "--freq-GHz", "4.044"], None);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("b0_T,transition,freq_MHz,rate_rel"));
    let fields: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    for target in [0.14563, 0.34502] {
        assert!(fields.iter().any(|b| (b - target).abs() <= 1e-3), "{target} missing from {fields:?}");
    }
}

#[test]
fn si_p_has_no_owp() {
    let o = nespin(&["noise", "--material", "Si:P", "--owp"], None);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().skip(1).all(|l| l.ends_with(",none")), "{out}");
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(nespin(&["eigen"], None).status.code(), Some(2));
    assert_eq!(nespin(&["eigen", "--b0", "-1"], None).status.code(), Some(2));
    assert_eq!(nespin(&["eigen", "--b0", "0.1", "--material", "Si:Xx"], None).status.code(), Some(2));
    assert_eq!(nespin(&["bogus"], None).status.code(), Some(2));
    let cfg = tmp("bad.json");
    std::fs::write(&cfg, r#"{"b0": 0.1, "typo_key": 3}"#).unwrap();
    let o = nespin(&["eigen", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo_key"));
    assert_eq!(nespin(&["eigen", "--b0", "0.1"], Some("zero")).status.code(), Some(2));
    assert_eq!(nespin(&["bath", "--transition", "pm:m=-3", "--b0", "0.2", "--n-spins", "9"], None).status.code(), Some(2));
}

#[test]
fn config_file_and_flag_override() {
    let cfg = tmp("cfg.json");
    std::fs::write(&cfg, r#"{"material": "Si:P", "b0": 0.5, "format": "csv"}"#).unwrap();
    let from_file = stdout(&nespin(&["eigen", "--config", cfg.to_str().unwrap()], None));
    assert_eq!(from_file.lines().count(), 5);
    let overridden = stdout(&nespin(&["eigen", "--config", cfg.to_str().unwrap(), "--b0", "0.25"], None));
    let direct = stdout(&nespin(&["eigen", "--material", "Si:P", "--b0", "0.25", "--format", "csv"], None));
    assert_eq!(overridden, direct);
    assert_ne!(overridden, from_file);
    let custom = tmp("custom.json");
    std::fs::write(
        &custom,
        r#"{"material": {"two_i": 1, "gamma_e_ghz_per_t": 27.974, "gamma_n_mhz_per_t": 17.251, "a_mhz": 117.5}, "b0": 0.25, "format": "csv"}"#,
    )
    .unwrap();
    assert_eq!(stdout(&nespin(&["eigen", "--config", custom.to_str().unwrap()], None)), direct);
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let args = ["control", "--material", "Si:Bi", "--transition", "pp:m=0", "--rabi-MHz", "2", "--b-min", "0.1", "--b-max", "0.6", "--points", "6"];
    let one = nespin(&args, Some("1"));
    let four = nespin(&args, Some("4"));
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let spec = ["noise", "--material", "Si:Bi", "--kind", "diabaticZ", "--points", "7"];
    assert_eq!(nespin(&spec, Some("1")).stdout, nespin(&spec, Some("3")).stdout);
}

#[test]
fn eigensystem_round_trip_reproduces_spectrum() {
    let es = tmp("es.json");
    let o = nespin(&["eigen", "--material", "Si:Bi", "--b0", "0.2345", "--out", es.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let stored = nespin(&["spectrum", "--material", "Si:Bi", "--eigensystem", es.to_str().unwrap()], None);
    let direct = nespin(&["spectrum", "--material", "Si:Bi", "--b0", "0.2345"], None);
    assert_eq!(stored.status.code(), Some(0));
    assert_eq!(stored.stdout, direct.stdout);
    assert_eq!(stdout(&stored).lines().count(), 37);
}

#[test]
fn protocol_json_shape() {
    let o = nespin(&["protocol", "--scheme", "hahn_t2", "--channel", "dephasing", "--t2", "2", "--schedule", "0.5,1,1.5,2"], None);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["scheme"], "hahn_t2");
    assert_eq!(v["schedule_us"].as_array().unwrap().len(), 4);
    assert_eq!(v["sx"].as_array().unwrap().len(), 4);
    let t2 = v["fit"]["params"]["T2"].as_f64().unwrap();
    assert!((t2 - 2.0).abs() < 1e-9);
    assert_eq!(v["fit"]["model"], "exponential");
}

#[test]
fn csv_time_series() {
    let o = nespin(&["bath", "--material", "Si:Bi", "--transition", "pm:m=-3", "--at-owp", "--points", "5", "--n-spins", "3"], None);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("t_us,value"));
    for l in lines {
        let v: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }
    assert!(!out.contains('\r'));
}

#[test]
fn golden_single_criterion() {
    let o = nespin(&["golden", "--criterion", "9"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("PASS 9"));
}
