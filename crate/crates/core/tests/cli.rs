use std::path::Path;
use std::process::Command;

fn auxcool(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_auxcool")).args(args).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = auxcool(&["simulate", "--N", "4", "--M", "4", "--nbar", "0.1", "--sample-dt", "0.01", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&a.join("trajectory.csv")), read(&b.join("trajectory.csv")));
}

#[test]
fn optimize_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = auxcool(&["optimize", "--segments", "2", "--max-iterations", "20", "--seed", "4", "--sample-dt", "0.05", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((read(&out.join("trajectory.csv")), read(&out.join("history.csv")), read(&out.join("protocol.json"))));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn summary_minimum_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = auxcool(&["simulate", "--sample-dt", "0.002", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let data = rows(&read(&out.join("trajectory.csv")));
    let min = data.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    let at = data.iter().find(|r| r[2] == min).unwrap()[0];
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["min_one_minus_pg"].as_f64().unwrap(), min);
    assert_eq!(summary["min_time"].as_f64().unwrap(), at);
    assert!(data.windows(2).all(|w| w[0][0] < w[1][0]));
    assert!((summary["analytic"]["p_min"].as_f64().unwrap() - 3.682e-3).abs() < 1e-6);
    assert_eq!(summary["truncation_warning"], false);
}

#[test]
fn protocol_json_round_trip_reproduces_objective() {
    let dir = tempfile::tempdir().unwrap();
    let opt = dir.path().join("opt");
    let o = auxcool(&["optimize", "--segments", "4", "--max-iterations", "30", "--sample-dt", "0.01", "--out", opt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim = dir.path().join("sim");
    let protocol = opt.join("protocol.json");
    let o = auxcool(&["simulate", "--protocol", protocol.to_str().unwrap(), "--sample-dt", "0.01", "--out", sim.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = rows(&read(&opt.join("trajectory.csv")));
    let b = rows(&read(&sim.join("trajectory.csv")));
    assert!((a.last().unwrap()[2] - b.last().unwrap()[2]).abs() <= 1e-12);
}

#[test]
fn limits_mode_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = auxcool(&["limits", "--N", "4", "--nbar", "0.1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&read(&dir.path().join("limits.json"))).unwrap();
    assert_eq!(v["formula"], "oscillator");
    assert!((v["p_min"].as_f64().unwrap() - 8.458e-4).abs() < 1e-7);
    assert!((v["tau"].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
}

#[test]
fn fig2a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let o = auxcool(&["fig2a", "--sample-dt", "0.01", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    let curves = m["curves"].as_array().unwrap();
    let params: Vec<(u64, u64, f64)> = curves.iter().map(|c| (c["N"].as_u64().unwrap(), c["M"].as_u64().unwrap(), c["nbar"].as_f64().unwrap())).collect();
    assert_eq!(params, vec![(2, 3, 0.5), (4, 4, 0.5), (4, 4, 0.1)]);
    for c in curves {
        assert_eq!(c["kappa"].as_f64().unwrap(), 0.0);
        let data = rows(&read(&dir.path().join(c["file"].as_str().unwrap())));
        assert_eq!(data.len(), c["samples"].as_u64().unwrap() as usize);
        assert_eq!(data[0][0], 0.0);
        assert!(c["min_one_minus_pg"].as_f64().unwrap() < 0.1 * data[0][2]);
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[system]\nN = 2\nM = 3\nnbar = 0.5\n[run]\nprotocol = \"zero\"\nsample_dt = 0.1\n").unwrap();
    let out = dir.path().join("o");
    let o = auxcool(&["simulate", "--config", cfg.to_str().unwrap(), "--nbar", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    for r in rows(&read(&out.join("trajectory.csv"))) {
        assert!((r[2] - 0.4).abs() < 1e-12);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bad = auxcool(&["simulate", "--gamma", "-0.5", "--out", out]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("gamma"));
    assert_eq!(auxcool(&["simulate", "--unknown"]).status.code(), Some(2));
    let missing = auxcool(&["simulate", "--protocol", "/no/such/protocol.json", "--out", out]);
    assert_eq!(missing.status.code(), Some(2));
    // A step far beyond the stability region of the integrator blows up.
    let cfg = dir.path().join("unstable.toml");
    std::fs::write(&cfg, "[optimizer]\nintegration_step = 50.0\nsegments = 1\nmax_iterations = 1\n").unwrap();
    let o = auxcool(&["optimize", "--config", cfg.to_str().unwrap(), "--kappa", "100", "--horizon", "100", "--out", out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
