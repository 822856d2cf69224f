use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ajdx");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ajdx(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const BAJD: &str = "[model]\nkind = \"bajd\"\n\n[params]\nkappa_theta = 0.04\nkappa = 1.0\nsigma = 0.2\nl = 3.0\nnu = 0.01\n\n[run]\ndt = 0.08333333333333333\ngate_mode = \"report\"\n";

#[test]
fn density_writes_the_oracle_comparison() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("integrated_bajd.toml");
    let o = ajdx(&[
        "density",
        "--config",
        cfg.to_str().unwrap(),
        "--J",
        "4",
        "--grid",
        "0.004:0.016:200",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.path().join("density.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("xi,g_expansion,g_oracle,log_diff"));
    assert_eq!(lines.count(), 200);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["order"], 4);
}

#[test]
fn emitted_coefficients_match_the_moments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bajd.toml", BAJD);
    let out = dir.path().join("out");
    let o = ajdx(&["expand", "--config", &cfg, "--J", "4", "--emit-coeffs", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("coeffs.json")).unwrap()).unwrap();
    let c = v["coefficients"].as_array().unwrap();
    assert_eq!(c[0]["alpha"][0], 0);
    assert_eq!(c[0]["c"].as_f64().unwrap(), 1.0);
    assert!(c[1]["c"].as_f64().unwrap().abs() < 1e-10);
    assert!(c[2]["c"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn price_table_has_forty_strikes() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("heston.toml");
    let o = ajdx(&[
        "price",
        "--config",
        cfg.to_str().unwrap(),
        "--strikes",
        "5.09:5.17:40",
        "--J",
        "4",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.path().join("price.csv")).unwrap();
    assert!(csv.starts_with("logK,C_expansion,C_oracle,IV_expansion,IV_oracle\n"));
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn config_errors_exit_2_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let cases = [
        (BAJD.replace("gate_mode", "step = 1\ngate_mode"), ":13:"),
        (BAJD.replace("l = 3.0", "l = 3.0\nl = 4.0"), ":9:"),
        (BAJD.replace("sigma = 0.2", "sigma = -0.2"), ":7:"),
        (BAJD.replace("nu = 0.01", "nu = 0.01\nmu = 1"), ":10:"),
    ];
    for (i, (text, line)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), text);
        let o = ajdx(&["moments", "--config", &cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", stderr(&o));
        assert!(stderr(&o).contains(line), "case {i}: {}", stderr(&o));
    }
    let cfg = write(dir.path(), "ok.toml", BAJD);
    let o = ajdx(&["density", "--config", &cfg, "--grid", "1:0:3", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = ajdx(&["price", "--config", &cfg, "--strikes", "5:6:3", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn gate_failures_exit_3_and_name_the_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let text = BAJD
        .replace("kappa_theta = 0.04", "kappa_theta = 0.005")
        .replace("gate_mode = \"report\"\n", "");
    let cfg = write(dir.path(), "gate.toml", &text);
    let out = dir.path().join("out");
    let o = ajdx(&["expand", "--config", &cfg, "--J", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let e = stderr(&o);
    assert!(e.contains("2κθ > σ²") && e.contains("violated"), "{e}");
}

#[test]
fn json_configs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{"model": {"kind": "heston"},
 "params": {"kappa_v": 1, "kappa_theta_v": 0.04, "sigma": 0.2, "kappa_theta_x": 0.03, "rho": -0.8},
 "state": {"x0": 5.1, "v0": 0.04},
 "run": {"dt": 0.019230769230769232}}"#;
    let cfg = write(dir.path(), "h.json", json);
    let out = dir.path().join("out");
    let o = ajdx(&["moments", "--config", &cfg, "--J", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("moments.csv")).unwrap().lines().count(), 7);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("heston.toml");
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = ajdx(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--datasets",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (
            fs::read(out.join("series_001.csv")).unwrap(),
            fs::read(out.join("manifest.json")).unwrap(),
        )
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn fit_reads_a_series_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let cfg = write(dir.path(), "bajd.toml", &BAJD.replace("[run]", "[data]\nn = 60\nburn_in = 10\n\n[run]"));
    let o = ajdx(&["simulate", "--config", &cfg, "--seed", "3", "--out", sim.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = BAJD.replace("[run]", "[data]\npath = \"sim/series.csv\"\n\n[run]");
    let cfg = write(dir.path(), "fit.toml", &text);
    let out = dir.path().join("fit");
    let o = ajdx(&["fit", "--config", &cfg, "--method", "qml", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("fit.csv")).unwrap();
    assert!(csv.starts_with("dataset,kappa_theta,kappa,sigma,l,nu,log_likelihood"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn unsupported_combinations_are_config_errors() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("integrated_bajd.toml");
    let o = ajdx(&["price", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = ajdx(&["loss", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn sharp_cir_boundary_reports_no_density() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("cir_sharp.toml");
    let o = ajdx(&["validate", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["summary"]["smoothness_p"], serde_json::Value::Null);
}

#[test]
fn loss_distribution_sums_to_one() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("credit.toml");
    let o = ajdx(&["loss", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.path().join("loss.csv")).unwrap();
    let total: f64 = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}
