use std::path::Path;
use std::process::{Command, Output};

fn plab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parabolic-lab"))
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(dir: &Path) -> &str {
    dir.to_str().expect("utf-8 temp path")
}

const SMALL_CLOUD: &[&str] = &[
    "--set",
    "geometry.nx=16",
    "--set",
    "geometry.ny=12",
    "--set",
    "solver.t_end=0.05",
    "--set",
    "solver.snapshot_every=25",
];

#[test]
fn simulate_is_byte_for_byte_deterministic() {
    const FILES: [&str; 4] = ["series.csv", "summary.json", "snapshots/snap_000000.bin", "snapshots/snap_000002.bin"];
    let a = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", path(a.path())];
    args.extend_from_slice(SMALL_CLOUD);
    let mut runs = Vec::new();
    for _ in 0..2 {
        let out = plab(&args);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let bytes: Vec<Vec<u8>> = FILES
            .iter()
            .map(|f| std::fs::read(a.path().join(f)).unwrap_or_else(|e| panic!("{f}: {e}")))
            .collect();
        runs.push((out.stdout, bytes));
    }
    assert_eq!(runs[0].0, runs[1].0, "stdout differs between runs");
    for (file, (x, y)) in FILES.iter().zip(runs[0].1.iter().zip(&runs[1].1)) {
        assert!(x == y, "{file} differs between runs");
    }
    let csv = std::fs::read_to_string(a.path().join("series.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,norm_L2,norm_H1"), "{header}");
    assert!(header.ends_with("weighted,f_norm"), "{header}");
}

#[test]
fn config_file_sections_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        "# small periodic run\n[cloud]\nnu = 2\nbeta = 0.5\n[geometry]\nnx = 16\nny = 12\n[solver]\nt_end = 0.02\n",
    )
    .unwrap();
    let out = plab(&["simulate", "-c", config.to_str().unwrap(), "--set", "cloud.eta=0.25", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let cloud = &summary["config"]["cloud"];
    assert_eq!(cloud["nu"], 2.0);
    assert_eq!(cloud["eta"], 0.25);
    assert_eq!(cloud["beta"], 0.5);
}

#[test]
fn invalid_input_exits_with_two_and_names_the_key() {
    let out = plab(&["simulate", "--set", "cloud.viscosity=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cloud.viscosity"), "{}", stderr(&out));

    let out = plab(&["simulate", "--set", "cloud.nu=0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cloud.nu"), "{}", stderr(&out));

    let out = plab(&["exponents", "semilinear", "--p", "2", "--kappa", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("kappa > 1 + 2/n"), "{}", stderr(&out));

    let out = plab(&["decay-test", "--set", "geometry.periodic=false"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exponents_are_reported_as_json() {
    let out = plab(&["exponents", "semilinear", "--p", "2", "--kappa", "6"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert!((v["recipe"]["s_c"].as_f64().unwrap() - 0.1).abs() < 1e-12, "{v}");
    assert!(v["beta_constants"]["b_theta"]["xi"].as_f64().unwrap() > 0.0);
}

#[test]
fn spectral_bound_writes_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = plab(&[
        "spectral-bound", "--nu", "1", "--eta", "0", "--beta", "0", "--nx", "16", "--ny", "24", "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let spectrum = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(spectrum.lines().next(), Some("n,re_lambda_max,im_lambda_at_max"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let bound = summary["result"]["numeric_bound"].as_f64().unwrap();
    assert!((bound + std::f64::consts::PI.powi(2)).abs() < 1e-6, "{bound}");
}

#[test]
fn lab_contraction_reports_ratios_below_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = plab(&["lab", "contraction", "--dim", "6", "--seed", "3", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    let result = &v["result"];
    assert_eq!(result["contraction_holds"], true, "{v}");
    assert_eq!(result["inequalities_hold"], true, "{v}");
    assert!(result["max_ratio"].as_f64().unwrap() <= 0.5);
}
