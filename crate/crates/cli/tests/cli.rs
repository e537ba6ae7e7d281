use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stirap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stirap"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("STIRAP_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = stirap(dir, args);
    assert!(
        out.status.success(),
        "stirap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> Value {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "expected one JSON line, got {text:?}");
    serde_json::from_str(&text).unwrap()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn matrix(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().map(|x| x.parse::<f64>().unwrap()).collect())
        .collect()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn spectrum_has_fixed_columns_and_tracks_first_order() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["spectrum", "--a", "5", "--L", "20", "--gamma", "0.1", "--samples", "101"]);
    let (header, rows) = csv(&dir.path().join("spectrum.csv"));
    assert_eq!(header.len(), 13);
    assert_eq!(header[0], "z_over_L");
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[100][0], 1.0);
    for r in &rows {
        assert_eq!(r.len(), 13);
        // second-order error is bounded by gamma^2
        assert!((r[5] - r[8]).abs() < 0.01, "Im E0 {} vs first order {}", r[5], r[8]);
        let dark: f64 = r[10..13].iter().sum();
        assert!(dark > 0.99 && dark < 1.01);
    }
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectrum_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["config"]["gamma"], "0.1");
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.iter().any(|o| o.ends_with("spectrum.csv")));
}

#[test]
fn lossless_spectrum_is_real() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["spectrum", "--a", "5", "--L", "20", "--gamma", "0", "--samples", "41"]);
    let (_, rows) = csv(&dir.path().join("spectrum.csv"));
    for r in &rows {
        assert!(r[4..10].iter().all(|&x| x == 0.0), "{r:?}");
    }
}

#[test]
fn numbers_carry_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["spectrum", "--a", "5", "--L", "20", "--samples", "3"]);
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let cell = text.lines().nth(2).unwrap().split(',').nth(1).unwrap();
    let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}

#[test]
fn usage_errors_leave_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = stirap(dir.path(), &["spectrum", "--site", "nowhere"]);
    assert!(!out.status.success());
    let out = stirap(dir.path(), &["spectrum", "--L=-3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("L must be"));
    let out = stirap(dir.path(), &["spectrum", "--gamma", "0.1", "--site", "none"]);
    assert!(!out.status.success());
    assert!(files_in(dir.path()).is_empty(), "{:?}", files_in(dir.path()));
}

#[test]
fn propagate_reports_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["propagate", "--a", "5", "--L", "20", "--gamma", "0", "--samples", "51"]);
    let s = json(&out);
    assert!(s["P"].as_f64().unwrap() > 0.99);
    assert!((s["final_norm"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    let file: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(file, s);

    let (header, rows) = csv(&dir.path().join("trajectory.csv"));
    assert_eq!(header.len(), 11);
    assert_eq!(rows.len(), 51);
    let last = rows.last().unwrap();
    assert_eq!(last[0], 20.0);
    let norm = last[1].powi(2) + last[2].powi(2) + last[3].powi(2) + last[4].powi(2) + last[5].powi(2) + last[6].powi(2);
    assert!((norm - last[7]).abs() < 1e-12);
    assert!((0.5 * (last[8] + last[10]) - s["P_nonad"].as_f64().unwrap()).abs() < 1e-15);
}

#[test]
fn symmetric_dark_state_splits_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&ok(dir.path(), &["propagate", "--a", "0", "--gamma", "0", "--initial", "dark"]));
    assert!((s["P"].as_f64().unwrap() - 0.5).abs() < 1e-9, "{s}");
}

#[test]
fn frames_agree() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["propagate", "--a", "5", "--L", "20", "--gamma", "0.2", "--site", "target", "--rel-tol", "1e-11"];
    let bare = json(&ok(dir.path(), &[&base[..], &["--frame", "bare"]].concat()));
    let exact = json(&ok(dir.path(), &[&base[..], &["--frame", "adiabatic"]].concat()));
    assert!((bare["P"].as_f64().unwrap() - exact["P"].as_f64().unwrap()).abs() < 1e-6);
    assert!((bare["P_nonad"].as_f64().unwrap() - exact["P_nonad"].as_f64().unwrap()).abs() < 1e-8);
}

#[test]
fn reduced_frame_runs_the_reduced_model() {
    use stirap::model::{AbsorptionSite, ModelConfig};
    use stirap::propagate::{self, IntegratorSettings, ReducedVariant};

    let dir = tempfile::tempdir().unwrap();
    let s = json(&ok(
        dir.path(),
        &["propagate", "--a", "5", "--L", "30", "--gamma", "0.4", "--site", "initial", "--frame", "reduced"],
    ));
    let cfg = ModelConfig::new(5.0, 30.0, 0.4, AbsorptionSite::Initial).unwrap();
    let traj = propagate::integrate_reduced(&cfg, ReducedVariant::InitialAbsorption, &IntegratorSettings::default())
        .unwrap();
    let a = traj.final_coeffs().unwrap();
    let p_nonad = 0.5 * (a[0].norm_sqr() + a[2].norm_sqr());
    assert_eq!(s["P_nonad"].as_f64().unwrap(), p_nonad);
    assert_eq!(s["final_norm"].as_f64().unwrap(), traj.final_norm());
    // the launch waveguide decays, so little light is left at the end
    assert!(traj.final_norm() < 0.5);

    let out = stirap(dir.path(), &["propagate", "--gamma", "0.1", "--site", "center", "--frame", "reduced"]);
    assert!(!out.status.success());
}

#[test]
fn threshold_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let lz = json(&ok(dir.path(), &["threshold", "--method", "lz", "--a", "5", "--L", "20"]));
    assert!((lz["gamma_cr"].as_f64().unwrap() - 0.3043).abs() < 1e-3);
    assert_eq!(lz["method"], "lz_analytic");
    assert_eq!(lz["width"].as_f64().unwrap(), 0.1);
    assert_eq!(lz["inputs"]["L"].as_f64().unwrap(), 20.0);

    let ini = json(&ok(dir.path(), &["threshold", "--method", "initial", "--a", "5", "--L", "60"]));
    assert!((ini["gamma_cr"].as_f64().unwrap() - 0.6194).abs() < 1e-4);

    let given = json(&ok(dir.path(), &["threshold", "--method", "semianalytic", "--L", "20", "--pnonad", "0.001"]));
    let expect = (1.0f64 / 0.002 - 1.0).ln() / 20.0;
    assert!((given["gamma_cr"].as_f64().unwrap() - expect).abs() < 1e-14);
}

#[test]
fn threshold_from_measurement() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&ok(
        dir.path(),
        &["threshold", "--method", "semianalytic", "--a", "5", "--L", "20", "--measure-gamma", "0.2"],
    ));
    assert_eq!(s["method"], "semi_analytic");
    assert_eq!(s["inputs"]["measure_gamma"].as_f64().unwrap(), 0.2);
    let p = s["inputs"]["p_nonad"].as_f64().unwrap();
    assert!(p > 0.0 && p < 0.25);
    let g = s["gamma_cr"].as_f64().unwrap();
    assert!((g - ((1.0 / (2.0 * p) - 1.0).ln() / 20.0)).abs() < 1e-12);
    assert!(g > 0.15 && g < 0.35);
}

#[test]
fn threshold_errors_explain_themselves() {
    let dir = tempfile::tempdir().unwrap();
    for (args, needle) in [
        (&["threshold", "--method", "semianalytic", "--L", "20", "--pnonad", "0.7"][..], "no threshold"),
        (&["threshold", "--method", "lz", "--a", "5", "--L", "1"][..], "no threshold"),
        (&["threshold", "--method", "semianalytic", "--a", "5", "--L", "20"][..], "--pnonad or --measure-gamma"),
        (&["threshold", "--a", "5", "--L", "20"][..], "missing --method"),
    ] {
        let out = stirap(dir.path(), args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
    assert!(files_in(dir.path()).is_empty());
}

#[test]
fn exceptional_points() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&ok(dir.path(), &["ep", "--a", "5", "--L", "1", "--n-range", "-1..1", "--probe-z", "0.5,0.1"]));
    let points = s["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    let p0 = points.iter().find(|p| p["n"] == 0).unwrap();
    assert!((p0["z_re"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    assert!((p0["z_im"].as_f64().unwrap() - 0.15708).abs() < 1e-5);
    for p in points {
        assert!(p["residual"].as_f64().unwrap() < 1e-8, "{p}");
    }
    let pm = points.iter().find(|p| p["n"] == -1).unwrap();
    assert_eq!(pm["z_im"].as_f64().unwrap(), -p0["z_im"].as_f64().unwrap());
    assert!(s["probe"]["residual"].as_f64().unwrap() > 1e-3);

    let out = stirap(dir.path(), &["ep", "--a", "0", "--L", "1"]);
    assert!(!out.status.success());
}

#[test]
fn sweep_writes_matrix_and_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--a", "5", "--site", "target", "--L-min", "15", "--L-max", "25", "--L-count", "3",
        "--gamma-min", "0", "--gamma-max", "0.6", "--gamma-count", "13",
    ];
    ok(dir.path(), &args);
    let m = matrix(&dir.path().join("matrix_a0.txt"));
    assert_eq!(m.len(), 4);
    assert!(m[0][0].is_nan());
    assert_eq!(m[0][1..].len(), 13);
    assert_eq!(m[0][13], 0.6);
    assert_eq!(m.iter().skip(1).map(|r| r[0]).collect::<Vec<_>>(), vec![15.0, 20.0, 25.0]);
    assert!(m[2][1] > 0.99);

    let (header, rows) = csv(&dir.path().join("boundary_a0.csv"));
    assert_eq!(header, ["L", "gamma_cr", "width", "gamma_cr_lz", "gamma_cr_semianalytic", "gamma_cr_initial"]);
    for r in &rows {
        assert!(r[1] > 0.1 && r[1] < 0.4, "{r:?}");
        assert!(r[4].is_finite());
        assert!(r[5].is_nan());
        // LZ column is kappa - ln2/L up to exponentially small terms
        let kappa = 2.0 * 1.2254167024651776f64.powi(2) / (5.0 * std::f64::consts::PI.sqrt());
        assert!((r[3] - (kappa - std::f64::consts::LN_2 / r[0])).abs() < 1e-3);
    }
}

#[test]
fn initial_site_sweep_has_initial_column() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["sweep", "--site", "initial", "--L-min", "40", "--L-max", "60", "--L-count", "2", "--gamma-count", "31"],
    );
    let (_, rows) = csv(&dir.path().join("boundary_a0.csv"));
    assert!((rows[1][5] - 0.61945).abs() < 1e-4);
    assert!(rows.iter().all(|r| r[3].is_nan() && r[4].is_nan()));
}

#[test]
fn resumed_sweep_matches_fresh_run() {
    let fresh = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--L-min", "10", "--L-max", "20", "--L-count", "4", "--gamma-max", "0.5", "--gamma-count", "6",
        "--no-boundary",
    ];
    ok(fresh.path(), &args);

    let resumed = tempfile::tempdir().unwrap();
    ok(resumed.path(), &args);
    let ck = resumed.path().join("checkpoints/checkpoint_a0.csv");
    let text = std::fs::read_to_string(&ck).unwrap();
    let keep: Vec<&str> = text.lines().take(9).collect();
    // simulate an interrupt mid-line
    std::fs::write(&ck, format!("{}\n0,3,1.0e1", keep.join("\n"))).unwrap();
    std::fs::remove_file(resumed.path().join("matrix_a0.txt")).unwrap();
    ok(resumed.path(), &[&args[..], &["--resume"]].concat());

    let a = std::fs::read(fresh.path().join("matrix_a0.txt")).unwrap();
    let b = std::fs::read(resumed.path().join("matrix_a0.txt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn manifest_repeats_the_run() {
    let first = tempfile::tempdir().unwrap();
    ok(
        first.path(),
        &["propagate", "--a", "4", "--L", "15", "--gamma", "0.3", "--site", "target", "--rel-tol", "1e-10", "--samples", "31"],
    );
    let manifest = first.path().join("propagate_manifest.json");
    let second = tempfile::tempdir().unwrap();
    ok(second.path(), &["propagate", "--config", manifest.to_str().unwrap()]);
    for f in ["trajectory.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(first.path().join(f)).unwrap(),
            std::fs::read(second.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let m2: Value =
        serde_json::from_str(&std::fs::read_to_string(second.path().join("propagate_manifest.json")).unwrap()).unwrap();
    assert_eq!(m2["inputs"][0].as_str().unwrap(), manifest.to_str().unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "# shared\na = 5\nL = 1\n\n[threshold]\nmethod = initial\n[ep]\nn-range = -1..0\n").unwrap();
    let c = cfg.to_str().unwrap();
    let t = json(&ok(dir.path(), &["threshold", "--config", c, "--L", "60"]));
    assert!((t["gamma_cr"].as_f64().unwrap() - 0.6194).abs() < 1e-4);
    let e = json(&ok(dir.path(), &["ep", "--config", c]));
    assert_eq!(e["points"].as_array().unwrap().len(), 2);

    std::fs::write(&cfg, "a = 5\n[ep]\nmethod = lz\n").unwrap();
    let out = stirap(dir.path(), &["ep", "--config", c, "--L", "1"]);
    assert!(!out.status.success());
    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert!(!stirap(dir.path(), &["ep", "--config", c]).status.success());
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--L-min", "10", "--L-max", "12", "--L-count", "2", "--gamma-count", "3", "--no-boundary"];
    let run = |env: &str| {
        Command::new(env!("CARGO_BIN_EXE_stirap"))
            .args(args)
            .arg("--out-dir")
            .arg(dir.path())
            .env("STIRAP_THREADS", env)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["threads"], "2");
    assert!(!run("many").status.success());
}
