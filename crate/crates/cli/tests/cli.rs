use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cavmag_core::fit::synthesize_branches;
use cavmag_core::io::write_branch_csv;
use cavmag_core::model::cavity_mode_has_negative_jump;
use cavmag_core::{load_spec, table3_cavity, SpherePosition};

fn cavmag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavmag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(out: &Path, points: &str) -> Output {
    let cfg = config("table3.json");
    let o = cavmag(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        path(out),
        "--fmin",
        "12",
        "--fmax",
        "17",
        "--points",
        points,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    o
}

#[test]
fn shipped_configs_match_builtin_table() {
    for (name, position) in [
        ("table3_a.json", SpherePosition::A),
        ("table3_b.json", SpherePosition::B),
    ] {
        let (spec, _) = load_spec(Path::new(&config(name))).unwrap();
        assert_eq!(spec, table3_cavity(position), "{name}");
    }
    let (spec, _) = load_spec(Path::new(&config("table3.json"))).unwrap();
    assert_eq!(spec, table3_cavity(SpherePosition::A).without_magnons());
}

#[test]
fn simulate_writes_every_grid_point_and_seven_resonances() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(dir.path(), "4001");
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4002);
    assert!(csv.starts_with("freq_ghz,re_s21,im_s21,mag_db,phase_rad\n"));
    let resonances = stdout(&o).lines().filter(|l| l.starts_with("resonance ")).count();
    assert_eq!(resonances, 7, "{}", stdout(&o));
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = cavmag(&["simulate", "--config", "no/such/config.json", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/config.json"));
}

#[test]
fn single_point_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cavmag(&[
        "simulate",
        "--config",
        &config("table3.json"),
        "--out",
        path(dir.path()),
        "--points",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text =
        fs::read_to_string(config("table3.json"))
            .unwrap()
            .replacen("\"freq_ghz\": 12.4", "\"freq_ghz\": -12.4", 1);
    fs::write(&cfg, text).unwrap();
    let o = cavmag(&["simulate", "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("photon_modes[0]"), "{}", stderr(&o));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cavmag"))
        .env("CAVMAG_THREADS", "many")
        .args([
            "simulate",
            "--config",
            &config("table3.json"),
            "--out",
            path(dir.path()),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), "2001");
    simulate(b.path(), "2001");
    let read = |d: &Path| fs::read(d.join("spectrum.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn manifest_lists_parameters_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("table3.json");
    let o = cavmag(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        path(dir.path()),
        "--points",
        "501",
        "--format",
        "touchstone",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["config"], cfg.as_str());
    assert_eq!(manifest["parameters"]["grid"]["points"], 501);
    assert_eq!(manifest["parameters"]["format"], "touchstone");
    let outputs: Vec<PathBuf> = serde_json::from_value(manifest["outputs"].clone()).unwrap();
    assert_eq!(outputs.len(), 2);
    assert!(outputs.iter().all(|p| p.exists()));
    let s2p = fs::read_to_string(dir.path().join("spectrum.s2p")).unwrap();
    assert!(s2p.lines().any(|l| l == "# GHz S RI R 50"));
}

/// Rewrites a spectrum CSV with every sample multiplied by `e^{iθ}`.
fn rotate_csv(src: &Path, dst: &Path, theta: f64) {
    let text = fs::read_to_string(src).unwrap();
    let mut lines = text.lines();
    let mut out = format!("{}\n", lines.next().unwrap());
    let (s, c) = theta.sin_cos();
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (re, im) = (v[1] * c - v[2] * s, v[1] * s + v[2] * c);
        out += &format!(
            "{:.11e},{re:.11e},{im:.11e},{:.11e},{:.11e}\n",
            v[0],
            v[3],
            im.atan2(re)
        );
    }
    fs::write(dst, out).unwrap();
}

#[test]
fn analyze_ignores_a_global_phase() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "20001");
    let original = dir.path().join("spectrum.csv");
    let reference = cavmag(&["analyze", path(&original)]);
    assert!(reference.status.success(), "{}", stderr(&reference));
    for theta in [0.7, 2.0, -2.9] {
        let rotated = dir.path().join(format!("rotated{theta}.csv"));
        rotate_csv(&original, &rotated, theta);
        let o = cavmag(&["analyze", path(&rotated)]);
        assert!(o.status.success());
        assert_eq!(stdout(&o), stdout(&reference), "theta {theta}");
    }
}

#[test]
fn analyze_reproduces_the_jump_column() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "50001");
    let report = dir.path().join("report");
    let o = cavmag(&[
        "analyze",
        path(&dir.path().join("spectrum.csv")),
        "--reference-ghz",
        "13.6",
        "--out",
        path(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    let features = json["features"].as_array().unwrap();
    for mode in table3_cavity(SpherePosition::A).photon_modes {
        let freq = mode.frequency;
        let jump = if cavity_mode_has_negative_jump(&mode.label).unwrap() {
            "Negative"
        } else {
            "Positive"
        };
        let nearest = features
            .iter()
            .filter(|f| f["kind"] == "Resonance")
            .min_by(|a, b| {
                let d = |f: &&serde_json::Value| (f["frequency"].as_f64().unwrap() - freq).abs();
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        assert_eq!(nearest["phase_jump"], jump, "{}", mode.label);
    }
    assert!(report.join("manifest.json").exists());
}

#[test]
fn two_point_spectrum_is_insufficient() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tiny.csv");
    fs::write(
        &csv,
        "freq_ghz,re_s21,im_s21,mag_db,phase_rad\n1.0,0.1,0.0,-20,0\n2.0,0.2,0.0,-14,0\n",
    )
    .unwrap();
    let o = cavmag(&["analyze", path(&csv)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("insufficient data"), "{}", stderr(&o));
}

#[test]
fn malformed_csv_reports_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(
        &csv,
        "freq_ghz,re_s21,im_s21,mag_db,phase_rad\n1.0,0.1,0.0,0,0\n1.1,0.1,0.0,0,0\n1.2,abc,0.0,0,0\n",
    )
    .unwrap();
    let o = cavmag(&["analyze", path(&csv)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn fit_recovers_a_synthetic_branch_file() {
    let dir = tempfile::tempdir().unwrap();
    let magnons: Vec<f64> = (0..401).map(|i| 13.3 + 0.6 * i as f64 / 400.0).collect();
    for (phi, g, verdict) in [(std::f64::consts::PI, 0.02, "Attraction"), (0.0, 0.015, "Repulsion")] {
        let branch = synthesize_branches(13.57, g, phi, &magnons, 1.25e-4);
        let file = dir.path().join(format!("branches{phi}.csv"));
        write_branch_csv(fs::File::create(&file).unwrap(), &branch).unwrap();
        let out = dir.path().join(format!("fit{phi}"));
        let o = cavmag(&["fit", path(&file), "--out", path(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
        assert_eq!(fit["verdict"], verdict);
        let g_fit = fit["g_ar_magnitude"].as_f64().unwrap();
        let w_fit = fit["omega_ar"].as_f64().unwrap();
        assert!((g_fit - g).abs() < 0.01 * g, "{g_fit}");
        assert!((w_fit - 13.57).abs() < 0.01 * g, "{w_fit}");
    }
}

#[test]
fn uncoupled_magnon_gives_flat_branches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("uncoupled.json");
    let mut json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config("table3_a.json")).unwrap()).unwrap();
    for mode in json["photon_modes"].as_array_mut().unwrap() {
        mode["magnon_couplings_ghz"] = serde_json::json!([0.0]);
    }
    fs::write(&cfg, json.to_string()).unwrap();
    let out = dir.path().join("map");
    let o = cavmag(&[
        "map",
        "--config",
        path(&cfg),
        "--out",
        path(&out),
        "--points",
        "501",
        "--magnon-points",
        "11",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("branches.csv")).unwrap();
    let lower: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(lower.len(), 11);
    assert!(!lower[0].is_empty());
    assert!(lower.iter().all(|v| *v == lower[0]), "{lower:?}");
    assert_eq!(
        fs::read_to_string(out.join("map.csv")).unwrap().lines().count(),
        1 + 11 * 501
    );
}

fn converge_rows(ordering: &str) -> Vec<Vec<String>> {
    let dir = tempfile::tempdir().unwrap();
    let o = cavmag(&[
        "converge",
        "--config",
        &config("table3.json"),
        "--out",
        path(dir.path()),
        "--reference-ghz",
        "13.589",
        "--ordering",
        ordering,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::read_to_string(dir.path().join("converge.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn convergence_rows_depend_on_order_until_all_modes_are_in() {
    let nearest = converge_rows("nearest");
    let reversed = converge_rows("reversed");
    assert_eq!(nearest.len(), 7);
    assert_eq!(nearest[0][2], "absent");
    assert_eq!(nearest[6][2..], reversed[6][2..]);
    assert_ne!(nearest[2][2], reversed[2][2]);
    let listed = converge_rows("TE212,TE113,TM012,TE211,TM111,TM013,TE311");
    assert_eq!(listed, nearest);
}

#[test]
fn unknown_ordering_entry_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cavmag(&[
        "converge",
        "--config",
        &config("table3.json"),
        "--out",
        path(dir.path()),
        "--reference-ghz",
        "13.6",
        "--ordering",
        "TE999",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("TE999"));
}

#[test]
fn map_and_fit_distinguish_the_two_sphere_positions() {
    let dir = tempfile::tempdir().unwrap();
    for (name, merges, verdict, g_mhz) in [
        ("table3_a.json", false, "Repulsion", 14.0),
        ("table3_b.json", true, "Attraction", 24.0),
    ] {
        let map_dir = dir.path().join(format!("map-{name}"));
        let o = cavmag(&["map", "--config", &config(name), "--out", path(&map_dir)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let branches = fs::read_to_string(map_dir.join("branches.csv")).unwrap();
        let merged = branches.lines().skip(1).any(|l| l.split(',').nth(3) == Some("1"));
        assert_eq!(merged, merges, "{name}");
        let fit_dir = dir.path().join(format!("fit-{name}"));
        let o = cavmag(&["fit", path(&map_dir.join("map.csv")), "--out", path(&fit_dir)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let fit: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(fit_dir.join("fit.json")).unwrap()).unwrap();
        assert_eq!(fit["verdict"], verdict, "{name}");
        let g = fit["g_ar_magnitude"].as_f64().unwrap() * 1e3;
        assert!((g - g_mhz).abs() < 0.1 * g_mhz, "{name}: {g} MHz");
    }
}
