use std::path::Path;
use std::process::{Command, Output};

fn epmap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epmap"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn mindist_grid_has_one_row_per_node() {
    let t = tempfile::tempdir().unwrap();
    let o = epmap(t.path(), &["mindist", "--L", "4", "--re", "0", "1", "--im", "-0.5", "0.5", "--res", "100x100"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(t.path().join("mindist.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10_001);
    assert!(t.path().join("mindist.bin").exists());
    let defect = manifest(t.path())["summary"]["conjugation_defect"].as_f64().unwrap();
    assert!(defect <= 1e-10, "{defect}");
}

#[test]
fn braid_reports_cycles() {
    let t = tempfile::tempdir().unwrap();
    let o = epmap(t.path(), &["braid", "--toy", "--path", "circle 0 1 0.3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("1 transposition"), "{}", stdout(&o));
    let trace = std::fs::read_to_string(t.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("phi,re_z,im_z,label,re_lambda,im_lambda\n"));

    let o = epmap(t.path(), &["braid", "--L", "4", "--path", "rect 0.4 0.6 0.5 0.7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("identity, 0 EPs"), "{}", stdout(&o));
}

#[test]
fn census_writes_profiles_and_diagnostics() {
    let t = tempfile::tempdir().unwrap();
    let o = epmap(t.path(), &["census", "--L", "4", "--heights", "0.1", "0.4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let density = std::fs::read_to_string(t.path().join("density.csv")).unwrap();
    let nonempty = density
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(3).unwrap() != "0")
        .count();
    assert!(nonempty >= 1);
    let eps = std::fs::read_to_string(t.path().join("eps.csv")).unwrap();
    assert!(eps.starts_with("re,im,uncertainty,order\n"));
    let swap = std::fs::read_to_string(t.path().join("swap_order.csv")).unwrap();
    assert_eq!(swap.lines().count(), 3);
    let m = manifest(t.path());
    let l4 = &m["summary"]["lengths"][0];
    assert_eq!(l4["ep_count"], l4["winding"]);
    assert_eq!(l4["unresolved"], 0);
    assert!(l4["retries"].is_number());
}

#[test]
fn coarse_tolerance_leaves_unresolved_clusters() {
    let t = tempfile::tempdir().unwrap();
    let o = epmap(t.path(), &["census", "--L", "4", "--tol", "10", "--heights", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(t.path());
    assert!(m["summary"]["lengths"][0]["unresolved"].as_u64().unwrap() > 0);
}

#[test]
fn two_lengths_emit_a_collapse_report() {
    let t = tempfile::tempdir().unwrap();
    let o = epmap(t.path(), &["census", "--L", "4", "5", "--no-localize", "--heights", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(t.path().join("L4/density.csv").exists());
    assert!(t.path().join("L5/density.csv").exists());
    let c: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("collapse.json")).unwrap()).unwrap();
    let ratio = c[0]["bulk_density_ratio"].as_f64().unwrap();
    assert!(ratio > 1.0, "{ratio}");
}

#[test]
fn ergodicity_outputs() {
    let t = tempfile::tempdir().unwrap();
    let o = epmap(
        t.path(),
        &["ergodicity", "--L", "10", "--observable", "x4x5", "--gue-samples", "0", "--poisson"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let eth = std::fs::read_to_string(t.path().join("eth.csv")).unwrap();
    assert_eq!(eth.lines().count(), 1025);
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("summary.json")).unwrap()).unwrap();
    let p = s["poisson"]["mean"].as_f64().unwrap();
    assert!((p - 0.3863).abs() < 0.01, "{p}");
    assert!(t.path().join("r_hist.csv").exists());
}

#[test]
fn toy_mode_checks_the_oracle() {
    let t = tempfile::tempdir().unwrap();
    let o = epmap(t.path(), &["toy"]);
    assert_eq!(o.status.code(), Some(0));
    let s = &manifest(t.path())["summary"];
    assert_eq!(s["transpositions"], 1);
    assert!(s["eps"][0]["error"].as_f64().unwrap() < 1e-6);
    assert!(s["slope"].as_f64().unwrap() >= 2.7);
}

#[test]
fn config_errors_exit_with_code_one_and_a_line() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    std::fs::write(&cfg, "L = 4\nJx = 1.2\n\n[mindist]\nres = [1, 50]\n").unwrap();
    let o = epmap(t.path(), &["--config", cfg.to_str().unwrap(), "mindist"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.toml:5:"), "{err}");
    assert!(!t.path().join("manifest.json").exists(), "nothing runs after a config error");

    std::fs::write(&cfg, "L = 4\ngxy = \"big\"\n").unwrap();
    let o = epmap(t.path(), &["--config", cfg.to_str().unwrap(), "mindist"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.toml:2:"));

    std::fs::write(&cfg, "L = 40\n").unwrap();
    let o = epmap(t.path(), &["--config", cfg.to_str().unwrap(), "census"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.toml:1:"));

    let o = epmap(t.path(), &["braid", "--L", "4", "--path", "square 1 2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = epmap(t.path(), &["mindist", "--res", "ten"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_sets_the_job() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    std::fs::write(&cfg, "L = 3\nJz = 1\nh1 = [0, 0, 0.1]\n[mindist]\nre = [0, 1]\nim = [0.1, 0.2]\nres = [4, 3]\n").unwrap();
    let out = t.path().join("o");
    let o = epmap(&out, &["--config", cfg.to_str().unwrap(), "mindist"]);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&out);
    let job = &m["config"]["job"];
    assert_eq!(job["model"]["L"], 3);
    assert_eq!(job["model"]["Jz"], 1.0);
    assert_eq!(job["res"], serde_json::json!([4, 3]));
    let csv = std::fs::read_to_string(out.join("mindist.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn replay_is_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let first = t.path().join("a");
    let o = epmap(&first, &["--threads", "2", "census", "--L", "4", "--heights", "0.2"]);
    assert_eq!(o.status.code(), Some(0));
    let second = t.path().join("b");
    let m = first.join("manifest.json");
    let o = epmap(&second, &["replay", "--check", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["density.csv", "eps.csv", "swap_order.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}
