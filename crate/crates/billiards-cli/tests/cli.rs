use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use billiards::counting::ChainPolytope;
use billiards::polygon::{CircularPolygon, PolygonRecord};
use billiards::symbolic::{Alphabet, ChiPolicy};
use serde_json::Value;
use tempfile::TempDir;

fn billiards(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_billiards"))
        .current_dir(dir)
        .env_remove("BILLIARDS_PRECISION")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_code(o: &Output) -> String {
    let v: Value = serde_json::from_slice(&o.stderr).expect("error object on stderr");
    assert_eq!(v["schema"], 1);
    v["error"]["code"].as_str().unwrap().to_string()
}

fn ellipse_file() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let o = billiards(dir.path(), &["polygon", "preset", "pseudo-ellipse", "--alpha", "pi/2", "--r", "1", "--R", "2", "-o", "e.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("e.json");
    (dir, path)
}

#[test]
fn preset_round_trips_through_validate() {
    let (dir, path) = ellipse_file();
    let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["arcs"].as_array().unwrap().len(), 4);
    let o = billiards(dir.path(), &["polygon", "validate", "e.json"]);
    assert_eq!(o.status.code(), Some(0));
    let table = stdout(&o);
    for row in ["angle closure", "vector closure", "node continuity", "tangent continuity"] {
        assert!(table.lines().any(|l| l.starts_with(row) && l.ends_with("pass")), "{table}");
    }
}

#[test]
fn decimal_alpha_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let o = billiards(dir.path(), &["polygon", "preset", "pseudo-ellipse", "--alpha", "1.5708", "--r", "1", "--R", "2", "-o", "e.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("e.json").exists());
}

#[test]
fn bad_radii_are_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = billiards(dir.path(), &["polygon", "preset", "pseudo-ellipse", "--r", "2", "--R", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "InvalidParameter");
}

#[test]
fn tampered_polygon_violates_invariants() {
    let (dir, path) = ellipse_file();
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v["arcs"][1]["radius"] = Value::from(2.5);
    fs::write(dir.path().join("bad.json"), v.to_string()).unwrap();
    let o = billiards(dir.path(), &["polygon", "validate", "bad.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("FAIL"));
    let o = billiards(dir.path(), &["polygon", "validate", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn nodal_orbit_csv_is_deterministic() {
    let (dir, _) = ellipse_file();
    for name in ["a.csv", "b.csv"] {
        let o = billiards(dir.path(), &["orbit", "nodal", "e.json", "--i", "100", "--csv", name]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,phi,theta,x,y,arc_index,link_length"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 400);
    // 17 significant digits in every float column
    let theta = rows[0].split(',').nth(2).unwrap();
    assert_eq!(theta.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count(), 17);
}

#[test]
fn stretch_report_matches_the_example() {
    let (dir, _) = ellipse_file();
    let args = ["quad", "stretch", "e.json", "--j", "1", "--n", "20", "--n-prime", "23", "--paths", "200", "--seed", "7", "-o", "r.json"];
    let o = billiards(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["seed"], 7);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    for r in reports {
        assert_eq!(r["success_fraction"], 1.0);
        assert_eq!(r["seed"], 7);
        assert_eq!(r["paths"], 202);
    }
    assert!(stdout(&o).contains("seed = 7"));
}

#[test]
fn stretch_needs_a_seed_and_an_admissible_pair() {
    let (dir, _) = ellipse_file();
    let o = billiards(dir.path(), &["quad", "stretch", "e.json", "--j", "1", "--n", "20", "--n-prime", "23"]);
    assert_eq!(o.status.code(), Some(2));
    let o = billiards(dir.path(), &["quad", "stretch", "e.json", "--j", "1", "--n", "20", "--n-prime", "40", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "NotAdmissiblePair");
}

#[test]
fn gq_matches_the_library() {
    let (dir, path) = ellipse_file();
    let o = billiards(dir.path(), &["count", "gq", "e.json", "--p", "1", "--q", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let rec: PolygonRecord = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let poly = CircularPolygon::try_from(rec).unwrap();
    let chi = Alphabet::new(&poly, ChiPolicy::HypothesisX).unwrap().chi;
    let expected = ChainPolytope::new(&poly, chi, 1).unwrap().count(100).unwrap();
    assert_eq!(stdout(&o).trim(), expected.to_string());
}

#[test]
fn bounds_report_has_the_documented_columns() {
    let (dir, _) = ellipse_file();
    let o = billiards(dir.path(), &["--threads", "2", "count", "check-bounds", "e.json", "--chi-policy", "geometric", "--q-max", "200", "--csv", "b.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("q,G_q,bound_a,bound_b_applicable,ratio"));
    assert_eq!(text.lines().count(), 201);
}

#[test]
fn extended_precision_is_rejected() {
    let (dir, _) = ellipse_file();
    let o = Command::new(env!("CARGO_BIN_EXE_billiards"))
        .current_dir(dir.path())
        .env("BILLIARDS_PRECISION", "extended")
        .args(["count", "gq", "e.json", "--q", "50"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "UnsupportedPrecision");
}

#[test]
fn spectrum_interval_and_sequence() {
    let (dir, _) = ellipse_file();
    let o = billiards(dir.path(), &["spectrum", "e.json", "--qs", "100,200", "--csv", "s.csv", "--json", "s.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    let plus = -(std::f64::consts::PI.powi(3) / 24.0) * (1.0 + 2f64.cbrt()).powi(3);
    assert!((v["c1_plus"].as_f64().unwrap() - plus).abs() < 1e-12);
    assert_eq!(v["argmax"].as_array().unwrap().len(), 4);
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("q,L,defect_q2,target_c"));
    assert_eq!(text.lines().count(), 3);
    let o = billiards(dir.path(), &["spectrum", "e.json", "--qs", "100", "--target", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "TargetOutOfRange");
}

#[test]
fn periodic_orbit_below_the_nodal_constant() {
    let (dir, _) = ellipse_file();
    let o = billiards(dir.path(), &["orbit", "periodic", "e.json", "--impacts", "91,91,91,128", "--json", "p.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
    assert_eq!(v["impacts_per_arc"], serde_json::json!([91, 91, 91, 128]));
    let o = billiards(dir.path(), &["orbit", "periodic", "e.json", "--impacts", "10,40,10,40"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "NotInPolytope");
}

#[test]
fn sixgon_preset_takes_negative_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let o = billiards(dir.path(), &["polygon", "preset", "triangle-sixgon", "--a", "3,-1", "--b", "-1,-1", "--c", "0,1", "--r", "1", "-o", "h.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = billiards(dir.path(), &["polygon", "validate", "h.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("arc count                                     6"));
}
