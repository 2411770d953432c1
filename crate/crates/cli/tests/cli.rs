use std::path::Path;

use ctr_cli::artifacts::{sha256_hex, MANIFEST};
use ctr_cli::run_command;
use ctr_core::io::{Cell, Table};

fn run(dir: &Path, args: &str) -> i32 {
    let out = dir.to_str().unwrap().to_string();
    let argv: Vec<String> = std::iter::once("ctr".to_string())
        .chain(args.split_whitespace().map(String::from))
        .chain(["--out-dir".to_string(), out])
        .collect();
    run_command(argv)
}

fn column(t: &Table, name: &str) -> Vec<f64> {
    let k = t.columns.iter().position(|c| c == name).unwrap();
    t.rows
        .iter()
        .map(|r| match &r[k] {
            Cell::S(s) => s.parse().unwrap(),
            c => panic!("unexpected cell {c:?}"),
        })
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST)).unwrap()).unwrap()
}

#[test]
fn pulling_away_leaves_the_object_in_place() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), "simulate pusher1d --u-const=-0.5 --steps=10 --seed=0"), 0);
    let text = std::fs::read_to_string(d.path().join("trajectory.csv")).unwrap();
    assert!(text.starts_with("# schema=v1\n"));
    let t = Table::parse(&text).unwrap();
    assert_eq!(t.rows.len(), 11);
    let x = column(&t, "qo_0");
    assert!(x.iter().all(|v| (v - 0.2).abs() < 1e-9), "{x:?}");
    assert!((column(&t, "qa_1")[10] + 0.5).abs() < 1e-9);
}

#[test]
fn manifest_lists_every_artifact() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), "trust-region squeeze1d --variant=ra-ctr --r=0.05 --n=200 --seed=1 --svg"), 0);
    let m = manifest(d.path());
    let listed: Vec<(String, String)> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["name"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(d.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST)
        .collect();
    on_disk.sort();
    assert_eq!(listed.iter().map(|f| f.0.clone()).collect::<Vec<_>>(), on_disk);
    for (name, sha) in &listed {
        assert_eq!(&sha256_hex(&std::fs::read(d.path().join(name)).unwrap()), sha);
    }
    assert_eq!(m["seed"], 1);
    assert_eq!(m["scenario"], "squeeze1d");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    let scenario = ctr_core::scenario::builtin("squeeze1d").unwrap();
    assert_eq!(m["scenario_sha256"], sha256_hex(scenario.to_json().unwrap().as_bytes()));
}

#[test]
fn svg_timestamp_only_without_deterministic() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), "simulate pusher1d --steps=3 --svg"), 0);
    let a = std::fs::read_to_string(d.path().join("trajectory.svg")).unwrap();
    assert!(a.contains("<metadata>"));
    assert_eq!(run(d.path(), "simulate pusher1d --steps=3 --svg --deterministic"), 0);
    let b = std::fs::read_to_string(d.path().join("trajectory.svg")).unwrap();
    assert!(!b.contains("<metadata>"));
}

#[test]
fn usage_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), "simulate pushr"), 2);
    assert_eq!(run(d.path(), "simulate pusher1d --stepz=3"), 2);
    assert_eq!(run(d.path(), "trust-region squeeze1d --variant=rctr"), 2);
    assert_eq!(run(d.path(), "simulate pusher1d --u-const=1,2,3"), 2);
    assert_eq!(run(d.path(), "teleport pusher1d"), 2);
    assert_eq!(run(d.path(), "plan pushert"), 2, "pushert has no default goal");
    assert_eq!(run_command(["ctr", "--help"]), 0);
}

#[test]
fn domain_errors_exit_with_one() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("missing.json");
    assert_eq!(run(d.path(), &format!("roadmap palmsquare --load {}", missing.display())), 1);
    // a scenario file that fails validation
    let bad = d.path().join("bad.json");
    let mut s = ctr_core::scenario::builtin("pusher1d").unwrap();
    s.q0.push(0.0);
    std::fs::write(&bad, s.to_json().unwrap()).unwrap();
    assert_eq!(run(d.path(), &format!("simulate {}", bad.display())), 1);
}

#[test]
fn scenario_files_load_like_builtins() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("boxball.json");
    std::fs::write(&path, ctr_core::scenario::builtin("boxball2d").unwrap().to_json().unwrap()).unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(run(&a, "simulate boxball2d --u-const=0.02 --steps=4"), 0);
    assert_eq!(run(&b, &format!("simulate {} --u-const=0.02 --steps=4", path.display())), 0);
    assert_eq!(std::fs::read(a.join("trajectory.csv")).unwrap(), std::fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn bench_table_has_one_row_per_variant() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), "bench pushert --goals=2 --variants=etr,r-ctr --seed=7"), 0);
    let t = Table::parse(&std::fs::read_to_string(d.path().join("bench.csv")).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[0][0], Cell::S("etr".into()));
    assert_eq!(t.rows[1][0], Cell::S("r-ctr".into()));
    assert!(t.columns.iter().any(|c| c == "infeasible"));
    let runs = Table::parse(&std::fs::read_to_string(d.path().join("runs.csv")).unwrap()).unwrap();
    assert_eq!(runs.rows.len(), 4);
}

#[test]
fn grad_check_reports_small_errors() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), "grad-check pusher1d --n=2"), 0);
    let t = Table::parse(&std::fs::read_to_string(d.path().join("gradients.csv")).unwrap()).unwrap();
    assert!(!t.rows.is_empty());
    assert!(column(&t, "relative_error").iter().all(|&e| e <= 1e-4));
}

#[test]
fn roadmap_reload_reproduces_the_document() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(run(&a, "roadmap palmsquare"), 0);
    assert_eq!(run(&b, &format!("roadmap palmsquare --load {}", a.join("roadmap.json").display())), 0);
    assert_eq!(std::fs::read(a.join("roadmap.json")).unwrap(), std::fs::read(b.join("roadmap.json")).unwrap());
    assert_eq!(std::fs::read(a.join("edges.csv")).unwrap(), std::fs::read(b.join("edges.csv")).unwrap());
}
