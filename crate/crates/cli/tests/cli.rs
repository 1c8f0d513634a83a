use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kdgrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdgrid"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = kdgrid(dir, &all);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn version_mentions_file_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = kdgrid(dir.path(), &["--version"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("kdgrid 0.1.0"), "{text}");
    assert!(text.contains("file format 1"));
}

#[test]
fn single_leaf_matches_input_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(
        d,
        &[
            "synth",
            "--seed",
            "3",
            "--count",
            "500",
            "--clusters",
            "0.3,0.7:0.05:0.6",
            "--out",
            "c.json",
        ],
    );
    let r = ok_json(d, &["decompose", "--cloud", "c.json", "--n", "1", "--out", "p.json"]);
    assert_eq!(r["leaves"], 1);
    assert_eq!(r["objective_before"], r["objective_after"]);
    let p = read_json(&d.join("p.json"));
    assert_eq!(p["nodes"].as_array().unwrap().len(), 0);
    let ids: Vec<u64> = p["leaves"][0]["point_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(ids, (0..500).collect::<Vec<_>>());

    let cloud = kdgrid_core::io::read_cloud(&d.join("c.json")).unwrap();
    let bbox = kdgrid_core::bounding_box(&cloud).unwrap();
    assert_eq!(p["leaves"][0]["box"], serde_json::to_value(&bbox).unwrap());
}

#[test]
fn subdomains_beat_a_global_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(
        d,
        &["synth", "--preset", "dense-centre", "--seed", "0", "--out", "c.json"],
    );
    let r = ok_json(d, &["roundtrip", "--cloud", "c.json", "--n", "5", "--ratio", "1.0"]);
    assert!(r["subdomain"].as_f64().unwrap() < r["global"].as_f64().unwrap(), "{r}");
}

#[test]
fn sixteen_leaves_in_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clusters = "0.2,0.3,0.4:0.03:0.3;0.7,0.7,0.2:0.05:0.3;0.5,0.5,0.8:0.1:0.2";
    ok_json(
        d,
        &[
            "synth",
            "--dims",
            "3",
            "--count",
            "19517",
            "--clusters",
            clusters,
            "--out",
            "c.json",
        ],
    );
    let r = ok_json(d, &["decompose", "--cloud", "c.json", "--n", "16", "--out", "p.json"]);
    assert_eq!(r["leaves"], 16);
    assert_eq!(r["splits"].as_array().unwrap().len(), 15);
    assert_eq!(r["terminated_early"], false);
}

#[test]
fn full_workflow_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("in")).unwrap();
    std::fs::create_dir(d.join("out")).unwrap();
    ok_json(
        d,
        &[
            "synth",
            "--seed",
            "1",
            "--count",
            "1200",
            "--clusters",
            "0.5,0.5:0.05:0.7",
            "--field",
            "--out",
            "in/s0.json",
        ],
    );
    ok_json(
        d,
        &[
            "synth",
            "--seed",
            "1",
            "--count",
            "1200",
            "--clusters",
            "0.5,0.5:0.05:0.7",
            "--field",
            "--out",
            "out/s0.json",
        ],
    );
    ok_json(
        d,
        &["decompose", "--cloud", "in/s0.json", "--n", "4", "--out", "p.json"],
    );

    // export needs grids
    let out = kdgrid(
        d,
        &[
            "export",
            "--inputs",
            "in/*.json",
            "--targets",
            "out/*.json",
            "--partition",
            "p.json",
            "--out",
            "ds",
        ],
    );
    assert!(!out.status.success());

    let alloc = ok_json(d, &["allocate", "--partition", "p.json", "--ratio", "1.5"]);
    assert_eq!(alloc["grids"].as_array().unwrap().len(), 4);
    assert!(read_json(&d.join("p.json"))["leaves"][0]["grid"].is_array());

    ok_json(
        d,
        &[
            "interp",
            "--cloud",
            "in/s0.json",
            "--partition",
            "p.json",
            "--direction",
            "forward",
            "--out",
            "grids",
        ],
    );
    assert!(d.join("grids/leaf_003.json").exists() && d.join("grids/leaf_003.bin").exists());
    ok_json(
        d,
        &[
            "interp",
            "--cloud",
            "in/s0.json",
            "--partition",
            "p.json",
            "--direction",
            "backward",
            "--grids",
            "grids",
            "--out",
            "back.json",
        ],
    );
    let back = kdgrid_core::io::read_cloud(&d.join("back.json")).unwrap();
    let orig = kdgrid_core::io::read_cloud(&d.join("in/s0.json")).unwrap();
    let err =
        kdgrid_core::l2_relative_error(&[orig.values().unwrap().clone()], &[back.values().unwrap().clone()]).unwrap();
    assert!(err < 0.1, "{err}");

    let args = |o: &'static str| {
        [
            "export",
            "--inputs",
            "in/*.json",
            "--targets",
            "out/*.json",
            "--partition",
            "p.json",
            "--out",
            o,
        ]
    };
    let e1 = ok_json(d, &args("ds1"));
    ok_json(d, &args("ds2"));
    assert_eq!(e1["inputs"]["samples"], 1);
    assert_eq!(e1["inputs"]["dtype"], "f64le");
    for f in [
        "partition.json",
        "inputs.json",
        "inputs.bin",
        "targets.json",
        "targets.bin",
    ] {
        let a = std::fs::read(d.join("ds1").join(f)).unwrap();
        let b = std::fs::read(d.join("ds2").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn stacked_samples_share_one_partition() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("s")).unwrap();
    for seed in ["1", "2", "3"] {
        let out = format!("s/{seed}.json");
        ok_json(d, &["synth", "--preset", "dense-centre", "--seed", seed, "--out", &out]);
    }
    let r = ok_json(
        d,
        &[
            "decompose",
            "--cloud",
            "s/1.json",
            "s/2.json",
            "s/3.json",
            "--n",
            "6",
            "--out",
            "p.json",
        ],
    );
    assert_eq!(r["leaves"], 6);
    ok_json(d, &["allocate", "--partition", "p.json", "--ratio", "0.5"]);
    let glob = "s/*.json";
    let args = ["export", "--inputs", glob, "--targets", glob, "--partition", "p.json"];
    // matching by id would pair every sample with the first one's leaves
    assert!(
        !kdgrid(d, &args.iter().chain(&["--out", "bad"]).copied().collect::<Vec<_>>())
            .status
            .success()
    );
    ok_json(
        d,
        &args
            .iter()
            .chain(&["--assign", "location", "--out", "ds"])
            .copied()
            .collect::<Vec<_>>(),
    );
    let m = read_json(&d.join("ds/inputs.json"));
    assert_eq!(m["samples"], 3);
    assert_eq!(m["leaves"], 6);
}

#[test]
fn malformed_input_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), "{\"dims\": 2").unwrap();
    let out = kdgrid(d, &["decompose", "--cloud", "bad.json", "--n", "3", "--out", "p.json"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).expect("json on stderr");
    assert_eq!(err["kind"], "format");
    assert!(!d.join("p.json").exists());

    let out = kdgrid(
        d,
        &[
            "synth",
            "--clusters",
            "0.5,0.5:0.1:0.7",
            "--background",
            "0.5",
            "--out",
            "c.json",
        ],
    );
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "invalid_argument");
}

#[test]
fn bench_csv_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let r = ok_json(
        d,
        &[
            "bench",
            "roundtrip",
            "--ratios",
            "0.5,1",
            "--n",
            "3",
            "--repeats",
            "1",
            "--out",
            "rt.csv",
            "--plot",
            "rt.svg",
        ],
    );
    assert_eq!(r["rows"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(d.join("rt.csv")).unwrap();
    assert!(csv.starts_with("ratio,method,error,seconds\n"));
    assert!(std::fs::read_to_string(d.join("rt.svg")).unwrap().contains("<svg"));

    ok_json(
        d,
        &[
            "bench",
            "scaling",
            "--dims",
            "2",
            "--n",
            "4",
            "--sizes",
            "1000,2000",
            "--repeats",
            "1",
            "--out",
            "sc.csv",
        ],
    );
    ok_json(d, &["plot", "--csv", "sc.csv", "--out", "sc.svg"]);
    assert!(std::fs::read_to_string(d.join("sc.svg")).unwrap().contains("<svg"));

    std::fs::write(d.join("other.csv"), "a,b\n1,2\n").unwrap();
    assert!(!kdgrid(d, &["plot", "--csv", "other.csv", "--out", "x.svg"])
        .status
        .success());
}
