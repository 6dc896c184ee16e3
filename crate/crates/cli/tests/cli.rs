use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jamgraph::retrieval::to_json_lines;
use jamgraph::{GridMeta, PatternStore, Query, RelationGraph, SimilarityParams, SizeMode};

fn jamgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jamgraph")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = jamgraph(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates one raster per family plus a second stop-and-go one and indexes them.
fn corpus(dir: &Path) -> (PathBuf, Vec<PathBuf>) {
    let index = dir.join("index");
    let mut rasters = Vec::new();
    for (name, seed) in [("single-disturbance", 1), ("stop-and-go", 2), ("homogeneous", 3), ("mixed", 4), ("stop-and-go", 9)] {
        let stem = dir.join(format!("{name}-{seed}"));
        ok(&["gen", "--scenario", name, "--seed", &seed.to_string(), "--out", s(&stem)]);
        rasters.push(stem.with_extension("csv"));
    }
    let mut args = vec!["index", "add", "--index", s(&index)];
    args.extend(rasters.iter().map(|p| s(p)));
    ok(&args);
    (index, rasters)
}

#[test]
fn gen_writes_raster_meta_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("sg");
    let line = ok(&["gen", "--scenario", "stop-and-go", "--seed", "5", "--out", s(&stem)]);
    let report: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(report["counts"]["B"], 1);
    for ext in ["csv", "meta.json", "truth.json"] {
        assert!(dir.path().join(format!("sg.{ext}")).exists(), "{ext}");
    }

    let spec = serde_json::to_string(&jamgraph::speedmap::SyntheticSpec::free_flow(3.0, 20.0)).unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, spec).unwrap();
    let line = ok(&["gen", "--spec", s(&spec_path), "--out", s(&dir.path().join("free"))]);
    assert!(line.contains(r#""counts":{"B":0,"D":0,"H":0}"#), "{line}");
}

#[test]
fn extract_free_flow_gives_empty_graph() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("free.csv");
    std::fs::write(&csv, "100,100,100\n100,100,100\n").unwrap();
    let out = ok(&["extract", s(&csv)]);
    let g = RelationGraph::from_json(out.trim()).unwrap();
    assert_eq!(g.pattern_id, "free");
    assert!(g.nodes.is_empty() && g.edges.is_empty());
}

#[test]
fn extract_uses_sidecar_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("h");
    ok(&["gen", "--scenario", "homogeneous", "--seed", "1", "--out", s(&stem)]);
    let out = ok(&["extract", s(&stem.with_extension("csv")), "--id", "h1", "--pretty"]);
    let g = RelationGraph::from_json(&out).unwrap();
    assert_eq!(g.pattern_id, "h1");
    assert!(g.nodes.iter().any(|n| n.tau == jamgraph::Kind::Homogeneous));
    assert!(out.lines().count() > 1);
}

#[test]
fn index_add_twice_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let (index, rasters) = corpus(dir.path());
    let out = jamgraph(&["index", "add", "--index", s(&index), s(&rasters[0])]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("already exists"));

    let stats: serde_json::Value = serde_json::from_str(&ok(&["index", "stats", "--index", s(&index)])).unwrap();
    assert_eq!(stats["count"], 5);
}

#[test]
fn index_add_graph_files() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("index");
    let graph = dir.path().join("g.json");
    std::fs::write(&graph, RelationGraph::empty("whatever").to_json()).unwrap();
    ok(&["index", "add", "--index", s(&index), "--graph", s(&graph), "--id", "blank"]);
    let store = PatternStore::open(&index).unwrap();
    assert!(store.get("blank").is_some_and(|r| r.raster_ref.is_none()));
}

#[test]
fn query_output_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (index, rasters) = corpus(dir.path());
    let store = PatternStore::open(&index).unwrap();
    let meta: GridMeta = jamgraph::speedmap::load_meta(rasters[1].with_extension("meta.json")).unwrap();
    let field = jamgraph::speedmap::load_csv(&rasters[1], &meta).unwrap();

    let cases: Vec<(Vec<&str>, SimilarityParams, f64, usize)> = vec![
        (vec![], SimilarityParams::default(), f64::INFINITY, 10),
        (
            vec!["--theta-w", "3", "-k", "3"],
            SimilarityParams { theta_w: 3.0, ..Default::default() },
            f64::INFINITY,
            3,
        ),
        (
            vec!["--theta-d", "2", "--beta-size", "-8,4", "--size-mode", "proportion", "--band", "0.5"],
            SimilarityParams {
                theta_t: 2.0,
                beta_size: (-8.0, 4.0),
                size_mode: SizeMode::Proportion,
                ..Default::default()
            },
            0.5,
            10,
        ),
    ];
    for (flags, params, band, k) in cases {
        let mut args = vec!["query", "--index", s(&index), "--raster", s(&rasters[1])];
        args.extend(flags.iter().copied());
        let got = ok(&args);
        let want = to_json_lines(&store.query_topk(&Query::Field(field.clone()), k, &params, band).unwrap());
        assert_eq!(got, want, "{flags:?}");
    }

    let by_id = ok(&["query", "--index", s(&index), "--pattern-id", "stop-and-go-2", "-k", "1"]);
    assert!(by_id.contains(r#""pattern_id":"stop-and-go-2""#), "{by_id}");
}

#[test]
fn params_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (index, _) = corpus(dir.path());
    let params = dir.path().join("p.json");
    std::fs::write(&params, r#"{"theta_w": 3, "theta_i": 0.5}"#).unwrap();
    let store = PatternStore::open(&index).unwrap();
    let q = store.get("mixed-4").unwrap().graph.clone();
    let graph = dir.path().join("q.json");
    std::fs::write(&graph, q.to_json()).unwrap();

    let got = ok(&["query", "--index", s(&index), "--graph", s(&graph), "--params", s(&params), "--theta-i", "2"]);
    let p = SimilarityParams { theta_w: 3.0, theta_i: 2.0, ..Default::default() };
    let want = to_json_lines(&store.query_topk(&Query::Graph(q), 10, &p, f64::INFINITY).unwrap());
    assert_eq!(got, want);
}

#[test]
fn pretty_table() {
    let dir = tempfile::tempdir().unwrap();
    let (index, _) = corpus(dir.path());
    let out = ok(&["query", "--index", s(&index), "--pattern-id", "homogeneous-3", "--pretty", "-k", "2"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("rank") && lines[1].contains("homogeneous-3"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (index, _) = corpus(dir.path());
    let idx = s(&index);
    let code = |args: &[&str]| jamgraph(args).status.code();

    assert_eq!(code(&["query", "--index", idx, "--pattern-id", "mixed-4", "--no-such-flag"]), Some(64));
    assert_eq!(code(&["frobnicate"]), Some(64));
    assert_eq!(code(&["query", "--index", idx]), Some(64));
    assert_eq!(code(&["query", "--index", idx, "--pattern-id", "mixed-4", "--theta-w", "abc"]), Some(64));
    assert_eq!(code(&["gen", "--scenario", "nope", "--out", "x"]), Some(64));

    assert_eq!(code(&["query", "--index", idx, "--pattern-id", "mixed-4", "--theta-g", "2"]), Some(1));
    assert_eq!(code(&["query", "--index", idx, "--pattern-id", "mixed-4", "-k", "0"]), Some(1));
    assert_eq!(code(&["query", "--index", idx, "--pattern-id", "mixed-4", "--band", "-1"]), Some(1));
    assert_eq!(code(&["query", "--index", idx, "--pattern-id", "unknown"]), Some(1));

    let missing = dir.path().join("missing");
    assert_eq!(code(&["query", "--index", s(&missing), "--pattern-id", "x"]), Some(2));
    assert_eq!(code(&["index", "stats", "--index", s(&missing)]), Some(2));
    assert_eq!(code(&["extract", s(&dir.path().join("none.csv"))]), Some(2));
    assert_eq!(code(&["serve", "--index", s(&missing)]), Some(2));

    std::fs::write(index.join("manifest.json"), "{").unwrap();
    assert_eq!(code(&["index", "stats", "--index", idx]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
}

#[test]
fn help_lists_every_parameter_with_defaults() {
    let help = ok(&["query", "--help"]);
    let d = SimilarityParams::default();
    let expected = [
        "--theta-s <THETA_S>".to_string(),
        format!("[default: {}]", d.theta_s),
        "--theta-g <THETA_G>".to_string(),
        format!("[default: {}]", d.theta_g),
        "--theta-t <THETA_T>".to_string(),
        "theta-d".to_string(),
        "--theta-w <THETA_W>".to_string(),
        "--theta-i <THETA_I>".to_string(),
        format!("[default: {},{}]", d.beta_size.0, d.beta_size.1),
        format!("[default: {},{}]", d.beta_weight.0, d.beta_weight.1),
        "--size-mode".to_string(),
        "[default: absolute]".to_string(),
        "-k".to_string(),
        "[default: 10]".to_string(),
        "--band".to_string(),
        "--params".to_string(),
        "--pretty".to_string(),
    ];
    for e in expected {
        assert!(help.contains(&e), "missing `{e}` in:\n{help}");
    }
}

#[test]
fn render_writes_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("m");
    ok(&["gen", "--scenario", "mixed", "--seed", "2", "--out", s(&stem)]);
    let pgm = dir.path().join("m.pgm");
    ok(&["render", s(&stem.with_extension("csv")), "--out", s(&pgm)]);
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n"));
}
