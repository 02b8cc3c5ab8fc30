use std::path::Path;
use std::process::Command;

use caps_core::datagen::{save_vecs, ElementKind, MixtureSpec};

fn caps(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_caps"))
        .args(args)
        .env("CAPS_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "caps {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn build_search_and_overhead() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mix = MixtureSpec {
        d: 8,
        clusters: 10,
        center_scale: 50.0,
        spread: 5.0,
        quantize: true,
        intrinsic_dim: 0,
        seed: 3,
    };
    save_vecs(
        d.join("base.fvecs"),
        &mix.sample(3000, 0).unwrap(),
        ElementKind::Float32,
    )
    .unwrap();
    save_vecs(d.join("q.fvecs"), &mix.sample(20, 1).unwrap(), ElementKind::Float32).unwrap();
    caps(&[
        "gen-attrs",
        "--n",
        "3000",
        "--cardinalities",
        "5,5",
        "--out",
        p(&d.join("a.bin")),
        "--filters-out",
        p(&d.join("f.csv")),
        "--filter-count",
        "20",
        "--absence",
        "0.5",
    ]);
    let built = caps(&[
        "build",
        "--base",
        p(&d.join("base.fvecs")),
        "--attrs",
        p(&d.join("a.bin")),
        "--partitions",
        "8",
        "--height",
        "3",
        "--out",
        p(&d.join("i.caps")),
    ]);
    let report: serde_json::Value = serde_json::from_str(built.trim()).unwrap();
    assert_eq!(report["overhead_bytes"], report["estimated_overhead_bytes"]);

    let hits = caps(&[
        "search",
        "--index",
        p(&d.join("i.caps")),
        "--queries",
        p(&d.join("q.fvecs")),
        "--filters",
        p(&d.join("f.csv")),
        "--k",
        "5",
        "--m",
        "8",
    ]);
    let lines: Vec<&str> = hits.lines().collect();
    assert_eq!(lines[0], "query,rank,id,score");
    assert!(lines.len() > 20);

    let measured = caps(&["overhead", "--index", p(&d.join("i.caps"))]);
    assert_eq!(serde_json::from_str::<serde_json::Value>(measured.trim()).unwrap(), {
        let mut r = report.clone();
        r["build_seconds"] = serde_json::Value::Null;
        r
    });
    let analytic = caps(&["overhead", "--n", "1000000", "--partitions", "1000"]);
    assert!(analytic.contains("\"overhead_bytes\":4542000"));
}

#[test]
fn sweep_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    caps(&[
        "sweep",
        "--synthetic",
        "2000",
        "--dim",
        "8",
        "--query-count",
        "30",
        "--partitions",
        "8",
        "--heights",
        "0,2",
        "--probes",
        "1,8",
        "--k",
        "10",
        "--warmup",
        "5",
        "--mode",
        "exhaustive",
        "--baselines",
        "search-then-filter",
        "--cache-dir",
        p(&dir.path().join("gt")),
        "--out",
        p(&out),
    ]);
    let rows = caps_bench::sweep::read_csv(&out).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().filter(|r| r.m == 8).all(|r| r.recall == 1.0));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["schema_version"], caps_bench::SCHEMA_VERSION);
    assert_eq!(meta["query_threads"], 1);
    assert!(std::fs::read_dir(dir.path().join("gt")).unwrap().count() == 1);
}

#[test]
fn unhappy_and_groundtruth_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    caps(&[
        "unhappy",
        "--n",
        "3000",
        "--dim",
        "8",
        "--query-count",
        "20",
        "--sparsities",
        "0.01,0.5",
        "--partitions",
        "16",
        "--out",
        p(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    let path = caps(&[
        "groundtruth",
        "--synthetic",
        "1000",
        "--dim",
        "8",
        "--query-count",
        "10",
        "--k",
        "5",
        "--cache-dir",
        p(&dir.path().join("gt")),
    ]);
    assert!(Path::new(path.trim()).exists());
}

#[test]
fn bad_arguments_fail() {
    let out = Command::new(env!("CARGO_BIN_EXE_caps"))
        .args([
            "gen-attrs",
            "--n",
            "10",
            "--distribution",
            "zipf",
            "--out",
            "/nonexistent/x",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_caps"))
        .args(["overhead"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
