use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mirrorfuzz"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn e2e_catalogs() -> String {
    let fx = fixtures().join("e2e/catalogs");
    format!("{},{}", fx.join("alpha.jsonl").display(), fx.join("beta.jsonl").display())
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(run(&["report", "--nope"]).status.code(), Some(1));
}

#[test]
fn out_of_range_alpha_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("pairs.jsonl");
    let out = run(&["match", "--catalogs", &e2e_catalogs(), "--out", out_path.to_str().unwrap(), "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(!out_path.exists());
}

#[test]
fn missing_input_is_a_runtime_error() {
    let out = run(&["report", "--crashes", "/nonexistent/crashes.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_precedence_flags_over_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mf.toml");
    fs::write(&cfg, "[match]\nalpha = 0.5\ntop_k = 1\nh_within = 1.0\nh_cross = 1.0\n").unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    let p = pairs.to_str().unwrap();
    let cats = e2e_catalogs();

    let alpha_and_max_group = |extra: &[&str]| {
        let mut args = vec!["match", "--catalogs", &cats, "--out", p];
        args.extend_from_slice(extra);
        let out = bin().args(&args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let rows = lines(&pairs);
        let alpha = rows[0]["alpha_used"].as_f64().unwrap();
        assert!(rows.iter().all(|r| r["alpha_used"].as_f64() == Some(alpha)));
        let mut groups = std::collections::HashMap::new();
        for r in &rows {
            let cross = r["source"]["framework"] != r["target"]["framework"];
            *groups
                .entry((r["source"]["name"].to_string(), r["kind"].to_string(), cross))
                .or_insert(0usize) += 1;
        }
        (alpha, groups.values().copied().max().unwrap())
    };

    // Built-in defaults: alpha 0.35, top-k 6.
    let (a, g) = alpha_and_max_group(&[]);
    assert_eq!(a, 0.35);
    assert!(g > 1);
    // The file overrides both.
    let (a, g) = alpha_and_max_group(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(a, 0.5);
    assert_eq!(g, 1);
    // A flag overrides the file for alpha only.
    let (a, g) = alpha_and_max_group(&["--config", cfg.to_str().unwrap(), "--alpha", "0.9"]);
    assert_eq!(a, 0.9);
    assert_eq!(g, 1);
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mf.toml");
    fs::write(&cfg, "[match]\ntopk = 3\n").unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "report", "--crashes", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_from_fixtures_keeps_bug_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let issues = fixtures().join("issues40/issues");
    let out = run(&[
        "ingest",
        "--fixtures",
        issues.to_str().unwrap(),
        "--framework",
        "mixed",
        "--out",
        corpus.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rows = lines(&corpus);
    assert_eq!(rows.len(), 17);
    assert!(rows.iter().all(|r| r["framework"] == "mixed" && !r["matched_keywords"].as_array().unwrap().is_empty()));
    let with_code = rows.iter().filter(|r| !r["snippets"].as_array().unwrap().is_empty()).count();
    assert!(with_code >= 3);
}

#[test]
fn ingest_with_custom_keywords() {
    let dir = tempfile::tempdir().unwrap();
    let kw = dir.path().join("kw.txt");
    fs::write(&kw, "# only this one\nfeature request\n").unwrap();
    let corpus = dir.path().join("c.jsonl");
    let out = run(&[
        "ingest",
        "--fixtures",
        fixtures().join("issues40/issues").to_str().unwrap(),
        "--keywords",
        kw.to_str().unwrap(),
        "--out",
        corpus.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(lines(&corpus).len(), 1);
}

#[test]
fn ingest_replays_recorded_pages() {
    let dir = tempfile::tempdir().unwrap();
    let pages = dir.path().join("pages");
    fs::create_dir(&pages).unwrap();
    let page = |n: u64, count: u64| -> String {
        let docs: Vec<Value> = (0..count)
            .map(|i| {
                serde_json::json!({
                    "number": n * 1000 + i,
                    "title": if i % 2 == 0 { "segfault in op" } else { "docs" },
                    "body": "",
                    "html_url": ""
                })
            })
            .collect();
        serde_json::to_string(&docs).unwrap()
    };
    fs::write(pages.join("page-1.json"), page(1, 100)).unwrap();
    fs::write(pages.join("page-2.json"), page(2, 37)).unwrap();
    let corpus = dir.path().join("c.jsonl");
    let out = run(&[
        "ingest",
        "--repo",
        "acme/dl",
        "--replay",
        pages.to_str().unwrap(),
        "--out",
        corpus.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&corpus);
    assert_eq!(rows.len(), 69);
    assert_eq!(rows[0]["framework"], "dl");
}

#[test]
fn catalog_from_documentation_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("docs.txt");
    fs::write(
        &dump,
        "## toy.nn.Conv2d(in_channels, out_channels, stride=1)\nApplies a convolution.\n:param stride: Stride of the convolution\n\n## toy.relu(input)\nRectifier.\n",
    )
    .unwrap();
    let out_path = dir.path().join("cat.jsonl");
    let out = run(&[
        "catalog",
        "--framework",
        "toy",
        "--in",
        dump.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rows = lines(&out_path);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["full_name"], "toy.nn.Conv2d");
    assert_eq!(rows[0]["params"][2]["description"], "Stride of the convolution");
}

/// The stage commands run one after another reach the same finding as the
/// one-shot pipeline.
#[test]
fn stagewise_run_matches_pipeline() {
    let fx = fixtures().join("e2e");
    let cfg = fx.join("mirrorfuzz.toml");
    let cfg = cfg.to_str().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let cats = e2e_catalogs();
    let ok = |args: &[&str]| {
        let out = bin().arg("--config").arg(cfg).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    ok(&["ingest", "--fixtures", fx.join("issues/alpha").to_str().unwrap(), "--out", &p("corpus.jsonl")]);
    ok(&["recognize", "--corpus", &p("corpus.jsonl"), "--catalog", &cats, "--out", &p("bugs.jsonl")]);
    assert_eq!(lines(&dir.path().join("bugs.jsonl")).len(), 1);
    ok(&["match", "--catalogs", &cats, "--out", &p("pairs.jsonl")]);
    ok(&[
        "synthesize",
        "--all",
        "--pairs",
        &p("pairs.jsonl"),
        "--bugdb",
        &p("bugs.jsonl"),
        "--out",
        &p("pool.jsonl"),
        "--catalogs",
        &cats,
    ]);
    let pool = lines(&dir.path().join("pool.jsonl"));
    assert!(pool.iter().any(|t| t["target"]["name"] == "beta.nn.MaxPool2D" && t["g"] == 1));
    ok(&["fuzz", "--pool", &p("pool.jsonl"), "--catalogs", &cats]);
    let crashes = lines(&dir.path().join("crashes.jsonl"));
    assert_eq!(crashes.len(), 1);
    assert_eq!(crashes[0]["outcome"], "Segv");
    let table = ok(&["report", "--crashes", &p("crashes.jsonl")]);
    assert!(table.lines().any(|l| l.starts_with("beta      |     1 |    1")), "{table}");

    // A second fuzz run finds nothing new and keeps the logs unchanged.
    let before = fs::read_to_string(dir.path().join("bugs.jsonl")).unwrap();
    ok(&["fuzz", "--pool", &p("pool.jsonl"), "--catalogs", &cats]);
    assert_eq!(fs::read_to_string(dir.path().join("bugs.jsonl")).unwrap(), before);
    assert_eq!(lines(&dir.path().join("crashes.jsonl")).len(), 1);
}

#[test]
fn synthesize_single_api_by_qualified_name() {
    let fx = fixtures().join("e2e");
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let cats = e2e_catalogs();
    let cfg = fx.join("mirrorfuzz.toml");
    let go = |args: &[&str]| bin().arg("--config").arg(&cfg).args(args).output().unwrap();
    assert!(go(&["ingest", "--fixtures", fx.join("issues/alpha").to_str().unwrap(), "--out", &p("c.jsonl")])
        .status
        .success());
    assert!(go(&["recognize", "--corpus", &p("c.jsonl"), "--catalog", &cats, "--out", &p("bugs.jsonl")])
        .status
        .success());
    assert!(go(&["match", "--catalogs", &cats, "--out", &p("pairs.jsonl")]).status.success());
    let synth = |api: &str| {
        go(&[
            "synthesize",
            "--api",
            api,
            "--pairs",
            &p("pairs.jsonl"),
            "--bugdb",
            &p("bugs.jsonl"),
            "--out",
            &p("pool.jsonl"),
            "--catalogs",
            &cats,
        ])
    };
    assert_eq!(synth("no.such.api").status.code(), Some(1));
    assert!(synth("beta:beta.nn.MaxPool2D").status.success());
    let pool = lines(&dir.path().join("pool.jsonl"));
    assert_eq!(pool.len(), 1);
    assert!(pool[0]["code"].as_str().unwrap().contains("beta.nn.MaxPool2D(kernel_size=2, stride=2)"));
}

#[test]
fn fuzz_without_runner_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool.jsonl");
    let out = run(&["fuzz", "--pool", pool.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
