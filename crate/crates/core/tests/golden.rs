//! Prompt text is pinned against files under fixtures/golden. Set
//! `MIRRORFUZZ_BLESS=1` to rewrite them after an intentional change.

use std::fs;
use std::path::{Path, PathBuf};

use mirrorfuzz_core::catalog::ApiRecord;
use mirrorfuzz_core::ingest::SourceSnippet;
use mirrorfuzz_core::matcher::PairKind;
use mirrorfuzz_core::recognizer::{BugRecord, BugSource};
use mirrorfuzz_core::store::read_records;
use mirrorfuzz_core::synthesizer::{build_repair_prompt, build_syn_prompt};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn target(name: &str) -> ApiRecord {
    let apis: Vec<ApiRecord> = read_records(&fixtures().join("e2e/catalogs/beta.jsonl")).unwrap();
    apis.into_iter().find(|a| a.full_name == name).unwrap()
}

fn bug(params: &[&str]) -> BugRecord {
    BugRecord {
        framework: "alpha".into(),
        buggy_api: "alpha.nn.MaxPool2d".into(),
        trigger_params: params.iter().map(|s| s.to_string()).collect(),
        root_cause: "stride of zero is not validated and divides the output size".into(),
        snippet: SourceSnippet::code("import alpha\nm = alpha.nn.MaxPool2d(kernel_size=2, stride=0)\nm(alpha.ones(1, 1, 4, 4))"),
        issue_id: Some("alpha#101".into()),
        dedup_key: None,
        verified: true,
        source: BugSource::Mined,
    }
}

fn check(name: &str, actual: &str) {
    let path = fixtures().join("golden").join(name);
    if std::env::var_os("MIRRORFUZZ_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted; rerun with MIRRORFUZZ_BLESS=1 if intended");
}

#[test]
fn synthesis_prompt_cross_framework() {
    let p = build_syn_prompt(&target("beta.nn.MaxPool2D"), &bug(&["stride"]), PairKind::Os);
    check("syn_os.txt", &p.render());
}

#[test]
fn synthesis_prompt_without_trigger_params() {
    let p = build_syn_prompt(&target("beta.nn.AvgPool2D"), &bug(&[]), PairKind::Ps);
    check("syn_ps_no_params.txt", &p.render());
}

#[test]
fn repair_prompt() {
    let code = "import beta\nbeta.nn.MaxPool2D(kernel_size=2, stride=0)(beta.ones([1, 4, 4, 1]))\n";
    let err = "Traceback (most recent call last):\n  File \"t.py\", line 1\nModuleNotFoundError: No module named 'beta'\n";
    let p = build_repair_prompt(&target("beta.nn.MaxPool2D"), code, err);
    check("repair.txt", &p.render());
}
