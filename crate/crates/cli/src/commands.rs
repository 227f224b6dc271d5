use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use mirrorfuzz_core::catalog::{load_catalog, ApiRecord, Catalog};
use mirrorfuzz_core::config::{Config, EmbedderKind, LlmBackendKind};
use mirrorfuzz_core::executor::{run_campaign, CrashReport, MockRunner, ProcessRunner, Runner};
use mirrorfuzz_core::ingest::{
    extract_snippets, fetch_issues, filter_bug_issues, FixtureTransport, IssueRecord, KeywordConfig,
    RecordedTransport, Repo, ThreadSleeper, Transport, UreqTransport,
};
use mirrorfuzz_core::llm::{HttpBackend, HttpLlmConfig, LlmBackend, LlmClient, MockBackend};
use mirrorfuzz_core::matcher::{
    CachedEmbedder, EmbeddingProvider, HttpEmbedder, HttpEmbedderConfig, Matcher, SimilarPair, StubEmbedder,
};
use mirrorfuzz_core::recognizer::{filter_snippets, recognize, verify, InterpreterHost, SyntaxHost, SyntaxOnly};
use mirrorfuzz_core::store::{read_records, write_records, Store, StorePaths};
use mirrorfuzz_core::synthesizer::Synthesizer;

use crate::report::render_table;
use crate::{
    CatalogArgs, Cli, CliError, Command, FuzzArgs, IngestArgs, MatchArgs, PipelineArgs, RecognizeArgs, ReportArgs,
    SynthesizeArgs,
};

type CmdResult = Result<(), CliError>;

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

pub fn run(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(usage)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Ingest(a) => ingest(cfg, a),
        Command::Catalog(a) => catalog(a),
        Command::Recognize(a) => recognize_cmd(cfg, a),
        Command::Match(a) => match_cmd(cfg, a),
        Command::Synthesize(a) => synthesize(cfg, a),
        Command::Fuzz(a) => fuzz(cfg, a),
        Command::Report(a) => report(a),
        Command::Pipeline(a) => pipeline(cfg, a),
    }
}

fn validated(cfg: Config) -> Result<Config, CliError> {
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

/// Siblings of `anchor` named as in a store directory.
fn store_paths_near(anchor: &Path) -> StorePaths {
    StorePaths::in_dir(anchor.parent().unwrap_or(Path::new(".")))
}

fn load_catalogs(paths: &[PathBuf]) -> anyhow::Result<Catalog> {
    let mut all = Vec::new();
    for p in paths {
        let loaded = load_catalog(p, None).with_context(|| format!("loading catalog {}", p.display()))?;
        if loaded.warnings > 0 {
            log::warn!("{}: {} catalog records skipped", p.display(), loaded.warnings);
        }
        all.extend(loaded.records);
    }
    Ok(Catalog::new(all))
}

fn build_llm(cfg: &Config) -> Result<LlmClient, CliError> {
    let backend: Box<dyn LlmBackend> = match cfg.llm.backend {
        LlmBackendKind::Mock => {
            let dir = cfg
                .llm
                .mock_dir
                .as_ref()
                .ok_or_else(|| usage("llm.mock_dir must be set when llm.backend = \"mock\""))?;
            Box::new(MockBackend::open(dir)?)
        }
        LlmBackendKind::Http => Box::new(HttpBackend::new(HttpLlmConfig {
            base_url: cfg.llm.base_url.clone(),
            model: cfg.llm.model.clone(),
            api_key: None,
            temperature: cfg.llm.temperature,
            timeout: cfg.llm_timeout(),
        })),
    };
    Ok(LlmClient::new(backend, cfg.llm.max_concurrent))
}

fn build_embedder(cfg: &Config) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
    let m = &cfg.matching;
    Ok(match m.embedder {
        EmbedderKind::Stub => Box::new(StubEmbedder),
        EmbedderKind::Http => {
            let http = Box::new(HttpEmbedder::new(HttpEmbedderConfig {
                base_url: m.embed_base_url.clone(),
                model: m.embed_model.clone(),
                dimension: m.embed_dimension,
                api_key: None,
                timeout: cfg.llm_timeout(),
            }));
            match &m.embed_cache {
                Some(path) => Box::new(CachedEmbedder::with_file(Some(http), m.embed_dimension, path)?),
                None => Box::new(CachedEmbedder::new(http)),
            }
        }
    })
}

fn build_runner(spec: &str, slots: usize) -> anyhow::Result<Box<dyn Runner>> {
    Ok(match spec.strip_prefix("mock:") {
        Some(script) => Box::new(MockRunner::load(Path::new(script))?),
        None => Box::new(ProcessRunner::new(spec, slots)?),
    })
}

fn syntax_host(cfg: &Config) -> Box<dyn SyntaxHost> {
    match &cfg.recognize.python {
        Some(program) => Box::new(InterpreterHost {
            program: program.clone(),
        }),
        None => Box::new(SyntaxOnly),
    }
}

fn ingest(mut cfg: Config, a: IngestArgs) -> CmdResult {
    if let Some(n) = a.page_limit {
        cfg.ingest.page_limit = n;
    }
    let cfg = validated(cfg)?;
    let keywords = match &a.keywords {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            KeywordConfig::parse_list(&text).map_err(usage)?
        }
        None => cfg.ingest.keyword_config().map_err(usage)?,
    };
    let (framework, fetched) = if let Some(dir) = &a.fixtures {
        let fw = a
            .framework
            .clone()
            .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_default();
        (fw, FixtureTransport::load(dir, cfg.ingest.page_limit)?)
    } else {
        let coord = a.repo.as_deref().expect("clap enforces a source");
        let repo: Repo = coord.parse().map_err(usage)?;
        let transport: Box<dyn Transport> = match &a.replay {
            Some(dir) => Box::new(RecordedTransport::new(dir)),
            None => Box::new(UreqTransport::new(cfg.llm_timeout())),
        };
        let fw = a.framework.clone().unwrap_or_else(|| repo.name.clone());
        (fw, fetch_issues(&repo, &cfg.ingest.fetch_options(), transport.as_ref(), &ThreadSleeper)?)
    };
    let records = filter_and_extract(&fetched.issues, &framework, &keywords, &cfg);
    write_records(&a.out, &records)?;
    println!(
        "{} of {} issues kept as bug reports ({} malformed skipped) -> {}",
        records.len(),
        fetched.issues.len(),
        fetched.malformed,
        a.out.display()
    );
    Ok(())
}

fn filter_and_extract<D: mirrorfuzz_core::ingest::IssueDocument>(
    docs: &[D],
    framework: &str,
    keywords: &KeywordConfig,
    cfg: &Config,
) -> Vec<IssueRecord> {
    let snippet_cfg = cfg.ingest.snippet_config();
    filter_bug_issues(docs, framework, keywords)
        .iter()
        .map(|issue| {
            let ex = extract_snippets(issue, &snippet_cfg);
            if ex.warnings > 0 {
                log::warn!("issue {}: {} unterminated code fences ignored", issue.issue_id, ex.warnings);
            }
            ex.issue
        })
        .collect()
}

fn catalog(a: CatalogArgs) -> CmdResult {
    let loaded = load_catalog(&a.input, Some(&a.framework))?;
    if loaded.records.is_empty() {
        return Err(anyhow!("no API records found in {}", a.input.display()).into());
    }
    write_records(&a.out, &loaded.records)?;
    println!(
        "{} APIs for {} ({} skipped) -> {}",
        loaded.records.len(),
        a.framework,
        loaded.warnings,
        a.out.display()
    );
    Ok(())
}

struct RecognizeSummary {
    issues: usize,
    records: usize,
    verified: usize,
    unrecognized: usize,
}

fn recognize_into(cfg: &Config, corpus: &[IssueRecord], catalog: &Catalog, store: &mut Store) -> anyhow::Result<RecognizeSummary> {
    let llm = build_llm(cfg).map_err(|e| match e {
        CliError::Usage(m) => anyhow!(m),
        CliError::Runtime(e) => e,
    })?;
    let variant = cfg.recognize.prompt_variant()?;
    let host = syntax_host(cfg);
    let mut sum = RecognizeSummary {
        issues: corpus.len(),
        records: 0,
        verified: 0,
        unrecognized: 0,
    };
    for issue in corpus {
        let mut issue = issue.clone();
        filter_snippets(&mut issue, host.as_ref());
        let apis = catalog.framework(&issue.framework);
        if apis.is_empty() {
            log::warn!("issue {}: no catalog for framework {:?}", issue.issue_id, issue.framework);
            sum.unrecognized += 1;
            continue;
        }
        let found = match recognize(&issue, variant, &llm, cfg.recognize.budget, &apis) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("issue {}: recognition failed: {e}", issue.issue_id);
                sum.unrecognized += 1;
                continue;
            }
        };
        if let Err(why) = &found.status {
            log::info!("issue {}: unrecognized ({why:?})", issue.issue_id);
            sum.unrecognized += 1;
        }
        for rec in found.records {
            let rec = if cfg.recognize.verify {
                verify(&rec, &issue, &llm, cfg.recognize.budget)
            } else {
                rec
            };
            sum.verified += usize::from(rec.verified);
            if store.update_bugs(&rec)? {
                sum.records += 1;
            }
        }
    }
    Ok(sum)
}

fn recognize_cmd(mut cfg: Config, a: RecognizeArgs) -> CmdResult {
    if let Some(v) = a.variant {
        cfg.recognize.variant = v;
    }
    if a.no_verify {
        cfg.recognize.verify = false;
    }
    let cfg = validated(cfg)?;
    let corpus: Vec<IssueRecord> = read_records(&a.corpus)?;
    let catalog = load_catalogs(&a.catalog)?;
    let mut store = Store::open(&StorePaths {
        bugs: a.out.clone(),
        ..store_paths_near(&a.out)
    })?;
    let s = recognize_into(&cfg, &corpus, &catalog, &mut store)?;
    store.sync()?;
    println!(
        "{} issues: {} new bug records ({} verified), {} unrecognized -> {}",
        s.issues,
        s.records,
        s.verified,
        s.unrecognized,
        a.out.display()
    );
    Ok(())
}

fn compute_pairs(cfg: &Config, catalog: &Catalog) -> anyhow::Result<Vec<SimilarPair>> {
    let embedder = build_embedder(cfg)?;
    let matcher = Matcher::build(catalog.apis(), embedder.as_ref())?;
    Ok(matcher.match_all(&cfg.matching.params(), cfg.matching.workers))
}

fn match_cmd(mut cfg: Config, a: MatchArgs) -> CmdResult {
    let m = &mut cfg.matching;
    if let Some(v) = a.alpha {
        m.alpha = v;
    }
    if let Some(v) = a.topk {
        m.top_k = v;
    }
    if let Some(v) = a.h_within {
        m.h_within = v;
    }
    if let Some(v) = a.h_cross {
        m.h_cross = v;
    }
    if let Some(v) = a.workers {
        m.workers = v;
    }
    if let Some(e) = a.embedder {
        m.embedder = match e.as_str() {
            "stub" => EmbedderKind::Stub,
            "http" => EmbedderKind::Http,
            other => return Err(usage(format!("unknown embedder {other:?}; use stub or http"))),
        };
    }
    let cfg = validated(cfg)?;
    let catalog = load_catalogs(&a.catalogs)?;
    let pairs = compute_pairs(&cfg, &catalog)?;
    write_records(&a.out, &pairs)?;
    println!("{} similar pairs over {} APIs -> {}", pairs.len(), catalog.len(), a.out.display());
    Ok(())
}

fn find_api<'c>(catalog: &'c Catalog, spec: &str) -> Result<&'c ApiRecord, CliError> {
    let hits: Vec<&ApiRecord> = catalog
        .apis()
        .iter()
        .filter(|a| a.full_name == spec || a.api_ref().to_string() == spec)
        .collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(usage(format!("API {spec:?} is not in the catalogs"))),
        _ => Err(usage(format!("API {spec:?} is ambiguous; use framework:full_name"))),
    }
}

/// Synthesizes for each target and returns the number of admitted cases.
fn synthesize_into(
    cfg: &Config,
    catalog: &Catalog,
    targets: &[&ApiRecord],
    runner: Option<&dyn Runner>,
    store: &mut Store,
) -> Result<usize, CliError> {
    let llm = build_llm(cfg)?;
    let synth = Synthesizer {
        llm: &llm,
        runner,
        triage: &cfg.triage,
        cfg: cfg.synthesize.synthesis_config(),
    };
    let mut admitted = 0;
    for target in targets {
        let fw_catalog = catalog.framework(&target.framework);
        admitted += synth.synthesize(target, &fw_catalog, store).len();
    }
    Ok(admitted)
}

fn synthesize(cfg: Config, a: SynthesizeArgs) -> CmdResult {
    let cfg = validated(cfg)?;
    let catalog = load_catalogs(&a.catalogs)?;
    let targets: Vec<&ApiRecord> = match &a.api {
        Some(spec) => vec![find_api(&catalog, spec)?],
        None => catalog.apis().iter().collect(),
    };
    let runner_spec = a.runner.or_else(|| cfg.fuzz.runner.clone());
    let runner = runner_spec.as_deref().map(|s| build_runner(s, cfg.fuzz.workers)).transpose()?;
    let mut store = Store::open(&StorePaths {
        bugs: a.bugdb.clone(),
        pairs: a.pairs.clone(),
        pool: a.out.clone(),
        ..store_paths_near(&a.out)
    })?;
    let n = synthesize_into(&cfg, &catalog, &targets, runner.as_deref(), &mut store)?;
    store.sync()?;
    println!("{n} test cases admitted for {} target APIs -> {}", targets.len(), a.out.display());
    Ok(())
}

fn runner_spec(cfg: &Config, flag: Option<String>) -> Result<String, CliError> {
    flag.or_else(|| cfg.fuzz.runner.clone())
        .ok_or_else(|| usage("no runner configured; pass --runner or set fuzz.runner"))
}

fn fuzz(mut cfg: Config, a: FuzzArgs) -> CmdResult {
    if let Some(b) = a.budget {
        cfg.fuzz.budget = b;
    }
    if let Some(w) = a.workers {
        cfg.fuzz.workers = w;
    }
    let cfg = validated(cfg)?;
    let spec = runner_spec(&cfg, a.runner)?;
    let catalog = load_catalogs(&a.catalogs)?;
    let near = store_paths_near(&a.pool);
    let mut store = Store::open(&StorePaths {
        pool: a.pool.clone(),
        bugs: a.bugdb.unwrap_or(near.bugs.clone()),
        crashes: a.crashes.unwrap_or(near.crashes.clone()),
        ..near
    })?;
    let runner = build_runner(&spec, cfg.fuzz.workers)?;
    let result = run_campaign(&mut store, catalog.apis(), runner.as_ref(), &cfg.campaign().map_err(usage)?)?;
    store.sync()?;
    println!(
        "{} rounds, {} executions, {} non-passing, {} new bugs",
        result.rounds,
        result.executions,
        result.reports.len(),
        result.new_bugs.len()
    );
    Ok(())
}

fn report(a: ReportArgs) -> CmdResult {
    if !a.crashes.exists() {
        return Err(anyhow!("crash log {} does not exist", a.crashes.display()).into());
    }
    let reports: Vec<CrashReport> = read_records(&a.crashes)?;
    print!("{}", render_table(&reports));
    Ok(())
}

fn pipeline(mut cfg: Config, a: PipelineArgs) -> CmdResult {
    if let Some(b) = a.budget {
        cfg.fuzz.budget = b;
    }
    if let Some(w) = a.workers {
        cfg.fuzz.workers = w;
    }
    let cfg = validated(cfg)?;
    let spec = runner_spec(&cfg, a.runner)?;
    fs::create_dir_all(&a.workdir).with_context(|| format!("creating {}", a.workdir.display()))?;

    let corpus: Vec<IssueRecord> = match &a.corpus {
        Some(path) => read_records(path)?,
        None => {
            let keywords = cfg.ingest.keyword_config().map_err(usage)?;
            let mut all = Vec::new();
            for (fw, dir) in &a.fixtures {
                let fetched = FixtureTransport::load(dir, cfg.ingest.page_limit)?;
                all.extend(filter_and_extract(&fetched.issues, fw, &keywords, &cfg));
            }
            all
        }
    };
    let corpus_path = a.workdir.join("corpus.jsonl");
    write_records(&corpus_path, &corpus)?;
    println!("ingest: {} bug issues -> {}", corpus.len(), corpus_path.display());

    let catalog = load_catalogs(&a.catalogs)?;
    let mut store = Store::open_dir(&a.workdir)?;
    let s = recognize_into(&cfg, &corpus, &catalog, &mut store)?;
    println!("recognize: {} new bug records ({} verified)", s.records, s.verified);

    let pairs = compute_pairs(&cfg, &catalog)?;
    let mut new_pairs = 0;
    for p in &pairs {
        new_pairs += usize::from(store.add_pair(p)?);
    }
    println!("match: {} similar pairs ({new_pairs} new)", pairs.len());

    let runner = build_runner(&spec, cfg.fuzz.workers)?;
    let targets: Vec<&ApiRecord> = catalog.apis().iter().collect();
    let admitted = synthesize_into(&cfg, &catalog, &targets, Some(runner.as_ref()), &mut store)?;
    println!("synthesize: {admitted} test cases admitted");

    let result = run_campaign(&mut store, catalog.apis(), runner.as_ref(), &cfg.campaign().map_err(usage)?)?;
    store.sync()?;
    println!(
        "fuzz: {} rounds, {} executions, {} crash reports, {} new bugs",
        result.rounds,
        result.executions,
        result.reports.len(),
        result.new_bugs.len()
    );
    print!("{}", render_table(store.crashes()));
    Ok(())
}
