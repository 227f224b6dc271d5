use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mirrorfuzz_bench::{catalog, PROGRAM};
use mirrorfuzz_core::executor::{mutate, MutationConfig, MutationKind, MutationOp};
use mirrorfuzz_core::matcher::{MatchParams, Matcher, StubEmbedder};
use std::hint::black_box;

fn build(c: &mut Criterion) {
    let mut g = c.benchmark_group("matcher_build");
    for n in [50, 200] {
        let apis = catalog(n);
        g.bench_with_input(BenchmarkId::from_parameter(n * 2), &apis, |b, apis| {
            b.iter(|| Matcher::build(black_box(apis), &StubEmbedder).unwrap())
        });
    }
    g.finish();
}

fn match_all(c: &mut Criterion) {
    let apis = catalog(200);
    let m = Matcher::build(&apis, &StubEmbedder).unwrap();
    let params = MatchParams::default();
    let mut g = c.benchmark_group("match_all_400");
    g.sample_size(10);
    for workers in [1, 4] {
        g.bench_with_input(BenchmarkId::new("workers", workers), &workers, |b, &w| {
            b.iter(|| m.match_all(&params, w))
        });
    }
    g.finish();
}

fn mutation(c: &mut Criterion) {
    let cfg = MutationConfig::default();
    let params = vec!["stride".to_string(), "padding".to_string()];
    let mut g = c.benchmark_group("mutate");
    for kind in MutationKind::ALL {
        g.bench_function(format!("{kind:?}"), |b| {
            let mut seed = 0u64;
            b.iter(|| {
                seed += 1;
                mutate(black_box(PROGRAM), MutationOp { kind, seed }, &params, &cfg)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, build, match_all, mutation);
criterion_main!(benches);
