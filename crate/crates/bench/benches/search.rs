use criterion::{criterion_group, criterion_main, Criterion};
use idswap_bench::toy_world;
use idswap_core::search::{
    channel_score_scan, greedy_block_select, layer_window_search, sample_pairs, SearchConfig, StopCriterion,
};
use idswap_core::LayerSet;

fn search(c: &mut Criterion) {
    let (b, _) = toy_world();
    let pairs = sample_pairs(&b, 32, 0).unwrap();
    let cfg = SearchConfig::default();
    let sizes: Vec<usize> = (1..=18).collect();
    let mut g = c.benchmark_group("search");
    g.sample_size(10);
    g.bench_function("layer_window_search_32_pairs", |bn| {
        bn.iter(|| layer_window_search(&pairs, &sizes, &b, &cfg).unwrap())
    });
    let layers = LayerSet::new([5, 6, 7, 8, 9]);
    g.bench_function("channel_scan_block4", |bn| {
        bn.iter(|| channel_score_scan(&pairs, &layers, 4, &b, &cfg).unwrap())
    });
    let table = channel_score_scan(&pairs, &layers, 4, &b, &cfg).unwrap();
    g.bench_function("greedy_block_select", |bn| {
        bn.iter(|| greedy_block_select(&table, StopCriterion::Budget(64), &b, &pairs).unwrap())
    });
    g.finish();
}

criterion_group!(benches, search);
criterion_main!(benches);
