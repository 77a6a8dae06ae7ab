use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use idswap_bench::full_world;
use idswap_core::latent::{blend, swap, Selection};
use idswap_core::LayerSet;

fn latent_ops(c: &mut Criterion) {
    let (b, mask) = full_world();
    let s = b.sample_random_latent(1).unwrap();
    let t = b.sample_random_latent(2).unwrap();
    let sel = Selection::Layers(LayerSet::new([5, 6, 7]));
    c.bench_function("swap_layers_18x512", |bn| bn.iter(|| swap(black_box(&s), black_box(&t), &sel).unwrap()));
    c.bench_function("blend_18x512", |bn| bn.iter(|| blend(black_box(&s), black_box(&t), &mask).unwrap()));
    c.bench_function("generate_18x512", |bn| bn.iter(|| b.generate(black_box(&s)).unwrap()));
    let img = b.generate(&s).unwrap();
    c.bench_function("embed_identity", |bn| bn.iter(|| b.embed_identity(black_box(&img)).unwrap()));
    c.bench_function("encode", |bn| bn.iter(|| b.encode(black_box(&img)).unwrap()));
}

criterion_group!(benches, latent_ops);
criterion_main!(benches);
