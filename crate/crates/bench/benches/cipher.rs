use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use jpegveil_core::{analyze, encrypt_jpeg, BaselineJpeg, CipherConfig, Components};
use jpegveil_harness::corpus::{standard_corpus, Sampling};

fn bench(c: &mut Criterion) {
    let cfg = CipherConfig::new(vec![0x5A; 32], Components::Both).unwrap();
    let picks = standard_corpus()
        .iter()
        .filter(|i| i.source == "astronaut" && i.restart_interval == 0 && i.sampling == Sampling::S420);

    let mut group = c.benchmark_group("cipher");
    for img in picks {
        group.throughput(Throughput::Bytes(img.bytes.len() as u64));
        group.bench_with_input(BenchmarkId::new("parse", &img.name), &img.bytes, |b, bytes| {
            b.iter(|| BaselineJpeg::parse(black_box(bytes)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("analyze", &img.name), &img.bytes, |b, bytes| {
            b.iter(|| analyze(black_box(bytes), Components::Both).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("encrypt", &img.name), &img.bytes, |b, bytes| {
            b.iter(|| encrypt_jpeg(black_box(bytes), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
