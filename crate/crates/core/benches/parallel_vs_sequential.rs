use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cloud_ksvd::consensus::Network;
use cloud_ksvd::imaging::{extract_patches, load_image, split_columns};
use cloud_ksvd::ksvd::{init_shared, run_cloud_ksvd, LearnConfig};
use cloud_ksvd::runner::synthetic;
use cloud_ksvd::sparse_coding::{somp_batch_with, PursuitMode};
use cloud_ksvd::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn face_patches() -> cloud_ksvd::imaging::PatchMatrix {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/face.pgm");
    extract_patches(&load_image(path).unwrap(), 5).unwrap()
}

fn sparse_coding(c: &mut Criterion) {
    let patches = face_patches();
    let (dict, _) = init_shared(25, 50, 1).unwrap();
    let mut group = c.benchmark_group("omp_batch_face_5x5");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| somp_batch_with(&dict, black_box(&patches), 7, PursuitMode::PerColumn, exec))
        });
    }
    group.finish();
}

fn training_iteration(c: &mut Criterion) {
    let parts = split_columns(&face_patches(), 4).unwrap();
    let mut group = c.benchmark_group("ksvd_iteration_4_nodes");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = LearnConfig {
            t_d: 1,
            sparsity: 7,
            exec,
            ..LearnConfig::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut net = Network::complete(4).unwrap();
                run_cloud_ksvd(black_box(&parts), &cfg, &mut net).unwrap()
            })
        });
    }
    group.finish();
}

// dictionary-update cost as atoms and power/consensus rounds grow
fn stage_scaling(c: &mut Criterion) {
    let data = synthetic::generate(20, 50, 2000, 3, 1).unwrap();
    let parts = split_columns(&data.signals, 4).unwrap();
    let mut group = c.benchmark_group("ksvd_stage_scaling");
    group.sample_size(10);
    for atoms in [25, 50, 100] {
        for (t_p, t_c) in [(1, 1), (3, 5)] {
            let cfg = LearnConfig {
                t_d: 1,
                t_p,
                t_c,
                sparsity: 3,
                atoms,
                ..LearnConfig::default()
            };
            let id = BenchmarkId::new(format!("tp{t_p}_tc{t_c}"), atoms);
            group.bench_with_input(id, &cfg, |b, cfg| {
                b.iter(|| {
                    let mut net = Network::complete(4).unwrap();
                    run_cloud_ksvd(&parts, cfg, &mut net).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sparse_coding, training_iteration, stage_scaling);
criterion_main!(benches);
