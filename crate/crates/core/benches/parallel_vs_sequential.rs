use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qseq::autodiff::QuantumGrad;
use qseq::models::{batch_loss_and_grad, build, predict_many, ModelConfig, ModelKind};
use qseq::par::Exec;
use std::hint::black_box;

const SEQ_LEN: usize = 8;
const BATCH: usize = 16;

fn windows(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let w: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            (0..SEQ_LEN)
                .map(|i| 0.5 + 0.4 * ((i + k) as f64 * 0.26).sin())
                .collect()
        })
        .collect();
    let y = (0..n)
        .map(|k| 0.5 + 0.4 * ((SEQ_LEN + k) as f64 * 0.26).sin())
        .collect();
    (w, y)
}

fn modes() -> [(&'static str, Exec); 2] {
    [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel),
    ]
}

fn loss_and_grad(c: &mut Criterion) {
    let (w, y) = windows(BATCH);
    let refs: Vec<&[f64]> = w.iter().map(Vec::as_slice).collect();
    let mut group = c.benchmark_group("batch_loss_and_grad");
    group.sample_size(10);
    for kind in [ModelKind::Lstm, ModelKind::Qlstm, ModelKind::Qfwp8] {
        let model = build(&ModelConfig::new(kind, SEQ_LEN, 0)).unwrap();
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, kind), &exec, |b, &exec| {
                b.iter(|| {
                    black_box(
                        batch_loss_and_grad(model.as_ref(), &refs, &y, QuantumGrad::Adjoint, exec)
                            .unwrap(),
                    )
                })
            });
        }
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let (w, _) = windows(256);
    let refs: Vec<&[f64]> = w.iter().map(Vec::as_slice).collect();
    let mut group = c.benchmark_group("predict_many");
    group.sample_size(10);
    for kind in [ModelKind::Qlstm, ModelKind::Qfwp8] {
        let model = build(&ModelConfig::new(kind, SEQ_LEN, 0)).unwrap();
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, kind), &exec, |b, &exec| {
                b.iter(|| black_box(predict_many(model.as_ref(), &refs, exec).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, loss_and_grad, inference);
criterion_main!(benches);
