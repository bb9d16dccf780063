use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lgdiar::clustering::symmetric_eig;
use lgdiar::scoring::optimal_assignment;
use lgdiar::{compute_der, generate_scenario, Annotation, LabeledSegment, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.random();
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

fn jacobi(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("jacobi");
    for n in [10usize, 50, 100] {
        let m = random_symmetric(n, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| symmetric_eig(m).unwrap()));
    }
    group.finish();
}

fn hungarian(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("hungarian");
    for n in [4usize, 16, 64] {
        let w: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &w, |b, w| b.iter(|| optimal_assignment(w)));
    }
    group.finish();
}

fn der(c: &mut Criterion) {
    let s = generate_scenario(&SimConfig { n_speakers: 4, duration_s: 1800.0, seed: 2, ..Default::default() }).unwrap();
    let reference = s.reference.clone();
    // Shift every segment by 300 ms and rename, so collar, miss and confusion all do work.
    let hypothesis = Annotation::new(
        &reference.recording_id,
        reference
            .segments()
            .iter()
            .map(|seg| LabeledSegment {
                speaker: format!("h{}", seg.speaker),
                start_s: seg.start_s + 0.3,
                end_s: seg.end_s + 0.3,
            })
            .collect(),
    )
    .unwrap();
    c.bench_function("der_30min_4spk", |b| b.iter(|| compute_der(&reference, &hypothesis, 0.25, true).unwrap()));
}

criterion_group!(benches, jacobi, hungarian, der);
criterion_main!(benches);
