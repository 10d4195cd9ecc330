use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use soficlab_bench::{rotation, shuffled, torus};
use soficlab_core::approx::all_pairs;
use soficlab_core::bernoulli::{exact_variance, pushforward, sample_labels, standard_family};
use soficlab_core::conjugacy::align;
use soficlab_core::irs::empirical_irs;
use soficlab_core::{AlignParams, AlignmentProblem};

fn irs(c: &mut Criterion) {
    let mut g = c.benchmark_group("empirical_irs");
    for n in [32u64, 100] {
        let s = torus(n, 2);
        let w = s.window().clone();
        g.bench_with_input(BenchmarkId::from_parameter(n * n), &s, |b, s| {
            b.iter(|| empirical_irs(black_box(s), &w).unwrap())
        });
    }
    g.finish();
}

fn defects(c: &mut Criterion) {
    let s = torus(100, 2).perturb(0.01, 1).unwrap();
    let pairs = all_pairs(s.window());
    c.bench_function("defect/torus-100x100-ball2", |b| {
        b.iter(|| s.defect(black_box(&pairs)).unwrap())
    });
}

fn variance(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_variance");
    for d in [1000, 10_000] {
        let s = rotation(d, 2);
        let fam = standard_family(s.spec(), 16).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(d), &s, |b, s| {
            b.iter(|| {
                fam.iter()
                    .map(|f| exact_variance(black_box(s), f).unwrap())
                    .sum::<f64>()
            })
        });
    }
    g.finish();
}

fn push(c: &mut Criterion) {
    let s = rotation(100_000, 2);
    let fam = standard_family(s.spec(), 16).unwrap();
    let x = sample_labels(100_000, 1);
    c.bench_function("pushforward/100000", |b| {
        b.iter(|| {
            fam.iter()
                .map(|f| pushforward(black_box(&s), &x, f).unwrap())
                .sum::<f64>()
        })
    });
}

fn alignment(c: &mut Criterion) {
    let mut g = c.benchmark_group("align");
    g.sample_size(10);
    for d in [1000, 10_000] {
        let s = rotation(d, 1);
        let pi = shuffled(d, 3);
        let p = s.relabel(&pi).unwrap();
        let gens = s.spec().generators().to_vec();
        let problem = AlignmentProblem::new(&s, &p, &gens, AlignParams::default()).unwrap();
        g.bench_with_input(
            BenchmarkId::new("relabeled-rotation", d),
            &problem,
            |b, pr| b.iter(|| align(black_box(pr)).unwrap()),
        );
    }
    let (a, b2) = (torus(32, 1), torus(32, 1).perturb(0.05, 2).unwrap());
    let gens = a.spec().generators().to_vec();
    let problem = AlignmentProblem::new(&a, &b2, &gens, AlignParams::default()).unwrap();
    g.bench_function("perturbed-torus/1024", |b| {
        b.iter(|| align(black_box(&problem)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, irs, defects, variance, push, alignment);
criterion_main!(benches);
