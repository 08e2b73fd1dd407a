use std::f64::consts::FRAC_PI_2;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sscopic::exec::Execution;
use sscopic::hilbert::{quadrature_op, Party, State};
use sscopic::inference::{conditional_table_with, Binning};
use sscopic::oracles::{random_state_sweep_with, SweepCheck};
use sscopic::sampling::{estimate_inferred_variance_with, sample_joint_with, Noise};
use sscopic::states::two_mode_squeezed;

const MODES: [(&str, Execution); 2] =
    [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn conditional_table(c: &mut Criterion) {
    let psi: State = two_mode_squeezed(0.8, Some(40)).unwrap().into();
    let pb = quadrature_op(&psi.space().party(Party::B).unwrap(), 0, FRAC_PI_2).unwrap();
    let mut group = c.benchmark_group("conditional_table_tmss_40");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| conditional_table_with(exec, black_box(&psi), &pb, &Binning::Auto).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("theorem1_sweep_50");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| random_state_sweep_with(exec, 50, black_box(7), SweepCheck::Theorem1Cv).unwrap())
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let psi: State = two_mode_squeezed(0.8, Some(40)).unwrap().into();
    let pa = quadrature_op(&psi.space().party(Party::A).unwrap(), 0, FRAC_PI_2).unwrap();
    let pb = quadrature_op(&psi.space().party(Party::B).unwrap(), 0, FRAC_PI_2).unwrap();
    let mut group = c.benchmark_group("sample_and_estimate_1e5");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let rec = sample_joint_with(exec, &psi, &pa, &pb, 100_000, black_box(11), Noise::default())
                    .unwrap();
                estimate_inferred_variance_with(exec, &rec, None).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, conditional_table, sweep, sampling);
criterion_main!(benches);
