use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use starkprobe::basis::enumerate_sector;
use starkprobe::dynamics::diagonalize;
use starkprobe::fisher::LongTimeWindow;
use starkprobe::open_dynamics::{integrate_master, jump_diagonals, DensityMatrix, DephasingSpec, IntegratorConfig};
use starkprobe::{InitialState, ProbeSpec, StarkProbe};

fn single(sites: usize) -> StarkProbe {
    StarkProbe::new(ProbeSpec::single_particle(sites, InitialState::CentralSite)).unwrap()
}

fn half_filled(sites: usize) -> StarkProbe {
    StarkProbe::new(ProbeSpec::many_body(sites, sites / 2, 0.0, InitialState::Neel)).unwrap()
}

fn sectors(c: &mut Criterion) {
    c.bench_function("enumerate L=16 N=8", |b| b.iter(|| enumerate_sector(black_box(16), 8).unwrap()));
}

fn diagonalisation(c: &mut Criterion) {
    let mut g = c.benchmark_group("diagonalize");
    g.sample_size(10);
    for (name, probe) in [("single L=100", single(100)), ("half-filled L=12", half_filled(12))] {
        let h = probe.hamiltonian(0.1).unwrap();
        g.bench_function(name, |b| b.iter(|| diagonalize(black_box(&h)).unwrap()));
    }
    g.finish();
}

fn fisher(c: &mut Criterion) {
    let mut g = c.benchmark_group("qfi");
    g.sample_size(20);
    for (name, probe) in [("single L=100", single(100)), ("half-filled L=12", half_filled(12))] {
        let evo = probe.evolution(0.1).unwrap();
        g.bench_function(format!("{name} one time"), |b| b.iter(|| evo.qfi(black_box(500.0)).unwrap()));
        g.bench_function(format!("{name} with probabilities"), |b| {
            b.iter(|| evo.qfi_and_probabilities(black_box(500.0)).unwrap())
        });
    }
    let probe = single(60);
    g.bench_function("long-time window single L=60", |b| {
        b.iter(|| probe.long_time(black_box(0.1), &LongTimeWindow::default(), false).unwrap())
    });
    g.finish();
}

fn master_equation(c: &mut Criterion) {
    let mut g = c.benchmark_group("rk4");
    g.sample_size(10);
    let probe = single(16);
    let spec = DephasingSpec::sigma_z(0.005).unwrap();
    let diagonals = jump_diagonals(spec.form, &probe).unwrap();
    let h = probe.hamiltonian(0.1).unwrap();
    let rho0 = DensityMatrix::from_pure(&probe.initial_state(0.1).amplitudes, 0.0);
    g.bench_function("single L=16 to t=10", |b| {
        b.iter(|| integrate_master(h.matrix(), &diagonals, &spec, &rho0, &[10.0], &IntegratorConfig::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, sectors, diagonalisation, fisher, master_equation);
criterion_main!(benches);
