use burstsim_bench::{reference_config, grid};
use burstsim_core::normal_form::{nf_integrate, NfSettings, NF_BURST, SEARCH_START};
use burstsim_core::{mirrored_hysteresis_sweep, parse_deck, CircuitModel, CircuitState, SweepDirection, REFERENCE_DECK};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn static_blocks(c: &mut Criterion) {
    let cfg = reference_config();
    let sat = cfg.cascade.nonmonotone.sat;
    let vy = grid(0.0, 5.0, 5000);
    c.bench_function("saturation_eval_5001", |b| {
        b.iter(|| vy.iter().map(|&v| sat.eval(black_box(v))).sum::<f64>())
    });
    c.bench_function("cascade_sweep_5001", |b| {
        b.iter(|| mirrored_hysteresis_sweep(&cfg.cascade, black_box(4.1), &vy, SweepDirection::Up).unwrap())
    });
}

fn dynamics(c: &mut Criterion) {
    let cfg = reference_config();
    let mut g = c.benchmark_group("dynamics");
    g.sample_size(10);
    g.bench_function("circuit_10ms", |b| {
        b.iter(|| CircuitModel::new(cfg.clone()).unwrap().integrate(CircuitState::default(), 10e-3).unwrap())
    });
    g.bench_function("normal_form_500", |b| {
        b.iter(|| nf_integrate(SEARCH_START, &NF_BURST, 500.0, &NfSettings::default()).unwrap())
    });
    g.finish();
}

fn netlist(c: &mut Criterion) {
    c.bench_function("parse_reference_deck", |b| b.iter(|| parse_deck(black_box(REFERENCE_DECK)).unwrap()));
}

criterion_group!(benches, static_blocks, dynamics, netlist);
criterion_main!(benches);
