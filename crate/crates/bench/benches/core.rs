use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use seirvax_core::controllers::ControlLaw;
use seirvax_core::equilibria::{default_frequency_grid, eigenvalues, endemic_equilibrium, hinf_ratio_sweep, jacobian_at};
use seirvax_core::integrator::{integrate, AdaptiveTolerances, IntegratorConfig};
use seirvax_core::model::{ModelParams, SeirState};
use seirvax_core::verify::check_identity_suite;

fn p1() -> ModelParams {
    ModelParams::new(1000.0, 0.01, 0.02, 0.9, 0.2, 0.2).unwrap()
}

fn bench_integrate(c: &mut Criterion) {
    let p = p1();
    let x0 = SeirState::new(900.0, 50.0, 50.0, 0.0);
    let mut g = c.benchmark_group("integrate_1000d");
    let laws = [
        ("zero_vax", ControlLaw::ZeroVax),
        ("immune_feedback", ControlLaw::ImmuneFeedback { g: 0.0, g1: 0.03 }),
        (
            "saturated_linear",
            ControlLaw::saturated(ControlLaw::SusceptibleLinear { g: 0.1 }, 0.0, 1.0).unwrap(),
        ),
    ];
    for (name, law) in &laws {
        g.bench_with_input(BenchmarkId::new("rk4_dt0.01", name), law, |b, law| {
            b.iter(|| integrate(black_box(&x0), &p, law, &IntegratorConfig::fixed(1000.0, 1e-2)).unwrap())
        });
    }
    let adaptive = IntegratorConfig {
        adaptive: Some(AdaptiveTolerances { rel_tol: 1e-9, abs_tol: 1e-9 }),
        ..IntegratorConfig::fixed(1000.0, 1e-2)
    };
    g.bench_function("dopri5_immune_feedback", |b| {
        b.iter(|| integrate(black_box(&x0), &p, &laws[1].1, &adaptive).unwrap())
    });
    g.finish();
}

fn bench_equilibria(c: &mut Criterion) {
    let p = p1();
    let x2 = endemic_equilibrium(&p).unwrap().unwrap().state;
    let grid = default_frequency_grid();
    c.bench_function("eigenvalues_endemic", |b| b.iter(|| eigenvalues(&jacobian_at(black_box(&x2), &p)).unwrap()));
    c.bench_function("hinf_sweep_1e4", |b| b.iter(|| hinf_ratio_sweep(black_box(&p), &grid).unwrap()));
}

fn bench_identities(c: &mut Criterion) {
    let p = p1();
    let traj = integrate(
        &SeirState::new(900.0, 50.0, 50.0, 0.0),
        &p,
        &ControlLaw::ImmuneFeedback { g: 0.0, g1: 0.03 },
        &IntegratorConfig::fixed(200.0, 1e-2),
    )
    .unwrap();
    c.bench_function("identity_suite_20k", |b| b.iter(|| check_identity_suite(black_box(&traj), &p).unwrap()));
}

criterion_group!(benches, bench_integrate, bench_equilibria, bench_identities);
criterion_main!(benches);
