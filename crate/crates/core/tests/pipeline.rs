//! End-to-end runs through the public API: integrate, transform, verify.

use proptest::prelude::*;

use seirvax_core::controllers::{evaluate, predicted_limits, ControlLaw};
use seirvax_core::equilibria::{analyze, equilibrium_residual};
use seirvax_core::fblin::{synthesize_linearizing_law, to_normal};
use seirvax_core::integrator::{integrate, IntegratorConfig};
use seirvax_core::model::{ModelParams, SeirState};
use seirvax_core::verify::{check_asymptotics, check_identity_suite, monitor_conservation, monitor_positivity, Tolerance, VRange};

fn base() -> ModelParams {
    ModelParams::new(1000.0, 0.01, 0.02, 0.9, 0.2, 0.2).unwrap()
}

#[test]
fn uncontrolled_run_settles_at_endemic_point() {
    let p = base();
    let a = analyze(&p).unwrap();
    let x2 = a.endemic.as_ref().unwrap().point.state;
    let traj = integrate(&SeirState::new(990.0, 5.0, 5.0, 0.0), &p, &ControlLaw::ZeroVax, &IntegratorConfig::fixed(3000.0, 0.05)).unwrap();
    let end = traj.last().state;
    for (v, w) in end.to_array().iter().zip(x2.to_array()) {
        assert!((v - w).abs() < 1e-3 * p.n, "{end:?} vs {x2:?}");
    }
    assert!(equilibrium_residual(&end, &p) < 1e-3);
    assert!(monitor_conservation(&traj).passed);
}

#[test]
fn linearizing_law_tracks_its_closed_form_output() {
    let p = base();
    let (g_prime, g1) = (0.05, 0.04);
    let law = synthesize_linearizing_law(g_prime, g1, &p);
    let x0 = SeirState::new(600.0, 100.0, 100.0, 200.0);
    let traj = integrate(&x0, &p, &law, &IntegratorConfig::fixed(400.0, 0.01)).unwrap();
    let z1_inf = g1 * p.n / g_prime;
    for s in traj.samples().iter().step_by(500) {
        let exact = z1_inf + (to_normal(&x0).z1 - z1_inf) * (-g_prime * s.t).exp();
        assert!((to_normal(&s.state).z1 - exact).abs() < 1e-6 * p.n);
    }
    let pred = predicted_limits(&law, &p).unwrap();
    let checks = check_asymptotics(&traj, &pred, 0.05, Tolerance::Relative(1e-3)).unwrap();
    assert!(checks.iter().all(|c| c.passed), "{checks:?}");
}

#[test]
fn saturated_run_passes_every_monitor() {
    let p = base();
    let law = ControlLaw::saturated(ControlLaw::ImmuneFeedback { g: 0.17, g1: 0.2 }, 0.0, 1.0).unwrap();
    let traj = integrate(&SeirState::new(900.0, 50.0, 50.0, 0.0), &p, &law, &IntegratorConfig::fixed(200.0, 0.01)).unwrap();
    assert!(traj.meta.violations.is_empty());
    let pos = monitor_positivity(&traj, Some(VRange::Fixed { lo: 0.0, hi: 1.0 })).unwrap();
    assert!(pos.iter().all(|c| c.passed), "{pos:?}");
    assert!(check_identity_suite(&traj, &p).unwrap().passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn saturation_keeps_commanded_v_in_range(
        w in prop::array::uniform4(0.0f64..1.0),
        g in 0.0f64..0.5,
    ) {
        let p = base();
        let total: f64 = w.iter().sum::<f64>() + 1e-9;
        let x = SeirState::from_array(w.map(|c| c / total * p.n));
        let law = ControlLaw::saturated(ControlLaw::SusceptibleLinear { g }, 0.0, 1.0).unwrap();
        let v = evaluate(&law, &x, &p, 0.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
