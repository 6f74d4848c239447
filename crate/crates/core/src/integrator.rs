//! Deterministic closed-loop integration: classic fixed-step RK4 by default,
//! with an embedded Dormand–Prince 5(4) pair for adaptive runs.

use serde::{Deserialize, Serialize};

use crate::controllers::{evaluate, ControlLaw};
use crate::error::{Error, Result};
use crate::model::{coupling_control, derivative_unchecked, ModelParams, SeirState};

/// Absolute positivity slack as a fraction of N.
pub const POSITIVITY_RTOL: f64 = 1e-9;

/// Relative mismatch allowed between the initial total and N.
pub const INITIAL_SUM_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityPolicy {
    /// Record negative components, never alter the state.
    #[default]
    Report,
    /// Clamp negative components to zero after each step and log it.
    Project,
}

/// How the law is sampled inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlUpdate {
    /// Re-evaluate the law at every stage (continuous state feedback).
    #[default]
    PerStage,
    /// Evaluate once at the start of each step and hold it.
    ZeroOrderHold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveTolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub t0: f64,
    pub t_end: f64,
    /// Fixed step, or the initial step when adaptive.
    pub dt: f64,
    pub sampling_stride: usize,
    pub positivity_policy: PositivityPolicy,
    pub control_update: ControlUpdate,
    pub adaptive: Option<AdaptiveTolerances>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_end: 100.0,
            dt: 1e-2,
            sampling_stride: 1,
            positivity_policy: PositivityPolicy::Report,
            control_update: ControlUpdate::PerStage,
            adaptive: None,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed(t_end: f64, dt: f64) -> Self {
        Self { t_end, dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t_end > self.t0) {
            return Err(Error::InvalidConfig(format!("need t_end > t0, got [{}, {}]", self.t0, self.t_end)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.sampling_stride == 0 {
            return Err(Error::InvalidConfig("sampling_stride must be >= 1".into()));
        }
        if let Some(a) = self.adaptive {
            if !(a.rel_tol > 0.0 && a.abs_tol > 0.0) {
                return Err(Error::InvalidConfig("adaptive tolerances must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One recorded point: state, the vaccination level the law commands there
/// and the matching auxiliary control `u = ωR − σE − μNV`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: SeirState,
    pub v: f64,
    pub u: f64,
}

impl Sample {
    pub fn new(t: f64, state: SeirState, v: f64, params: &ModelParams) -> Self {
        Self { t, state, v, u: coupling_control(&state, params, v) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compartment {
    S,
    E,
    I,
    R,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [Compartment::S, Compartment::E, Compartment::I, Compartment::R];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositivityEvent {
    pub t: f64,
    pub component: Compartment,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub params: ModelParams,
    pub law_name: String,
    pub law: Option<ControlLaw>,
    pub config: Option<IntegratorConfig>,
    /// Negative components seen after accepted steps (pre-clamp values in
    /// project mode).
    pub violations: Vec<PositivityEvent>,
}

/// Time-ordered samples with strictly increasing `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<Sample>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    /// Builds a trajectory from stored samples (e.g. read back from disk).
    pub fn from_samples(samples: Vec<Sample>, meta: TrajectoryMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::BadTrajectory("no samples".into()));
        }
        if let Some(k) = samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
            return Err(Error::BadTrajectory(format!("time not strictly increasing at sample {}", k + 1)));
        }
        Ok(Self { samples, meta })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("non-empty")
    }

    pub fn params(&self) -> &ModelParams {
        &self.meta.params
    }
}

fn scan_negative(t: f64, x: &SeirState, eps: f64, out: &mut Vec<PositivityEvent>) {
    for (c, v) in Compartment::ALL.iter().zip(x.to_array()) {
        if v < -eps {
            out.push(PositivityEvent { t, component: *c, value: v });
        }
    }
}

/// Every sample where some component is below `−10⁻⁹·N`.
pub fn positivity_events(traj: &Trajectory) -> Vec<PositivityEvent> {
    let eps = POSITIVITY_RTOL * traj.meta.params.n;
    let mut out = Vec::new();
    for s in traj.samples() {
        scan_negative(s.t, &s.state, eps, &mut out);
    }
    out
}

#[inline]
fn axpy(x: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    [x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2], x[3] + h * k[3]]
}

/// One classic RK4 step of `ẋ = f(t, x)` on a 4-vector.
pub fn rk4_step<F>(t: f64, x: &[f64; 4], h: f64, f: &mut F) -> Result<[f64; 4]>
where
    F: FnMut(f64, &[f64; 4]) -> Result<[f64; 4]>,
{
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(x, h, &k3))?;
    let mut out = *x;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step; returns the 5th-order solution and the
/// embedded error estimate.
pub fn dopri5_step<F>(t: f64, x: &[f64; 4], h: f64, f: &mut F) -> Result<([f64; 4], [f64; 4])>
where
    F: FnMut(f64, &[f64; 4]) -> Result<[f64; 4]>,
{
    let mut k = [[0.0; 4]; 7];
    for s in 0..7 {
        let mut xs = *x;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = DP_A[s][j];
            if a != 0.0 {
                for i in 0..4 {
                    xs[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(t + DP_C[s] * h, &xs)?;
    }
    let mut hi = *x;
    let mut err = [0.0; 4];
    for i in 0..4 {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += DP_B5[s] * k[s][i];
            d4 += DP_B4[s] * k[s][i];
        }
        hi[i] += h * d5;
        err[i] = h * (d5 - d4);
    }
    Ok((hi, err))
}

/// Number of fixed steps covering `[t0, t_end]`; the last one may be partial.
pub fn fixed_step_count(t0: f64, t_end: f64, dt: f64) -> usize {
    let span = t_end - t0;
    let full = (span / dt * (1.0 + 1e-12)).floor() as usize;
    let remainder = span - full as f64 * dt;
    if remainder > 1e-9 * dt {
        full + 1
    } else {
        full.max(1)
    }
}

/// Grid time after step `k`: `t0 + k·dt`, pinned to `t_end` on the last step.
pub fn fixed_step_time(t0: f64, t_end: f64, dt: f64, k: usize, n_steps: usize) -> f64 {
    if k == n_steps {
        t_end
    } else {
        t0 + k as f64 * dt
    }
}

struct Stepper<'a> {
    params: &'a ModelParams,
    law: &'a ControlLaw,
    update: ControlUpdate,
}

impl Stepper<'_> {
    fn rhs(&self, held: f64) -> impl FnMut(f64, &[f64; 4]) -> Result<[f64; 4]> + '_ {
        move |t, x| {
            let state = SeirState::from_array(*x);
            let v = match self.update {
                ControlUpdate::PerStage => evaluate(self.law, &state, self.params, t)?,
                ControlUpdate::ZeroOrderHold => held,
            };
            Ok(derivative_unchecked(&state, self.params, v).to_array())
        }
    }
}

/// Integrates the model closed under `law` from `state0`.
///
/// The initial total must match `params.n` to within 10⁻⁶ relative.
/// Negative initial components are allowed and surface as positivity events.
pub fn integrate(
    state0: &SeirState,
    params: &ModelParams,
    law: &ControlLaw,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    params.validate()?;
    config.validate()?;
    law.check_bind(params)?;
    if !state0.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let sum = state0.total();
    if (sum - params.n).abs() > INITIAL_SUM_RTOL * params.n {
        return Err(Error::NotConserved { sum, n: params.n });
    }

    let eps = POSITIVITY_RTOL * params.n;
    let stepper = Stepper { params, law, update: config.control_update };
    let mut violations = Vec::new();
    let mut samples = Vec::new();

    let t0 = config.t0;
    let v0 = evaluate(law, state0, params, t0)?;
    samples.push(Sample::new(t0, *state0, v0, params));
    scan_negative(t0, state0, eps, &mut violations);

    let mut x = state0.to_array();
    let mut t = t0;
    let mut step = 0usize;

    let mut accept = |t: f64, mut xn: [f64; 4], step: usize, last: bool, samples: &mut Vec<Sample>| -> Result<[f64; 4]> {
        if xn.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step, t });
        }
        let st = SeirState::from_array(xn);
        scan_negative(t, &st, eps, &mut violations);
        if config.positivity_policy == PositivityPolicy::Project {
            for c in xn.iter_mut() {
                if *c < 0.0 {
                    *c = 0.0;
                }
            }
        }
        if last || step.is_multiple_of(config.sampling_stride) {
            let st = SeirState::from_array(xn);
            let v = evaluate(law, &st, params, t)?;
            samples.push(Sample::new(t, st, v, params));
        }
        Ok(xn)
    };

    match config.adaptive {
        None => {
            let n_steps = fixed_step_count(t0, config.t_end, config.dt);
            for k in 1..=n_steps {
                let t_next = fixed_step_time(t0, config.t_end, config.dt, k, n_steps);
                let h = t_next - t;
                let held = evaluate(law, &SeirState::from_array(x), params, t)?;
                let xn = rk4_step(t, &x, h, &mut stepper.rhs(held))?;
                step = k;
                x = accept(t_next, xn, step, k == n_steps, &mut samples)?;
                t = t_next;
            }
        }
        Some(tol) => {
            let mut h = config.dt.min(config.t_end - t0);
            let h_min = 1e-12 * (config.t_end - t0);
            while t < config.t_end {
                let last = t + h >= config.t_end;
                let h_try = if last { config.t_end - t } else { h };
                let held = evaluate(law, &SeirState::from_array(x), params, t)?;
                let (xn, err) = dopri5_step(t, &x, h_try, &mut stepper.rhs(held))?;
                let mut norm: f64 = 0.0;
                for i in 0..4 {
                    let scale = tol.abs_tol + tol.rel_tol * x[i].abs().max(xn[i].abs());
                    norm = norm.max((err[i] / scale).abs());
                }
                if !norm.is_finite() {
                    return Err(Error::Diverged { step, t });
                }
                if norm <= 1.0 {
                    step += 1;
                    let t_next = if last { config.t_end } else { t + h_try };
                    x = accept(t_next, xn, step, last, &mut samples)?;
                    t = t_next;
                }
                let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                h = h_try * factor;
                if h < h_min && t < config.t_end {
                    return Err(Error::StepUnderflow { t });
                }
            }
        }
    }

    Trajectory::from_samples(
        samples,
        TrajectoryMeta {
            params: *params,
            law_name: law.label(),
            law: Some(law.clone()),
            config: Some(*config),
            violations,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1() -> ModelParams {
        ModelParams::new(1000.0, 0.01, 0.02, 0.9, 0.2, 0.2).unwrap()
    }

    #[test]
    fn disease_free_start_stays_put() {
        let p = p1();
        let x0 = SeirState::disease_free(p.n);
        let traj = integrate(&x0, &p, &ControlLaw::ZeroVax, &IntegratorConfig::fixed(50.0, 0.1)).unwrap();
        assert!(traj.samples().iter().all(|s| s.state == x0));
        assert_eq!(traj.first().t, 0.0);
        assert_eq!(traj.last().t, 50.0);
        assert_eq!(traj.len(), 501);
    }

    #[test]
    fn susceptible_linear_follows_exponential() {
        let p = p1();
        let x0 = SeirState::new(500.0, 100.0, 100.0, 300.0);
        let law = ControlLaw::SusceptibleLinear { g: 0.1 };
        let traj = integrate(&x0, &p, &law, &IntegratorConfig::fixed(10.0, 1e-3)).unwrap();
        let exact = 500.0 * (-1.1f64).exp();
        assert!((exact - 166.44).abs() < 5e-3);
        let s = traj.last().state.s;
        assert!((s - exact).abs() / exact < 1e-3, "{s} vs {exact}");
    }

    #[test]
    fn immune_feedback_tracks_scalar_solution() {
        let p = p1();
        let x0 = SeirState::new(900.0, 50.0, 50.0, 0.0);
        let law = ControlLaw::ImmuneFeedback { g: 0.0, g1: p.mu + p.omega };
        let traj = integrate(&x0, &p, &law, &IntegratorConfig::fixed(100.0, 1e-2)).unwrap();
        let exact = 1000.0 * (1.0 - (-3.0f64).exp());
        assert!((exact - 950.21).abs() < 5e-3);
        let r = traj.last().state.r;
        assert!((r - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn rk4_order_on_closed_form() {
        let p = p1();
        let x0 = SeirState::new(500.0, 100.0, 100.0, 300.0);
        let law = ControlLaw::SusceptibleLinear { g: 0.1 };
        let exact = 500.0 * (-1.1f64).exp();
        let err = |dt: f64| {
            let traj = integrate(&x0, &p, &law, &IntegratorConfig::fixed(10.0, dt)).unwrap();
            (traj.last().state.s - exact).abs()
        };
        let ratio = err(0.4) / err(0.2);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_order_hold_is_first_order() {
        let p = p1();
        let x0 = SeirState::new(500.0, 100.0, 100.0, 300.0);
        let law = ControlLaw::SusceptibleLinear { g: 0.1 };
        let exact = 500.0 * (-1.1f64).exp();
        let err = |dt: f64| {
            let cfg = IntegratorConfig { control_update: ControlUpdate::ZeroOrderHold, ..IntegratorConfig::fixed(10.0, dt) };
            let traj = integrate(&x0, &p, &law, &cfg).unwrap();
            (traj.last().state.s - exact).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn deterministic_and_u_consistent() {
        let p = p1();
        let x0 = SeirState::new(700.0, 100.0, 50.0, 150.0);
        let law = ControlLaw::saturated(ControlLaw::ImmuneFeedback { g: 0.05, g1: 0.08 }, 0.0, 1.0).unwrap();
        let cfg = IntegratorConfig { sampling_stride: 7, ..IntegratorConfig::fixed(30.0, 0.01) };
        let a = integrate(&x0, &p, &law, &cfg).unwrap();
        let b = integrate(&x0, &p, &law, &cfg).unwrap();
        assert_eq!(a, b);
        for s in a.samples() {
            assert_eq!(s.u.to_bits(), coupling_control(&s.state, &p, s.v).to_bits());
        }
        assert!(a.samples().windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(a.last().t, 30.0);
    }

    #[test]
    fn negative_start_is_reported_at_t0() {
        let p = p1();
        let x0 = SeirState::new(-1.0, 1.0, 0.0, 1000.0);
        let traj = integrate(&x0, &p, &ControlLaw::ZeroVax, &IntegratorConfig::fixed(1.0, 0.1)).unwrap();
        let ev = positivity_events(&traj);
        assert_eq!(ev[0].t, 0.0);
        assert_eq!(ev[0].component, Compartment::S);
    }

    #[test]
    fn negative_vaccination_drives_r_negative_after_one_step() {
        let p = p1();
        let cfg = IntegratorConfig::fixed(1.0, 0.01);
        let traj = integrate(&SeirState::disease_free(p.n), &p, &ControlLaw::ConstantVax { v: -5.0 }, &cfg).unwrap();
        let ev = positivity_events(&traj);
        assert!(!ev.is_empty());
        assert!((ev[0].t - 0.01).abs() < 1e-12);
        assert_eq!(ev[0].component, Compartment::R);
    }

    #[test]
    fn project_policy_clamps_and_logs() {
        let p = p1();
        let cfg = IntegratorConfig { positivity_policy: PositivityPolicy::Project, ..IntegratorConfig::fixed(1.0, 0.01) };
        let traj = integrate(&SeirState::disease_free(p.n), &p, &ControlLaw::ConstantVax { v: -5.0 }, &cfg).unwrap();
        assert!(positivity_events(&traj).is_empty());
        assert!(!traj.meta.violations.is_empty());
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let p = p1();
        let x0 = SeirState::new(500.0, 100.0, 100.0, 300.0);
        let law = ControlLaw::SusceptibleLinear { g: 0.1 };
        let cfg = IntegratorConfig {
            adaptive: Some(AdaptiveTolerances { rel_tol: 1e-10, abs_tol: 1e-10 }),
            ..IntegratorConfig::fixed(10.0, 0.1)
        };
        let traj = integrate(&x0, &p, &law, &cfg).unwrap();
        let exact = 500.0 * (-1.1f64).exp();
        assert!((traj.last().state.s - exact).abs() / exact < 1e-7);
        assert_eq!(traj.last().t, 10.0);
        assert!(traj.len() < 2000);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = p1();
        let law = ControlLaw::ZeroVax;
        let x0 = SeirState::disease_free(p.n);
        assert!(matches!(integrate(&x0, &p, &law, &IntegratorConfig::fixed(0.0, 0.1)), Err(Error::InvalidConfig(_))));
        assert!(matches!(integrate(&x0, &p, &law, &IntegratorConfig::fixed(1.0, 0.0)), Err(Error::InvalidConfig(_))));
        let off = SeirState::new(900.0, 0.0, 0.0, 0.0);
        assert!(matches!(integrate(&off, &p, &law, &IntegratorConfig::fixed(1.0, 0.1)), Err(Error::NotConserved { .. })));
        let mu0 = ModelParams { mu: 0.0, ..p };
        let fb = ControlLaw::ImmuneFeedback { g: 0.0, g1: 0.03 };
        assert_eq!(integrate(&x0, &mu0, &fb, &IntegratorConfig::fixed(1.0, 0.1)), Err(Error::ZeroChannelGain));
    }

    #[test]
    fn divergence_reports_step() {
        let p = ModelParams::new(1000.0, 0.01, 0.02, 0.9, 0.2, 0.2).unwrap();
        let cfg = IntegratorConfig::fixed(10.0, 1.0);
        let x0 = SeirState::new(500.0, 0.0, 0.0, 500.0);
        let res = integrate(&x0, &p, &ControlLaw::ConstantVax { v: f64::MAX }, &cfg);
        assert!(matches!(res, Err(Error::Diverged { step: 1, .. })), "{res:?}");
    }

    #[test]
    fn partial_last_step_lands_on_t_end() {
        let p = p1();
        let traj = integrate(&SeirState::new(990.0, 10.0, 0.0, 0.0), &p, &ControlLaw::ZeroVax, &IntegratorConfig::fixed(1.05, 0.1)).unwrap();
        assert_eq!(traj.len(), 12);
        assert_eq!(traj.last().t, 1.05);
    }
}
