//! Trajectory checks: conservation, positivity, the derivative identity
//! suite, asymptotic limits, decay rates and the convolution integral limit.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::controllers::{early_prevalence_bound, AsymptoticPrediction, ControlLaw};
use crate::error::{Error, Result};
use crate::integrator::{Trajectory, POSITIVITY_RTOL};
use crate::model::{ModelParams, CONSERVATION_RTOL};

/// Default fraction of samples averaged by [`check_asymptotics`].
pub const DEFAULT_TAIL_FRACTION: f64 = 0.1;
/// Horizon requirement `rate·(t_end − t0) ≥ HORIZON_FACTOR`.
pub const HORIZON_FACTOR: f64 = 10.0;
/// Per-sample identity tolerance is `IDENTITY_COEFF·N·ρ³·h²`.
pub const IDENTITY_COEFF: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub worst_residual: f64,
    pub tolerance: f64,
    /// Time of the worst residual.
    pub location: Option<f64>,
}

impl Check {
    fn from_worst(name: impl Into<String>, worst: f64, location: Option<f64>, tolerance: f64) -> Self {
        Self { name: name.into(), passed: worst <= tolerance, worst_residual: worst, tolerance, location }
    }
}

/// Tracks the largest residual and where it occurred.
#[derive(Default)]
struct Worst {
    value: f64,
    at: Option<f64>,
}

impl Worst {
    fn push(&mut self, r: f64, t: f64) {
        if self.at.is_none() || r > self.value || r.is_nan() {
            self.value = r;
            self.at = Some(t);
        }
    }
}

/// `max |S+E+I+R − N|` against `10⁻⁹·N`.
pub fn monitor_conservation(traj: &Trajectory) -> Check {
    let n = traj.params().n;
    let mut w = Worst::default();
    for s in traj.samples() {
        w.push((s.state.total() - n).abs(), s.t);
    }
    Check::from_worst("conservation", w.value, w.at, CONSERVATION_RTOL * n)
}

/// Admissible range for the recorded vaccination level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum VRange {
    Fixed { lo: f64, hi: f64 },
    /// `[0, 1 + (α − βI/N)·S/(μN)]` evaluated per sample.
    EarlyPrevalence { alpha: f64 },
}

/// Lower and upper population bounds at `ε = 10⁻⁹·N`, plus the V-range
/// check when a range is given.
pub fn monitor_positivity(traj: &Trajectory, v_range: Option<VRange>) -> Result<Vec<Check>> {
    let p = traj.params();
    let eps = POSITIVITY_RTOL * p.n;
    let mut lower = Worst::default();
    let mut upper = Worst::default();
    for s in traj.samples() {
        let a = s.state.to_array();
        let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lower.push((-lo).max(0.0), s.t);
        upper.push((hi - p.n).max(0.0), s.t);
    }
    let mut out = vec![
        Check::from_worst("positivity.lower", lower.value, lower.at, eps),
        Check::from_worst("positivity.upper", upper.value, upper.at, eps),
    ];
    if let Some(range) = v_range {
        let mut w = Worst::default();
        let mut tol: f64 = 0.0;
        for s in traj.samples() {
            let (lo, hi) = match range {
                VRange::Fixed { lo, hi } => (lo, hi),
                VRange::EarlyPrevalence { alpha } => (0.0, early_prevalence_bound(&s.state, p, alpha)?.bound),
            };
            let mag = [lo, hi].iter().filter(|b| b.is_finite()).fold(1.0f64, |m, b| m.max(b.abs()));
            tol = tol.max(4.0 * f64::EPSILON * mag);
            w.push((lo - s.v).max(s.v - hi).max(0.0), s.t);
        }
        out.push(Check::from_worst("positivity.v_range", w.value, w.at, tol));
    }
    Ok(out)
}

/// Rate scale used by the identity tolerance: the largest of the model
/// rates and the law gains.
pub fn rate_scale(params: &ModelParams, law: Option<&ControlLaw>) -> f64 {
    let p = params;
    let mut r = [p.mu, p.omega, p.beta, p.sigma, p.gamma].into_iter().fold(0.0, f64::max);
    if let Some(l) = law {
        for g in l.gains() {
            r = r.max(g.abs());
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub checks: Vec<Check>,
    pub spacing: f64,
    pub tolerance: f64,
    /// Stencils dropped because they straddle a saturation switch.
    pub skipped_stencils: usize,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

type Rhs = fn(&[f64; 4], f64, f64, &ModelParams) -> f64;

/// `(name, weights on (S,E,I,R), right-hand side from (state, V, u))`.
fn identities() -> Vec<(&'static str, [f64; 4], Rhs)> {
    vec![
        ("exposed_plus_infectious", [0.0, 1.0, 1.0, 0.0], |x, _, _, p| {
            -p.mu * (x[1] + x[2]) + (p.beta * x[0] / p.n - p.gamma) * x[2]
        }),
        ("susceptible_plus_exposed", [1.0, 1.0, 0.0, 0.0], |x, _, u, p| {
            -p.mu * (x[0] + x[1]) + p.mu * p.n + u
        }),
        ("susceptible_plus_exposed.complement", [1.0, 1.0, 0.0, 0.0], |x, _, u, p| p.mu * (x[2] + x[3]) + u),
        ("infectious_plus_removed", [0.0, 0.0, 1.0, 1.0], |x, _, u, p| -p.mu * (x[2] + x[3]) - u),
        ("infectious_plus_removed.antisymmetry", [1.0, 1.0, 1.0, 1.0], |_, _, _, _| 0.0),
        ("susceptible_plus_removed", [1.0, 0.0, 0.0, 1.0], |x, _, _, p| {
            -p.mu * (x[0] + x[3]) + (p.gamma - p.beta * x[0] / p.n) * x[2] + p.mu * p.n
        }),
        ("susceptible_plus_removed.complement", [1.0, 0.0, 0.0, 1.0], |x, _, _, p| {
            p.mu * (x[1] + x[2]) + (p.gamma - p.beta * x[0] / p.n) * x[2]
        }),
        ("susceptible_plus_removed.expanded", [1.0, 0.0, 0.0, 1.0], |x, _, _, p| {
            p.mu * x[1] + (p.mu + p.gamma - p.beta * x[0] / p.n) * x[2]
        }),
        ("susceptible_plus_removed.antisymmetry", [1.0, 1.0, 1.0, 1.0], |_, _, _, _| 0.0),
        ("non_removed", [1.0, 1.0, 1.0, 0.0], |x, v, _, p| {
            -p.mu * (x[0] + x[1] + x[2]) + p.omega * x[3] - p.gamma * x[2] + p.mu * p.n * (1.0 - v)
        }),
        ("non_removed.control_form", [1.0, 1.0, 1.0, 0.0], |x, _, u, p| {
            p.mu * x[3] + p.sigma * x[1] - p.gamma * x[2] + u
        }),
        ("removed", [0.0, 0.0, 0.0, 1.0], |x, v, _, p| {
            -(p.mu + p.omega) * x[3] + p.gamma * x[2] + p.mu * p.n * v
        }),
        ("removed.control_form", [0.0, 0.0, 0.0, 1.0], |x, _, u, p| {
            -p.mu * x[3] - p.sigma * x[1] + p.gamma * x[2] - u
        }),
        ("removed.antisymmetry", [1.0, 1.0, 1.0, 1.0], |_, _, _, _| 0.0),
    ]
}

/// Compares central-difference derivatives of compartment combinations
/// with their closed-form right-hand sides at every interior sample.
///
/// Uses a fourth-order five-point stencil (three-point when fewer than
/// five samples exist). Stencils that straddle a change of saturation
/// regime of the recorded law are skipped and counted.
pub fn check_identity_suite(traj: &Trajectory, params: &ModelParams) -> Result<IdentityReport> {
    let smp = traj.samples();
    if smp.len() < 3 {
        return Err(Error::BadTrajectory(format!("identity suite needs >= 3 samples, got {}", smp.len())));
    }
    let h = smp[1].t - smp[0].t;
    if let Some(k) = smp.windows(2).position(|w| ((w[1].t - w[0].t) - h).abs() > 1e-6 * h) {
        return Err(Error::BadTrajectory(format!("non-uniform sampling at sample {}", k + 1)));
    }
    let law = traj.meta.law.as_ref();
    let rho = rate_scale(params, law);
    let tol = IDENTITY_COEFF * params.n * rho.powi(3) * h * h;

    let regimes: Vec<Vec<i8>> = match law {
        Some(l) => smp.iter().map(|s| l.saturation_regimes(&s.state, params, s.t)).collect::<Result<_>>()?,
        None => vec![Vec::new(); smp.len()],
    };
    let half = if smp.len() >= 5 { 2 } else { 1 };
    let ids = identities();
    let mut worst: Vec<Worst> = ids.iter().map(|_| Worst::default()).collect();
    let mut skipped = 0;
    let xs: Vec<[f64; 4]> = smp.iter().map(|s| s.state.to_array()).collect();

    for k in half..smp.len() - half {
        let window = &regimes[k - half..=k + half];
        if window.iter().any(|r| *r != window[0]) {
            skipped += 1;
            continue;
        }
        let s = &smp[k];
        for ((_, w, rhs), acc) in ids.iter().zip(worst.iter_mut()) {
            let f = |j: usize| w[0] * xs[j][0] + w[1] * xs[j][1] + w[2] * xs[j][2] + w[3] * xs[j][3];
            let fd = if half == 2 {
                (f(k - 2) - 8.0 * f(k - 1) + 8.0 * f(k + 1) - f(k + 2)) / (12.0 * h)
            } else {
                (f(k + 1) - f(k - 1)) / (2.0 * h)
            };
            acc.push((fd - rhs(&xs[k], s.v, s.u, params)).abs(), s.t);
        }
    }
    let checks = ids
        .iter()
        .zip(worst)
        .map(|((name, _, _), w)| Check::from_worst(format!("identity.{name}"), w.value, w.at, tol))
        .collect();
    Ok(IdentityReport { checks, spacing: h, tolerance: tol, skipped_stencils: skipped })
}

/// Acceptance band for an asymptotic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Tolerance {
    /// Fraction of `|prediction|`; falls back to a fraction of N for
    /// population limits predicted as zero and of 1 for V.
    Relative(f64),
    Absolute(f64),
}

/// Mean of `f` over the final `tail_fraction` of samples (at least one).
pub fn tail_mean(traj: &Trajectory, tail_fraction: f64, f: impl Fn(&crate::integrator::Sample) -> f64) -> f64 {
    let smp = traj.samples();
    let k = ((smp.len() as f64 * tail_fraction).ceil() as usize).clamp(1, smp.len());
    let tail = &smp[smp.len() - k..];
    tail.iter().map(f).sum::<f64>() / k as f64
}

/// Compares tail means against every limit present in `prediction`.
pub fn check_asymptotics(
    traj: &Trajectory,
    prediction: &AsymptoticPrediction,
    tail_fraction: f64,
    tol: Tolerance,
) -> Result<Vec<Check>> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("tail fraction must lie in (0, 1), got {tail_fraction}")));
    }
    let (t0, t1) = (traj.first().t, traj.last().t);
    if let Some(rate) = prediction.decay_rate {
        if rate > 0.0 && rate * (t1 - t0) < HORIZON_FACTOR {
            return Err(Error::HorizonTooShort { required_t_end: t0 + HORIZON_FACTOR / rate });
        }
    }
    let n = traj.params().n;
    type Get = fn(&crate::integrator::Sample) -> f64;
    let quantities: [(&str, Option<f64>, Get, f64); 8] = [
        ("limit.S", prediction.s_inf, |s| s.state.s, n),
        ("limit.E", prediction.e_inf, |s| s.state.e, n),
        ("limit.I", prediction.i_inf, |s| s.state.i, n),
        ("limit.R", prediction.r_inf, |s| s.state.r, n),
        ("limit.S+E", prediction.s_plus_e_inf, |s| s.state.s + s.state.e, n),
        ("limit.I+R", prediction.i_plus_r_inf, |s| s.state.i + s.state.r, n),
        ("limit.S+E+I", prediction.s_plus_e_plus_i_inf, |s| s.state.s + s.state.e + s.state.i, n),
        ("limit.V", prediction.v_inf, |s| s.v, 1.0),
    ];
    let mut out = Vec::new();
    for (name, pred, get, fallback) in quantities {
        let Some(target) = pred else { continue };
        let mean = tail_mean(traj, tail_fraction, get);
        let band = match tol {
            Tolerance::Absolute(a) => a,
            Tolerance::Relative(r) if target != 0.0 => r * target.abs(),
            Tolerance::Relative(r) => r * fallback,
        };
        out.push(Check::from_worst(name, (mean - target).abs(), Some(t1), band));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    /// 95 % confidence interval on the rate (`None` with fewer than 3 points).
    pub ci: Option<(f64, f64)>,
    pub points: usize,
}

/// Least-squares slope of `ln(value)` against `t`; the rate is `−slope`.
pub fn estimate_decay_rate(t: &[f64], values: &[f64]) -> Result<DecayFit> {
    if t.len() != values.len() {
        return Err(Error::BadSeries(format!("length mismatch {} vs {}", t.len(), values.len())));
    }
    if t.len() < 2 {
        return Err(Error::BadSeries("need at least two points".into()));
    }
    if let Some(k) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::BadSeries(format!("nonpositive value {} at t = {}", values[k], t[k])));
    }
    let n = t.len() as f64;
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::BadSeries("all times equal".into()));
    }
    let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let icpt = ym - slope * tm;
    let ss_res: f64 = t.iter().zip(&y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - ym).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    let ci = if t.len() >= 3 {
        let dof = n - 2.0;
        let se = (ss_res / dof / sxx).sqrt();
        let q = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::BadSeries(e.to_string()))?.inverse_cdf(0.975);
        Some((-slope - q * se, -slope + q * se))
    } else {
        None
    };
    Ok(DecayFit { rate: -slope, r_squared, ci, points: t.len() })
}

/// Decay rate of a per-sample signal over samples with `t ∈ [from, to]`.
pub fn decay_rate_of(
    traj: &Trajectory,
    from: f64,
    to: f64,
    f: impl Fn(&crate::integrator::Sample) -> f64,
) -> Result<DecayFit> {
    let (t, v): (Vec<f64>, Vec<f64>) =
        traj.samples().iter().filter(|s| s.t >= from && s.t <= to).map(|s| (s.t, f(s))).unzip();
    estimate_decay_rate(&t, &v)
}

/// `g₁(ω+g)/(μ(μ+ω+g))·N`, the limit of `∫₀ᵗ e^{−μ(t−τ)}(ω+g)R(τ)dτ`.
pub fn integral_limit_value(params: &ModelParams, g: f64, g1: f64) -> Result<f64> {
    let p = params;
    if p.omega + g == 0.0 {
        return Ok(0.0);
    }
    let rate = p.mu + p.omega + g;
    if !(p.mu > 0.0 && rate > 0.0) {
        return Err(Error::Undefined("integral limit needs mu > 0 and mu+omega+g > 0"));
    }
    Ok(g1 * (p.omega + g) / (p.mu * rate) * p.n)
}

/// Trapezoid value of `∫ e^{−μ(t_end−τ)}(ω+g)R(τ)dτ` at `t_end`.
pub fn convolution_integral(traj: &Trajectory, params: &ModelParams, g: f64) -> f64 {
    let smp = traj.samples();
    let t_end = traj.last().t;
    let w = params.omega + g;
    let f = |s: &crate::integrator::Sample| (-params.mu * (t_end - s.t)).exp() * w * s.state.r;
    smp.windows(2).map(|p| 0.5 * (p[1].t - p[0].t) * (f(&p[0]) + f(&p[1]))).sum()
}

/// Compares the convolution integral at `t_end` with its limit within
/// relative `tol` (absolute `tol·N` when the limit is zero).
pub fn check_integral_limit(traj: &Trajectory, params: &ModelParams, g: f64, g1: f64, tol: f64) -> Result<Check> {
    let t0 = traj.first().t;
    let slow = params.mu.min(params.mu + params.omega + g);
    if !(slow > 0.0) {
        return Err(Error::Undefined("integral limit needs mu > 0 and mu+omega+g > 0"));
    }
    let required = t0 + HORIZON_FACTOR / slow;
    if traj.last().t < required {
        return Err(Error::HorizonTooShort { required_t_end: required });
    }
    let limit = integral_limit_value(params, g, g1)?;
    let value = convolution_integral(traj, params, g);
    let band = if limit == 0.0 { tol * params.n } else { tol * limit.abs() };
    Ok(Check::from_worst("integral_limit", (value - limit).abs(), Some(traj.last().t), band))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub rates: Vec<(String, DecayFit)>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, cs: impl IntoIterator<Item = Check>) {
        self.checks.extend(cs);
    }
}
