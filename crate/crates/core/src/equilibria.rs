//! Vaccination-free equilibria, their linearization and spectra, and the
//! frequency-sweep sufficient condition for stability of the endemic point.

use nalgebra::{Complex, Matrix4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derivative_unchecked, ModelParams, SeirState};

/// Residual tolerance as a fraction of `μN` (or `N` when `μ = 0`).
pub const RESIDUAL_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    DiseaseFree,
    Endemic,
    MuZeroSpecial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub state: SeirState,
    pub kind: EquilibriumKind,
    /// Max absolute component of the `V = 0` vector field at `state`.
    pub residual: f64,
}

/// Scale that residuals are measured against.
pub fn residual_scale(params: &ModelParams) -> f64 {
    if params.mu > 0.0 {
        params.mu * params.n
    } else {
        params.n
    }
}

pub fn equilibrium_residual(x: &SeirState, params: &ModelParams) -> f64 {
    derivative_unchecked(x, params, 0.0).to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl EquilibriumPoint {
    fn at(state: SeirState, kind: EquilibriumKind, params: &ModelParams) -> Self {
        Self { state, kind, residual: equilibrium_residual(&state, params) }
    }

    pub fn residual_ok(&self, params: &ModelParams) -> bool {
        self.residual <= RESIDUAL_RTOL * residual_scale(params)
    }
}

pub fn disease_free_equilibrium(params: &ModelParams) -> EquilibriumPoint {
    EquilibriumPoint::at(SeirState::disease_free(params.n), EquilibriumKind::DiseaseFree, params)
}

/// `(μ+σ)²/(σβ)`; the endemic point exists iff this is below one.
pub fn endemic_ratio(params: &ModelParams) -> f64 {
    let k = params.mu + params.sigma;
    k * k / (params.sigma * params.beta)
}

fn require_sigma_gamma(params: &ModelParams) -> Result<()> {
    if params.sigma != params.gamma {
        return Err(Error::SigmaGammaMismatch { sigma: params.sigma, gamma: params.gamma });
    }
    Ok(())
}

/// Closed-form interior point for `σ = γ`, evaluated regardless of existence.
pub fn endemic_formula(params: &ModelParams) -> Result<SeirState> {
    params.validate()?;
    require_sigma_gamma(params)?;
    let (n, mu, om, b, s) = (params.n, params.mu, params.omega, params.beta, params.sigma);
    if s == 0.0 {
        return Err(Error::Undefined("endemic equilibrium with sigma = 0"));
    }
    if b == 0.0 {
        return Err(Error::Undefined("endemic equilibrium with beta = 0"));
    }
    let k2 = (mu + s) * (mu + s);
    let d = k2 + om * (mu + 2.0 * s);
    let q = s * b - k2;
    Ok(SeirState::new(
        k2 / (s * b) * n,
        (mu + om) * (mu + s) * q / (s * b * d) * n,
        (mu + om) * q / (b * d) * n,
        s * q / (b * d) * n,
    ))
}

/// The interior equilibrium when it exists (`σ = γ` required).
///
/// With `μ = 0` the same closed form yields the special branch
/// `(σN/β, (β−σ)ωN/(β(2ω+σ)), (β−σ)ωN/(β(2ω+σ)), (β−σ)σN/(β(2ω+σ)))`.
pub fn endemic_equilibrium(params: &ModelParams) -> Result<Option<EquilibriumPoint>> {
    params.validate()?;
    require_sigma_gamma(params)?;
    if params.sigma == 0.0 {
        return Err(Error::Undefined("endemic equilibrium with sigma = 0"));
    }
    if params.beta == 0.0 || !(endemic_ratio(params) < 1.0) {
        return Ok(None);
    }
    let x = endemic_formula(params)?;
    let kind = if params.mu == 0.0 { EquilibriumKind::MuZeroSpecial } else { EquilibriumKind::Endemic };
    Ok(Some(EquilibriumPoint::at(x, kind, params)))
}

/// Feasibility flag for the endemic point, evaluated as
/// `(σβ−(μ+σ)²)/(β((μ+σ)²+ω(μ+2σ)))·max(σ, (1+μ/σ)(μ+ω)) ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    pub value: f64,
    pub holds: bool,
}

pub fn endemic_feasibility(params: &ModelParams) -> Result<Feasibility> {
    require_sigma_gamma(params)?;
    let (mu, om, b, s) = (params.mu, params.omega, params.beta, params.sigma);
    if s == 0.0 || b == 0.0 {
        return Err(Error::Undefined("feasibility with sigma = 0 or beta = 0"));
    }
    let k2 = (mu + s) * (mu + s);
    let value = (s * b - k2) / (b * (k2 + om * (mu + 2.0 * s))) * s.max((1.0 + mu / s) * (mu + om));
    Ok(Feasibility { value, holds: value <= 1.0 })
}

/// Jacobian of the `V = 0` vector field at `x`.
///
/// The I and R rows carry γ; every column sums to `−μ`.
pub fn jacobian_at(x: &SeirState, params: &ModelParams) -> Matrix4<f64> {
    let p = params;
    let a = p.beta * x.i / p.n;
    let c = p.beta * x.s / p.n;
    Matrix4::new(
        -p.mu - a, 0.0, -c, p.omega, //
        a, -(p.mu + p.sigma), c, 0.0, //
        0.0, p.sigma, -(p.mu + p.gamma), 0.0, //
        0.0, 0.0, p.gamma, -(p.mu + p.omega),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormZeros {
    /// `−μ, −(μ+ω), −(μ+σ)+√(σβ), −(μ+σ)−√(σβ)`.
    pub zeros: [f64; 4],
    /// `μ > 0`, `ω > −μ` and `0 ≤ β < (μ+σ)²/σ`.
    pub stable: bool,
}

/// Characteristic zeros at the disease-free point (valid for `σ = γ`).
pub fn char_zeros_x1(params: &ModelParams) -> ClosedFormZeros {
    let p = params;
    let k = p.mu + p.sigma;
    let r = (p.sigma * p.beta).sqrt();
    let beta_ok = if p.sigma == 0.0 { p.beta >= 0.0 } else { p.beta >= 0.0 && p.beta < k * k / p.sigma };
    ClosedFormZeros {
        zeros: [-p.mu, -(p.mu + p.omega), -k + r, -k - r],
        stable: p.mu > 0.0 && p.omega > -p.mu && beta_ok,
    }
}

fn cmp_desc(a: &Complex<f64>, b: &Complex<f64>) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

/// Spectrum of a 4×4 real matrix, sorted by real part descending.
pub fn eigenvalues(m: &Matrix4<f64>) -> Result<[Complex<f64>; 4]> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entries"));
    }
    let ev = m.complex_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(cmp_desc);
    Ok(out)
}

/// Smallest max-distance over all pairings of two 4-element spectra.
pub fn spectrum_distance(a: &[Complex<f64>; 4], b: &[Complex<f64>; 4]) -> f64 {
    let mut best = f64::INFINITY;
    let mut idx = [0usize, 1, 2, 3];
    permute(&mut idx, 0, &mut |perm| {
        let d = (0..4).map(|k| (a[k] - b[perm[k]]).norm()).fold(0.0, f64::max);
        best = best.min(d);
    });
    best
}

fn permute(idx: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
    if k == idx.len() {
        f(idx);
        return;
    }
    for j in k..idx.len() {
        idx.swap(k, j);
        permute(idx, k + 1, f);
        idx.swap(k, j);
    }
}

/// `10⁴` log-spaced frequencies on `[10⁻⁶, 10⁶]` rad/day.
pub fn default_frequency_grid() -> Vec<f64> {
    log_grid(1e-6, 1e6, 10_000)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
}

/// `|p̃(iw)/p₀(iw)|` around the endemic point `x`.
pub fn hinf_ratio_at(w: f64, x: &SeirState, params: &ModelParams) -> f64 {
    let p = params;
    let s = Complex::new(0.0, w);
    let (mu, om, sg) = (p.mu, p.omega, p.sigma);
    let k = s + mu + sg;
    let m = s + mu + om;
    let p0 = (s + mu) * k * k * m;
    let pt = (k * k * m - om * sg * sg) * (x.i / p.n) - (s + mu) * m * (sg * x.s / p.n);
    (pt / p0).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HinfSweep {
    pub max_ratio: f64,
    pub argmax: f64,
    /// `1/β`.
    pub threshold: f64,
    pub condition_holds: bool,
}

/// Peak of `|p̃/p₀|` on the imaginary axis: the grid plus `w = 0`, refined by
/// golden-section search between the neighbours of the best grid point.
pub fn hinf_ratio_sweep(params: &ModelParams, grid: &[f64]) -> Result<HinfSweep> {
    if grid.is_empty() {
        return Err(Error::SweepRefused("empty frequency grid"));
    }
    if grid.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::SweepRefused("frequencies must be finite and nonnegative"));
    }
    if !(params.mu > 0.0) {
        return Err(Error::SweepRefused("p0 has a root on the imaginary axis (mu = 0)"));
    }
    let point = endemic_equilibrium(params)?.ok_or(Error::SweepRefused("no endemic equilibrium"))?;
    let x = point.state;
    let f = |w: f64| hinf_ratio_at(w, &x, params);

    let mut ws: Vec<f64> = grid.to_vec();
    ws.push(0.0);
    ws.sort_by(f64::total_cmp);
    ws.dedup();
    let vals: Vec<f64> = ws.iter().map(|w| f(*w)).collect();
    let (k, &vmax) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let (mut best_w, mut best) = (ws[k], vmax);

    let lo = ws[k.saturating_sub(1)];
    let hi = ws[(k + 1).min(ws.len() - 1)];
    if hi > lo {
        let (w, v) = golden_max(&f, lo, hi, 100);
        if v > best {
            best = v;
            best_w = w;
        }
    }
    let threshold = 1.0 / params.beta;
    Ok(HinfSweep { max_ratio: best, argmax: best_w, threshold, condition_holds: best < threshold })
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if (b - a).abs() <= 1e-15 * b.abs().max(1e-300) {
            break;
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Real parts above `−STABILITY_EPS·max|J|` are treated as nonnegative.
pub const STABILITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub point: EquilibriumPoint,
    pub jacobian: [[f64; 4]; 4],
    /// `(re, im)` pairs, real part descending.
    pub spectrum: [[f64; 2]; 4],
    pub closed_form_zeros: Option<[f64; 4]>,
    pub locally_stable: bool,
    pub hinf_ratio: Option<f64>,
    pub hinf_condition_holds: Option<bool>,
}

pub fn stability_report(point: &EquilibriumPoint, params: &ModelParams) -> Result<StabilityReport> {
    let j = jacobian_at(&point.state, params);
    let eig = eigenvalues(&j)?;
    // eigenvalues within roundoff of the imaginary axis count as marginal
    let margin = STABILITY_EPS * j.amax();
    let mut rows = [[0.0; 4]; 4];
    for (r, row) in rows.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = j[(r, c)];
        }
    }
    let closed_form_zeros = (point.kind == EquilibriumKind::DiseaseFree && params.sigma == params.gamma)
        .then(|| char_zeros_x1(params).zeros);
    let sweep = match point.kind {
        EquilibriumKind::Endemic => Some(hinf_ratio_sweep(params, &default_frequency_grid())?),
        _ => None,
    };
    Ok(StabilityReport {
        point: *point,
        jacobian: rows,
        spectrum: eig.map(|z| [z.re, z.im]),
        closed_form_zeros,
        locally_stable: eig.iter().all(|z| z.re < -margin),
        hinf_ratio: sweep.map(|s| s.max_ratio),
        hinf_condition_holds: sweep.map(|s| s.condition_holds),
    })
}

/// Both equilibria with their stability reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumAnalysis {
    pub params: ModelParams,
    pub disease_free: StabilityReport,
    pub endemic_ratio: f64,
    pub endemic: Option<StabilityReport>,
    pub feasibility: Option<Feasibility>,
}

pub fn analyze(params: &ModelParams) -> Result<EquilibriumAnalysis> {
    params.validate()?;
    let x1 = disease_free_equilibrium(params);
    let disease_free = stability_report(&x1, params)?;
    let endemic = match endemic_equilibrium(params)? {
        Some(x2) => Some(stability_report(&x2, params)?),
        None => None,
    };
    let feasibility = match endemic {
        Some(_) => Some(endemic_feasibility(params)?),
        None => None,
    };
    Ok(EquilibriumAnalysis { params: *params, disease_free, endemic_ratio: endemic_ratio(params), endemic, feasibility })
}
