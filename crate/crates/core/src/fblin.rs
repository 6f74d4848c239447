//! Normal-form coordinates for output `y = R`, relative-degree check,
//! zero dynamics and the linearizing vaccination law.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::controllers::{evaluate, ControlLaw};
use crate::error::{Error, Result};
use crate::integrator::{fixed_step_count, fixed_step_time, rk4_step, IntegratorConfig};
use crate::model::{derivative_unchecked, ModelParams, SeirState, StateDerivative};

/// `z1 = R`, `z2 = S + R`, `z3 = E`, `z4 = I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalState {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
    pub z4: f64,
}

impl NormalState {
    pub const fn new(z1: f64, z2: f64, z3: f64, z4: f64) -> Self {
        Self { z1, z2, z3, z4 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.z1, self.z2, self.z3, self.z4]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// True iff the preimage has nonnegative components.
    pub fn preimage_nonnegative(&self) -> bool {
        self.z1 >= 0.0 && self.z2 >= self.z1 && self.z3 >= 0.0 && self.z4 >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalDerivative {
    pub dz1: f64,
    pub dz2: f64,
    pub dz3: f64,
    pub dz4: f64,
}

impl NormalDerivative {
    pub fn to_array(self) -> [f64; 4] {
        [self.dz1, self.dz2, self.dz3, self.dz4]
    }
}

pub fn to_normal(x: &SeirState) -> NormalState {
    NormalState::new(x.r, x.s + x.r, x.e, x.i)
}

pub fn from_normal(z: &NormalState) -> SeirState {
    SeirState::new(z.z2 - z.z1, z.z3, z.z4, z.z1)
}

/// Pushes a state derivative through the (linear) transform.
pub fn to_normal_tangent(dx: &StateDerivative) -> NormalDerivative {
    NormalDerivative { dz1: dx.dr, dz2: dx.ds + dx.dr, dz3: dx.de, dz4: dx.di }
}

/// `∂(S,E,I,R)/∂(z1,z2,z3,z4)`.
pub fn inverse_jacobian() -> Matrix4<f64> {
    Matrix4::new(
        -1.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        1.0, 0.0, 0.0, 0.0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformReport {
    pub jacobian_det: f64,
    /// `None` when the input never reaches the output.
    pub relative_degree: Option<u32>,
    pub well_posed: bool,
    /// Numeric coefficient of V in `Ṙ`.
    pub input_gain: f64,
}

/// Coefficient of V in `ẏ` for `y = R`, estimated by differencing the
/// vector field at `V = 1` and `V = 0`.
pub fn input_gain_at(x: &SeirState, params: &ModelParams) -> f64 {
    derivative_unchecked(x, params, 1.0).dr - derivative_unchecked(x, params, 0.0).dr
}

pub fn relative_degree(params: &ModelParams) -> TransformReport {
    let q = params.n / 4.0;
    let gain = input_gain_at(&SeirState::new(q, q, q, q), params);
    let well_posed = gain != 0.0 && gain.is_finite();
    TransformReport {
        jacobian_det: inverse_jacobian().determinant(),
        relative_degree: well_posed.then_some(1),
        well_posed,
        input_gain: gain,
    }
}

/// Vector field in normal-form coordinates.
pub fn normal_derivative(z: &NormalState, params: &ModelParams, v: f64) -> NormalDerivative {
    let p = params;
    let bp = p.beta_prime();
    let inc = bp * (z.z2 - z.z1) * z.z4;
    NormalDerivative {
        dz1: -(p.mu + p.omega) * z.z1 + p.gamma * z.z4 + p.mu * p.n * v,
        dz2: -p.mu * z.z2 + p.gamma * z.z4 - inc + p.mu * p.n,
        dz3: inc - (p.mu + p.sigma) * z.z3,
        dz4: -(p.mu + p.gamma) * z.z4 + p.sigma * z.z3,
    }
}

/// Internal dynamics with the output held at `z1 ≡ 0`.
pub fn zero_dynamics_derivative(z2: f64, z3: f64, z4: f64, params: &ModelParams) -> (f64, f64, f64) {
    let p = params;
    let inc = p.beta_prime() * z2 * z4;
    (
        -p.mu * z2 + p.gamma * z4 - inc + p.mu * p.n,
        inc - (p.mu + p.sigma) * z3,
        -(p.mu + p.gamma) * z4 + p.sigma * z3,
    )
}

/// `V = −γz4/(μN)`: cancels `γz4` in `ż1` so that `z1 ≡ 0` is invariant.
pub fn zeroing_input(z4: f64, params: &ModelParams) -> Result<f64> {
    let k = params.require_channel()?;
    Ok(-params.gamma * z4 / k)
}

/// The law realising `ż1 = −g′z1 + g₁N`.
pub fn synthesize_linearizing_law(g_prime: f64, g1: f64, params: &ModelParams) -> ControlLaw {
    ControlLaw::ImmuneFeedback { g: g_prime - (params.mu + params.omega), g1 }
}

/// Linearizing vaccination computed directly from normal-form coordinates:
/// `V = (−g′z1 + g₁N + (μ+ω)z1 − γz4)/(μN)`.
pub fn linearizing_vaccination(z: &NormalState, params: &ModelParams, g_prime: f64, g1: f64) -> Result<f64> {
    let k = params.require_channel()?;
    let eta = -g_prime * z.z1 + g1 * params.n;
    Ok((eta + (params.mu + params.omega) * z.z1 - params.gamma * z.z4) / k)
}

/// `z1(t)` of the linearized output loop; `g′ = 0` gives the ramp limit.
pub fn linear_output_solution(z1_0: f64, g_prime: f64, g1: f64, n: f64, t: f64) -> f64 {
    if g_prime == 0.0 {
        return z1_0 + g1 * n * t;
    }
    let e = (-g_prime * t).exp();
    g1 * n / g_prime * (1.0 - e) + z1_0 * e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalSample {
    pub t: f64,
    pub z: NormalState,
    pub v: f64,
}

fn require_fixed(config: &IntegratorConfig) -> Result<()> {
    config.validate()?;
    if config.adaptive.is_some() {
        return Err(Error::InvalidConfig("normal-form integration runs on the fixed-step grid only".into()));
    }
    Ok(())
}

/// Integrates the normal form under `law`, evaluated on the preimage state,
/// with the same RK4 grid as [`crate::integrator::integrate`].
pub fn integrate_normal(
    z0: &NormalState,
    params: &ModelParams,
    law: &ControlLaw,
    config: &IntegratorConfig,
) -> Result<Vec<NormalSample>> {
    params.validate()?;
    require_fixed(config)?;
    law.check_bind(params)?;
    let v_at = |t: f64, z: &[f64; 4]| evaluate(law, &from_normal(&NormalState::from_array(*z)), params, t);
    let mut rhs = |t: f64, z: &[f64; 4]| -> Result<[f64; 4]> {
        let v = v_at(t, z)?;
        Ok(normal_derivative(&NormalState::from_array(*z), params, v).to_array())
    };

    let (t0, t_end, dt) = (config.t0, config.t_end, config.dt);
    let n_steps = fixed_step_count(t0, t_end, dt);
    let mut z = z0.to_array();
    let mut t = t0;
    let mut out = vec![NormalSample { t, z: *z0, v: v_at(t, &z)? }];
    for k in 1..=n_steps {
        let t_next = fixed_step_time(t0, t_end, dt, k, n_steps);
        z = rk4_step(t, &z, t_next - t, &mut rhs)?;
        if z.iter().any(|c| !c.is_finite()) {
            return Err(Error::Diverged { step: k, t: t_next });
        }
        t = t_next;
        if k == n_steps || k % config.sampling_stride == 0 {
            out.push(NormalSample { t, z: NormalState::from_array(z), v: v_at(t, &z)? });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroDynamicsSample {
    pub t: f64,
    pub z2: f64,
    pub z3: f64,
    pub z4: f64,
}

impl ZeroDynamicsSample {
    pub fn sum(&self) -> f64 {
        self.z2 + self.z3 + self.z4
    }
}

/// RK4 on the zero dynamics from `(z2, z3, z4)`.
pub fn integrate_zero_dynamics(
    start: (f64, f64, f64),
    params: &ModelParams,
    config: &IntegratorConfig,
) -> Result<Vec<ZeroDynamicsSample>> {
    params.validate()?;
    require_fixed(config)?;
    let (a, b, c) = start;
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::NonFinite("zero-dynamics start"));
    }
    let mut rhs = |_t: f64, z: &[f64; 4]| -> Result<[f64; 4]> {
        let (d2, d3, d4) = zero_dynamics_derivative(z[1], z[2], z[3], params);
        Ok([0.0, d2, d3, d4])
    };
    let (t0, t_end, dt) = (config.t0, config.t_end, config.dt);
    let n_steps = fixed_step_count(t0, t_end, dt);
    let mut z = [0.0, a, b, c];
    let mut t = t0;
    let mut out = vec![ZeroDynamicsSample { t, z2: a, z3: b, z4: c }];
    for k in 1..=n_steps {
        let t_next = fixed_step_time(t0, t_end, dt, k, n_steps);
        z = rk4_step(t, &z, t_next - t, &mut rhs)?;
        if z.iter().any(|c| !c.is_finite()) {
            return Err(Error::Diverged { step: k, t: t_next });
        }
        t = t_next;
        if k == n_steps || k % config.sampling_stride == 0 {
            out.push(ZeroDynamicsSample { t, z2: z[1], z3: z[2], z4: z[3] });
        }
    }
    Ok(out)
}

/// Sum conservation and boundedness of a zero-dynamics run, both at
/// tolerance `10⁻⁹·C` with `C` the initial sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroDynamicsCheck {
    pub c: f64,
    pub tolerance: f64,
    pub max_sum_drift: f64,
    pub sum_conserved: bool,
    pub min_component: f64,
    pub max_component: f64,
    pub bounded: bool,
}

impl ZeroDynamicsCheck {
    pub fn passed(&self) -> bool {
        self.sum_conserved && self.bounded
    }
}

pub fn check_zero_dynamics(samples: &[ZeroDynamicsSample]) -> Result<ZeroDynamicsCheck> {
    let first = samples.first().ok_or_else(|| Error::BadTrajectory("no samples".into()))?;
    let c = first.sum();
    let tol = 1e-9 * c.abs();
    let mut drift: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in samples {
        drift = drift.max((s.sum() - c).abs());
        for v in [s.z2, s.z3, s.z4] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok(ZeroDynamicsCheck {
        c,
        tolerance: tol,
        max_sum_drift: drift,
        sum_conserved: drift <= tol,
        min_component: lo,
        max_component: hi,
        bounded: lo >= -tol && hi <= c + tol,
    })
}
