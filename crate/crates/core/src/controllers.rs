//! Catalogue of feedback vaccination laws, their gain constraints and the
//! closed-form asymptotic limits each one predicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SeirState};

/// A named vaccination policy `V(state, params, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ControlLaw {
    ZeroVax,
    ConstantVax { v: f64 },
    /// `u = −gS`: `V = (ωR + (g − βI/N)S + μN)/(μN)`.
    SusceptibleLinear { g: f64 },
    /// `u = −g(S+E)`: `V = (gS + (g − σ)E + ωR)/(μN)`.
    SusceptiblePlusExposed { g: f64 },
    /// `u = −gR + g₁N`: `V = (g₁N − gR − γI)/(μN)`.
    ImmuneFeedback { g: f64, g1: f64 },
    /// Immune feedback with `g < 0` and `g₁ = μ + ω + g` taken from the
    /// parameters at evaluation time.
    ConstrainedImmuneFeedback { g: f64 },
    /// Linearizing law `η = −g′z₁ + g₁N`; identical to
    /// `ImmuneFeedback { g: g′ − (μ+ω), g1 }`.
    Linearizing { g_prime: f64, g1: f64 },
    /// Output-zeroing input `V = −γI/(μN)` that keeps `Ṙ = −(μ+ω)R`.
    OutputZeroing,
    Saturated { inner: Box<ControlLaw>, lo: f64, hi: f64 },
}

impl ControlLaw {
    pub fn saturated(inner: ControlLaw, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidLaw(format!("saturation requires lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(Self::Saturated { inner: Box::new(inner), lo, hi })
    }

    pub fn label(&self) -> String {
        match self {
            Self::ZeroVax => "zero_vax".into(),
            Self::ConstantVax { v } => format!("constant_vax(v={v})"),
            Self::SusceptibleLinear { g } => format!("susceptible_linear(g={g})"),
            Self::SusceptiblePlusExposed { g } => format!("susceptible_plus_exposed(g={g})"),
            Self::ImmuneFeedback { g, g1 } => format!("immune_feedback(g={g}, g1={g1})"),
            Self::ConstrainedImmuneFeedback { g } => format!("constrained_immune_feedback(g={g})"),
            Self::Linearizing { g_prime, g1 } => format!("linearizing(g'={g_prime}, g1={g1})"),
            Self::OutputZeroing => "output_zeroing".into(),
            Self::Saturated { inner, lo, hi } => format!("saturated[{lo}, {hi}]({})", inner.label()),
        }
    }

    /// Structural checks that must hold before the law can drive a simulation.
    pub fn check_bind(&self, params: &ModelParams) -> Result<()> {
        match self {
            Self::ConstantVax { v } if !v.is_finite() => Err(Error::InvalidLaw("constant V not finite".into())),
            Self::ImmuneFeedback { g, .. } if !(*g > -(params.mu + params.omega)) => {
                Err(Error::InvalidLaw(format!("immune feedback requires g > -(mu+omega), got g = {g}")))
            }
            Self::Saturated { inner, lo, hi } => {
                if !(lo <= hi) {
                    return Err(Error::InvalidLaw(format!("saturation requires lo <= hi, got [{lo}, {hi}]")));
                }
                inner.check_bind(params)
            }
            _ => Ok(()),
        }
    }

    /// Translates the linearizing and constrained variants into the immune
    /// feedback gains `(g, g₁)` they are equivalent to.
    pub fn immune_gains(&self, params: &ModelParams) -> Option<(f64, f64)> {
        match *self {
            Self::ImmuneFeedback { g, g1 } => Some((g, g1)),
            Self::ConstrainedImmuneFeedback { g } => Some((g, params.mu + params.omega + g)),
            Self::Linearizing { g_prime, g1 } => Some((g_prime - (params.mu + params.omega), g1)),
            _ => None,
        }
    }

    /// Gains that enter this law, used for rate scaling in verification.
    pub fn gains(&self) -> Vec<f64> {
        match self {
            Self::ZeroVax | Self::OutputZeroing | Self::ConstantVax { .. } => vec![],
            Self::SusceptibleLinear { g } | Self::SusceptiblePlusExposed { g } => vec![*g],
            Self::ImmuneFeedback { g, g1 } => vec![*g, *g1],
            Self::ConstrainedImmuneFeedback { g } => vec![*g],
            Self::Linearizing { g_prime, g1 } => vec![*g_prime, *g1],
            Self::Saturated { inner, .. } => inner.gains(),
        }
    }

    /// Saturation regime of every nested clip at this state: `-1` below,
    /// `0` inside, `1` above. Empty for laws without saturation.
    pub fn saturation_regimes(&self, state: &SeirState, params: &ModelParams, t: f64) -> Result<Vec<i8>> {
        let mut out = Vec::new();
        let mut law = self;
        while let Self::Saturated { inner, lo, hi } = law {
            let v = evaluate(inner, state, params, t)?;
            out.push(if v < *lo {
                -1
            } else if v > *hi {
                1
            } else {
                0
            });
            law = inner;
        }
        Ok(out)
    }
}

/// Vaccination level commanded by `law` at `state`. `t` is passed through
/// for time-varying laws; none of the built-in ones depend on it.
#[allow(clippy::only_used_in_recursion)]
pub fn evaluate(law: &ControlLaw, state: &SeirState, params: &ModelParams, t: f64) -> Result<f64> {
    let p = params;
    let x = state;
    match law {
        ControlLaw::ZeroVax => Ok(0.0),
        ControlLaw::ConstantVax { v } => Ok(*v),
        ControlLaw::SusceptibleLinear { g } => {
            let k = p.require_channel()?;
            Ok((p.omega * x.r + (g - p.beta * x.i / p.n) * x.s + k) / k)
        }
        ControlLaw::SusceptiblePlusExposed { g } => {
            let k = p.require_channel()?;
            Ok((g * x.s + (g - p.sigma) * x.e + p.omega * x.r) / k)
        }
        ControlLaw::OutputZeroing => {
            let k = p.require_channel()?;
            Ok(-p.gamma * x.i / k)
        }
        ControlLaw::ImmuneFeedback { .. }
        | ControlLaw::ConstrainedImmuneFeedback { .. }
        | ControlLaw::Linearizing { .. } => {
            let k = p.require_channel()?;
            let (g, g1) = law.immune_gains(p).expect("immune family");
            Ok(immune_feedback_value(x, p, g, g1, k))
        }
        ControlLaw::Saturated { inner, lo, hi } => Ok(evaluate(inner, x, p, t)?.clamp(*lo, *hi)),
    }
}

#[inline]
fn immune_feedback_value(x: &SeirState, p: &ModelParams, g: f64, g1: f64, k: f64) -> f64 {
    (g1 * p.n - g * x.r - p.gamma * x.i) / k
}

/// The regrouped form `V = (g(N − I) − σE + (ω − g)R)/(μN)` of the
/// susceptible-plus-exposed law. Equal to [`evaluate`] on conserved states.
pub fn susceptible_plus_exposed_regrouped(state: &SeirState, params: &ModelParams, g: f64) -> Result<f64> {
    let k = params.require_channel()?;
    let x = state;
    Ok((g * (params.n - x.i) - params.sigma * x.e + (params.omega - g) * x.r) / k)
}

/// `−(|g|−ω)N + |g|R − γI`: the constrained immune-feedback law commands
/// `V > 1` exactly when this is positive.
pub fn constrained_overshoot_margin(state: &SeirState, params: &ModelParams, g: f64) -> f64 {
    -(g.abs() - params.omega) * params.n + g.abs() * state.r - params.gamma * state.i
}

/// One named condition attached to a law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainConstraint {
    pub name: &'static str,
    pub holds: bool,
    /// Required clauses gate simulation and predictions; the others are
    /// technical or sufficient conditions that are only reported.
    pub required: bool,
}

impl GainConstraint {
    fn req(name: &'static str, holds: bool) -> Self {
        Self { name, holds, required: true }
    }
    fn info(name: &'static str, holds: bool) -> Self {
        Self { name, holds, required: false }
    }
}

/// Evaluates every named constraint attached to the law's gains.
pub fn validate_gains(law: &ControlLaw, params: &ModelParams) -> Vec<GainConstraint> {
    let p = params;
    match law {
        ControlLaw::ZeroVax | ControlLaw::ConstantVax { .. } | ControlLaw::OutputZeroing => vec![],
        ControlLaw::SusceptibleLinear { g } => vec![
            GainConstraint::req("g >= 0", *g >= 0.0),
            GainConstraint::info("gamma != sigma", p.gamma != p.sigma),
            GainConstraint::info("g != sigma", *g != p.sigma),
            GainConstraint::info("g != gamma", *g != p.gamma),
        ],
        ControlLaw::SusceptiblePlusExposed { g } => vec![
            GainConstraint::req("g >= 0", *g >= 0.0),
            GainConstraint::req("g < mu", *g < p.mu),
        ],
        ControlLaw::ImmuneFeedback { g, g1 } => immune_constraints(*g, *g1, p),
        ControlLaw::Linearizing { g_prime, g1 } => {
            let mut v = vec![
                GainConstraint::req("g' >= 0", *g_prime >= 0.0),
                GainConstraint::req("g1 >= 0", *g1 >= 0.0),
            ];
            v.extend(immune_constraints(g_prime - (p.mu + p.omega), *g1, p));
            v
        }
        ControlLaw::ConstrainedImmuneFeedback { g } => {
            let g1 = p.mu + p.omega + g;
            let a = g.abs();
            let gate = a - p.omega + p.gamma.max(a);
            vec![
                GainConstraint::req("g < 0", *g < 0.0),
                GainConstraint::req("g1 = mu+omega+g", true),
                GainConstraint::req("mu >= |g| - omega + max(gamma, |g|)", p.mu >= gate),
                GainConstraint::req("|g| - omega + max(gamma, |g|) >= max(gamma, |g|)", gate >= p.gamma.max(a)),
                GainConstraint::info("g1 >= max(gamma, |g|)", g1 >= p.gamma.max(a)),
            ]
        }
        ControlLaw::Saturated { inner, lo, hi } => {
            let mut v = vec![GainConstraint::req("lo <= hi", lo <= hi)];
            v.extend(validate_gains(inner, p));
            v
        }
    }
}

fn immune_constraints(g: f64, g1: f64, p: &ModelParams) -> Vec<GainConstraint> {
    let nonneg_a = g1 >= p.gamma;
    let nonneg_b = g >= 0.0 && p.gamma == p.mu + p.omega;
    vec![
        GainConstraint::req("g > -(mu+omega)", g > -(p.mu + p.omega)),
        GainConstraint::info("g1 >= gamma", nonneg_a),
        // the nonnegativity decomposition (g1−g)R + (g1−γ)I + g1(S+E) also needs g1 >= g
        GainConstraint::info("g1 >= g", g1 >= g),
        GainConstraint::info("g >= 0 and gamma = mu+omega", nonneg_b),
    ]
}

/// Closed-form limits a law predicts; absent fields are not predicted.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AsymptoticPrediction {
    pub s_inf: Option<f64>,
    pub e_inf: Option<f64>,
    pub i_inf: Option<f64>,
    pub r_inf: Option<f64>,
    pub s_plus_e_inf: Option<f64>,
    pub i_plus_r_inf: Option<f64>,
    pub s_plus_e_plus_i_inf: Option<f64>,
    pub v_inf: Option<f64>,
    pub integral_limit: Option<f64>,
    pub decay_rate: Option<f64>,
}

fn refuse_failed(law: &ControlLaw, params: &ModelParams) -> Result<()> {
    let failed: Vec<_> = validate_gains(law, params)
        .into_iter()
        .filter(|c| c.required && !c.holds)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::GainConstraint(failed.join("; ")))
    }
}

/// Limits predicted for the law under `params`.
pub fn predicted_limits(law: &ControlLaw, params: &ModelParams) -> Result<AsymptoticPrediction> {
    let p = params;
    let n = p.n;
    refuse_failed(law, p)?;
    match law {
        ControlLaw::SusceptibleLinear { g } => {
            if p.mu == 0.0 {
                return Err(Error::ZeroChannelGain);
            }
            Ok(AsymptoticPrediction {
                s_inf: Some(0.0),
                e_inf: Some(0.0),
                i_inf: Some(0.0),
                r_inf: Some(n),
                v_inf: Some(1.0 + p.omega / p.mu),
                decay_rate: Some(p.mu + g),
                ..Default::default()
            })
        }
        ControlLaw::SusceptiblePlusExposed { g } => {
            let rate = p.mu + g;
            let mut pred = AsymptoticPrediction {
                s_plus_e_inf: Some(p.mu * n / rate),
                i_plus_r_inf: Some(g * n / rate),
                decay_rate: Some(rate),
                ..Default::default()
            };
            if *g == 0.0 {
                pred.s_inf = Some(n);
                pred.e_inf = Some(0.0);
                pred.i_inf = Some(0.0);
                pred.r_inf = Some(0.0);
                pred.v_inf = Some(0.0);
            }
            Ok(pred)
        }
        ControlLaw::ImmuneFeedback { .. }
        | ControlLaw::ConstrainedImmuneFeedback { .. }
        | ControlLaw::Linearizing { .. } => {
            let (g, g1) = law.immune_gains(p).expect("immune family");
            let rate = p.mu + p.omega + g;
            if !(0.0..=rate).contains(&g1) {
                return Err(Error::GainConstraint(format!(
                    "population limits require 0 <= g1 <= mu+omega+g = {rate}, got g1 = {g1}"
                )));
            }
            let integral_limit = if p.mu > 0.0 { Some(g1 * (p.omega + g) / (p.mu * rate) * n) } else { None };
            Ok(AsymptoticPrediction {
                r_inf: Some(g1 * n / rate),
                s_plus_e_plus_i_inf: Some((rate - g1) * n / rate),
                integral_limit,
                decay_rate: Some(rate),
                ..Default::default()
            })
        }
        other => Err(Error::NoPrediction(other.label())),
    }
}

/// Upper vaccination bound `1 + (α − βI/N)·S/(μN)` under which positivity
/// still holds, with whether `α ≥ βI/N` was satisfied at this state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EarlyPrevalenceBound {
    pub bound: f64,
    pub alpha_admissible: bool,
}

pub fn early_prevalence_bound(state: &SeirState, params: &ModelParams, alpha: f64) -> Result<EarlyPrevalenceBound> {
    let k = params.require_channel()?;
    let force = params.beta * state.i / params.n;
    Ok(EarlyPrevalenceBound { bound: 1.0 + (alpha - force) * state.s / k, alpha_admissible: alpha >= force })
}

/// Peak-infectious bound `min(1, σβ/((μ+σ)(μ+γ)))·N` and the parametric
/// condition under which immune feedback stays nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfectiousBound {
    pub bound: f64,
    /// `None` when γ = 0 (condition undefined).
    pub nonnegativity_condition: Option<bool>,
}

pub fn infectious_upper_bound(params: &ModelParams) -> Result<InfectiousBound> {
    let p = params;
    let denom = (p.mu + p.sigma) * (p.mu + p.gamma);
    let factor = if p.sigma * p.beta == 0.0 {
        0.0
    } else if denom == 0.0 {
        return Err(Error::Undefined("(mu+sigma)(mu+gamma) = 0"));
    } else {
        (p.sigma * p.beta / denom).min(1.0)
    };
    let condition = (p.gamma != 0.0).then(|| factor >= (p.mu + p.omega) / p.gamma);
    Ok(InfectiousBound { bound: factor * p.n, nonnegativity_condition: condition })
}
