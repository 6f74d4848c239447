//! SEIR vector field with vaccination input, parameter validation, the
//! admissibility predicate on initial conditions and the control/vaccination
//! coupling `u = ωR − σE − μNV`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (times N) under which a state is considered to conserve
/// the total population.
pub const CONSERVATION_RTOL: f64 = 1e-9;

/// Model constants. Rates are per day, populations in individuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "N")]
    pub n: f64,
    pub mu: f64,
    pub omega: f64,
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(n: f64, mu: f64, omega: f64, beta: f64, sigma: f64, gamma: f64) -> Result<Self> {
        let p = Self { n, mu, omega, beta, sigma, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("N", self.n),
            ("mu", self.mu),
            ("omega", self.omega),
            ("beta", self.beta),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParams { name, reason: format!("{v} is not finite") });
            }
            if v < 0.0 {
                return Err(Error::InvalidParams { name, reason: format!("{v} is negative") });
            }
        }
        if self.n <= 0.0 {
            return Err(Error::InvalidParams { name: "N", reason: "must be positive".into() });
        }
        Ok(())
    }

    /// Transmission constant per individual, `β / N`.
    pub fn beta_prime(&self) -> f64 {
        self.beta / self.n
    }

    /// Gain of the vaccination input in the S and R equations.
    pub fn channel_gain(&self) -> f64 {
        self.mu * self.n
    }

    /// `β₀ = (μ+γ)(1+μ/σ)`; infinite when σ = 0 < μ.
    pub fn beta0(&self) -> f64 {
        if self.sigma == 0.0 {
            if self.mu == 0.0 {
                self.gamma
            } else {
                f64::INFINITY
            }
        } else {
            (self.mu + self.gamma) * (1.0 + self.mu / self.sigma)
        }
    }

    pub(crate) fn require_channel(&self) -> Result<f64> {
        let k = self.channel_gain();
        if k == 0.0 {
            Err(Error::ZeroChannelGain)
        } else {
            Ok(k)
        }
    }
}

/// One point `(S, E, I, R)` of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirState {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl SeirState {
    pub const fn new(s: f64, e: f64, i: f64, r: f64) -> Self {
        Self { s, e, i, r }
    }

    pub fn disease_free(n: f64) -> Self {
        Self::new(n, 0.0, 0.0, 0.0)
    }

    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s, self.e, self.i, self.r]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Every component is nonnegative.
    pub fn is_admissible(&self) -> bool {
        self.to_array().iter().all(|&v| v >= 0.0)
    }

    /// `|S+E+I+R − N| ≤ 10⁻⁹·N`.
    pub fn is_conserved(&self, n: f64) -> bool {
        (self.total() - n).abs() <= CONSERVATION_RTOL * n
    }
}

/// Right-hand side of the model at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub ds: f64,
    pub de: f64,
    pub di: f64,
    pub dr: f64,
}

impl StateDerivative {
    pub fn to_array(self) -> [f64; 4] {
        [self.ds, self.de, self.di, self.dr]
    }

    pub fn sum(&self) -> f64 {
        self.ds + self.de + self.di + self.dr
    }
}

/// Vector field of the controlled SEIR model at vaccination level `v`.
///
/// `v` is not range-restricted here; laws may legitimately command values
/// above one.
pub fn derivative(state: &SeirState, params: &ModelParams, v: f64) -> Result<StateDerivative> {
    if !state.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    if !v.is_finite() {
        return Err(Error::NonFinite("vaccination"));
    }
    Ok(derivative_unchecked(state, params, v))
}

#[inline]
pub(crate) fn derivative_unchecked(x: &SeirState, p: &ModelParams, v: f64) -> StateDerivative {
    let incidence = p.beta * x.s * x.i / p.n;
    let vaccinated = p.mu * p.n * v;
    StateDerivative {
        ds: -p.mu * x.s + p.omega * x.r - incidence + p.mu * p.n - vaccinated,
        de: incidence - (p.mu + p.sigma) * x.e,
        di: -(p.mu + p.gamma) * x.i + p.sigma * x.e,
        dr: -(p.mu + p.omega) * x.r + p.gamma * x.i + vaccinated,
    }
}

/// Named clause of the initial-condition admissibility assumption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolatedClause {
    pub clause: &'static str,
    pub reason: String,
}

pub const CLAUSE_NONNEGATIVE: &str = "min(S0, I0, R0) >= 0";
pub const CLAUSE_EXPOSED: &str = "E0 > (mu+gamma)/sigma * I0";
pub const CLAUSE_INCIDENCE: &str = "beta*S0*I0/((mu+sigma)*N) > E0 if I0 != 0";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub beta_above_threshold: bool,
    pub beta0: f64,
    pub violated_clauses: Vec<ViolatedClause>,
    /// `Ė(0)` at zero vaccination. The incidence clause forces it positive,
    /// while the accompanying interpretation claims it negative; both are
    /// surfaced so callers can judge.
    pub exposed_rate0: f64,
    /// `İ(0)`.
    pub infectious_rate0: f64,
}

/// Evaluates the admissibility assumption on an initial state literally,
/// clause by clause, plus the `β > β₀` parametric condition.
pub fn check_admissibility(state0: &SeirState, params: &ModelParams) -> AdmissibilityReport {
    let p = params;
    let x = state0;
    let mut violated = Vec::new();

    if !(x.s.min(x.i).min(x.r) >= 0.0) {
        violated.push(ViolatedClause {
            clause: CLAUSE_NONNEGATIVE,
            reason: format!("min = {}", x.s.min(x.i).min(x.r)),
        });
    }

    if p.sigma == 0.0 {
        if x.i > 0.0 {
            violated.push(ViolatedClause { clause: CLAUSE_EXPOSED, reason: "sigma zero".into() });
        } else if !(x.e > 0.0) {
            violated.push(ViolatedClause { clause: CLAUSE_EXPOSED, reason: format!("E0 = {} <= 0", x.e) });
        }
    } else {
        let bound = (p.mu + p.gamma) / p.sigma * x.i;
        if !(x.e > bound) {
            violated.push(ViolatedClause {
                clause: CLAUSE_EXPOSED,
                reason: format!("E0 = {} <= {}", x.e, bound),
            });
        }
    }

    if x.i != 0.0 {
        let lhs = p.beta * x.s * x.i / ((p.mu + p.sigma) * p.n);
        if !(lhs > x.e) {
            violated.push(ViolatedClause {
                clause: CLAUSE_INCIDENCE,
                reason: format!("{} <= E0 = {}", lhs, x.e),
            });
        }
    }

    let beta0 = p.beta0();
    let d = derivative_unchecked(x, p, 0.0);
    AdmissibilityReport {
        admissible: violated.is_empty(),
        beta_above_threshold: p.beta > beta0,
        beta0,
        violated_clauses: violated,
        exposed_rate0: d.de,
        infectious_rate0: d.di,
    }
}

/// Auxiliary control `u = ωR − σE − μNV`.
pub fn coupling_control(state: &SeirState, params: &ModelParams, v: f64) -> f64 {
    params.omega * state.r - params.sigma * state.e - params.mu * params.n * v
}

/// Inverse of [`coupling_control`]: the vaccination level realising a
/// requested control `u`.
pub fn vaccination_from_control(state: &SeirState, params: &ModelParams, u: f64) -> Result<f64> {
    let k = params.require_channel()?;
    Ok((params.omega * state.r - params.sigma * state.e - u) / k)
}
