//! TOML scenario files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use seirvax_core::controllers::{validate_gains, ControlLaw};
use seirvax_core::integrator::{AdaptiveTolerances, ControlUpdate, IntegratorConfig, PositivityPolicy, INITIAL_SUM_RTOL};
use seirvax_core::model::{ModelParams, SeirState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Conservation,
    Positivity,
    Identities,
    Asymptotics,
    IntegralLimit,
    DecayRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub positivity: PositivityPolicy,
    #[serde(default)]
    pub control_update: ControlUpdate,
    pub adaptive: Option<AdaptiveTolerances>,
}

fn default_dt() -> f64 {
    1e-2
}

fn default_stride() -> usize {
    1
}

impl IntegratorSection {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            t0: self.t0,
            t_end: self.t_end,
            dt: self.dt,
            sampling_stride: self.stride,
            positivity_policy: self.positivity,
            control_update: self.control_update,
            adaptive: self.adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default)]
    pub run: Vec<CheckName>,
    /// Fixed `[lo, hi]` range for the recorded V.
    pub v_range: Option<[f64; 2]>,
    /// Per-sample upper bound `1 + (α − βI/N)·S/(μN)` instead of a fixed range.
    pub early_prevalence_alpha: Option<f64>,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    /// Relative tolerance for the asymptotic limits.
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    /// Relative tolerance for the convolution-integral limit.
    #[serde(default = "default_loose_tol")]
    pub integral_tolerance: f64,
    /// Relative tolerance for fitted decay rates.
    #[serde(default = "default_loose_tol")]
    pub rate_tolerance: f64,
}

fn default_loose_tol() -> f64 {
    1e-2
}

fn default_tail() -> f64 {
    0.1
}

fn default_tol() -> f64 {
    1e-3
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            run: vec![],
            v_range: None,
            early_prevalence_alpha: None,
            tail_fraction: default_tail(),
            tolerance: default_tol(),
            integral_tolerance: default_loose_tol(),
            rate_tolerance: default_loose_tol(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub csv: Option<String>,
    pub svg: Option<String>,
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: ModelParams,
    pub initial: SeirState,
    pub law: ControlLaw,
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in scenario {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.initial.is_finite() {
            bail!("initial state must be finite");
        }
        let sum = self.initial.total();
        if (sum - self.params.n).abs() > INITIAL_SUM_RTOL * self.params.n {
            bail!(
                "initial state must sum to N within {INITIAL_SUM_RTOL:e} relative: S+E+I+R = {sum}, N = {}",
                self.params.n
            );
        }
        let failed: Vec<_> =
            validate_gains(&self.law, &self.params).into_iter().filter(|c| c.required && !c.holds).map(|c| c.name).collect();
        if !failed.is_empty() {
            bail!("law `{}` violates gain constraint: {}", self.law.label(), failed.join("; "));
        }
        self.law.check_bind(&self.params)?;
        self.integrator.config().validate()?;
        if let Some([lo, hi]) = self.checks.v_range {
            if !(lo <= hi) {
                bail!("checks.v_range needs lo <= hi");
            }
        }
        if self.checks.v_range.is_some() && self.checks.early_prevalence_alpha.is_some() {
            bail!("give either checks.v_range or checks.early_prevalence_alpha, not both");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SAMPLE: &str = r#"
[params]
N = 1000.0
mu = 0.01
omega = 0.02
beta = 0.9
sigma = 0.2
gamma = 0.2

[initial]
S = 900.0
E = 50.0
I = 50.0
R = 0.0

[law]
name = "immune_feedback"
g = 0.0
g1 = 0.03

[integrator]
t_end = 1000.0
dt = 0.01
stride = 10

[checks]
run = ["conservation", "positivity", "asymptotics"]
"#;

    #[test]
    fn parses_sample() {
        let sc = Scenario::parse(SAMPLE).unwrap();
        assert_eq!(sc.law, ControlLaw::ImmuneFeedback { g: 0.0, g1: 0.03 });
        assert_eq!(sc.integrator.config().sampling_stride, 10);
        assert_eq!(sc.checks.run.len(), 3);
    }

    #[test]
    fn nested_saturation() {
        let text = SAMPLE.replace(
            "name = \"immune_feedback\"\ng = 0.0\ng1 = 0.03",
            "name = \"saturated\"\nlo = 0.0\nhi = 1.0\n[law.inner]\nname = \"susceptible_linear\"\ng = 0.1",
        );
        let sc = Scenario::parse(&text).unwrap();
        assert!(matches!(sc.law, ControlLaw::Saturated { .. }));
    }

    #[test]
    fn rejects_bad_sum_with_named_constraint() {
        let err = Scenario::parse(&SAMPLE.replace("R = 0.0", "R = 5.0")).unwrap_err();
        assert!(format!("{err:#}").contains("sum to N"), "{err:#}");
    }

    #[test]
    fn rejects_failing_gain_clause() {
        let err = Scenario::parse(&SAMPLE.replace("g = 0.0", "g = -0.5")).unwrap_err();
        assert!(format!("{err:#}").contains("g > -(mu+omega)"), "{err:#}");
    }

    #[test]
    fn optional_integrator_keys() {
        let text = SAMPLE.replace(
            "stride = 10",
            "stride = 10\npositivity = \"project\"\ncontrol_update = \"zero_order_hold\"\nadaptive = { rel_tol = 1e-9, abs_tol = 1e-9 }",
        );
        let cfg = Scenario::parse(&text).unwrap().integrator.config();
        assert_eq!(cfg.positivity_policy, PositivityPolicy::Project);
        assert_eq!(cfg.control_update, ControlUpdate::ZeroOrderHold);
        assert_eq!(cfg.adaptive, Some(AdaptiveTolerances { rel_tol: 1e-9, abs_tol: 1e-9 }));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = Scenario::parse("[params\nN = 1").unwrap_err();
        assert!(format!("{err:#}").contains("line 1"), "{err:#}");
    }
}
