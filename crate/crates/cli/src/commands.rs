//! Subcommand implementations. Each returns `Ok(true)` when every check
//! passed, `Ok(false)` on a check failure and `Err` on bad input.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use seirvax_core::controllers::{predicted_limits, ControlLaw};
use seirvax_core::equilibria::{analyze, EquilibriumKind, disease_free_equilibrium, endemic_ratio, stability_report, StabilityReport};
use seirvax_core::fblin::{check_zero_dynamics, integrate_zero_dynamics};
use seirvax_core::integrator::{integrate, IntegratorConfig, Sample, Trajectory, TrajectoryMeta};
use seirvax_core::model::ModelParams;
use seirvax_core::verify::{
    check_asymptotics, check_identity_suite, check_integral_limit, decay_rate_of, monitor_conservation,
    monitor_positivity, Check, Tolerance, VRange, VerificationReport,
};

use crate::io::{read_trajectory, write_trajectory, write_zero_dynamics};
use crate::scenario::{CheckName, Scenario};
use crate::svg;

/// Decay fits stop once the signal falls below this fraction of N.
const DECAY_FLOOR: f64 = 1e-8;
/// Fit window in units of the predicted time constant.
const DECAY_WINDOW: f64 = 15.0;

fn meta_for(sc: &Scenario) -> TrajectoryMeta {
    TrajectoryMeta {
        params: sc.params,
        law_name: sc.law.label(),
        law: Some(sc.law.clone()),
        config: Some(sc.integrator.config()),
        violations: vec![],
    }
}

type Signal = Box<dyn Fn(&Sample) -> f64>;

/// Signal that decays exactly exponentially at the predicted rate.
fn decay_signal(law: &ControlLaw, params: &ModelParams) -> Result<(&'static str, Signal)> {
    let pred = predicted_limits(law, params)?;
    Ok(match law {
        ControlLaw::SusceptibleLinear { .. } => ("S", Box::new(|s: &Sample| s.state.s)),
        ControlLaw::SusceptiblePlusExposed { .. } => {
            let lim = pred.s_plus_e_inf.expect("S+E limit");
            ("|S+E - limit|", Box::new(move |s: &Sample| (s.state.s + s.state.e - lim).abs()))
        }
        _ => match pred.r_inf {
            Some(lim) => ("|R - limit|", Box::new(move |s: &Sample| (s.state.r - lim).abs())),
            None => bail!("law `{}` has no decay-rate prediction", law.label()),
        },
    })
}

fn decay_check(traj: &Trajectory, sc: &Scenario, report: &mut VerificationReport) -> Result<()> {
    let p = &sc.params;
    let pred = predicted_limits(&sc.law, p)?;
    let Some(rate) = pred.decay_rate.filter(|r| *r > 0.0) else {
        bail!("law `{}` has no positive decay-rate prediction", sc.law.label());
    };
    let (label, f) = decay_signal(&sc.law, p)?;
    let t0 = traj.first().t;
    let floor = DECAY_FLOOR * p.n;
    if !(f(traj.first()) > floor) {
        bail!("decay_rate: {label} starts at its limit, nothing to fit");
    }
    // stop at the first sample that reaches the roundoff floor
    let mut to = (t0 + DECAY_WINDOW / rate).min(traj.last().t);
    if let Some(s) = traj.samples().iter().find(|s| s.t <= to && !(f(s) > floor)) {
        to = s.t;
    }
    let to = traj.samples().iter().rev().find(|s| s.t < to).map_or(t0, |s| s.t);
    let fit = decay_rate_of(traj, t0, to, |s| f(s)).context("decay_rate")?;
    let rel = (fit.rate - rate).abs() / rate;
    report.push(Check {
        name: format!("decay_rate[{label}]"),
        passed: rel <= sc.checks.rate_tolerance,
        worst_residual: rel,
        tolerance: sc.checks.rate_tolerance,
        location: None,
    });
    report.rates.push((label.to_string(), fit));
    Ok(())
}

/// Runs every check listed in the scenario.
pub fn run_checks(traj: &Trajectory, sc: &Scenario) -> Result<VerificationReport> {
    let mut report = VerificationReport::default();
    let p = &sc.params;
    for name in &sc.checks.run {
        match name {
            CheckName::Conservation => report.push(monitor_conservation(traj)),
            CheckName::Positivity => {
                let range = match (sc.checks.v_range, sc.checks.early_prevalence_alpha) {
                    (Some([lo, hi]), _) => Some(VRange::Fixed { lo, hi }),
                    (None, Some(alpha)) => Some(VRange::EarlyPrevalence { alpha }),
                    (None, None) => None,
                };
                report.extend(monitor_positivity(traj, range)?);
            }
            CheckName::Identities => report.extend(check_identity_suite(traj, p)?.checks),
            CheckName::Asymptotics => {
                let pred = predicted_limits(&sc.law, p)
                    .with_context(|| format!("cannot run `asymptotics` for law `{}`", sc.law.label()))?;
                let checks = check_asymptotics(traj, &pred, sc.checks.tail_fraction, Tolerance::Relative(sc.checks.tolerance))
                    .context("asymptotics")?;
                report.extend(checks);
            }
            CheckName::IntegralLimit => {
                let Some((g, g1)) = sc.law.immune_gains(p) else {
                    bail!("`integral_limit` needs an immune-feedback law, got `{}`", sc.law.label());
                };
                report.push(check_integral_limit(traj, p, g, g1, sc.checks.integral_tolerance).context("integral_limit")?);
            }
            CheckName::DecayRate => decay_check(traj, sc, &mut report)
                .with_context(|| format!("cannot run `decay_rate` for law `{}`", sc.law.label()))?,
        }
    }
    Ok(report)
}

fn print_report(report: &VerificationReport) {
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let at = c.location.map(|t| format!(" at t = {t}")).unwrap_or_default();
        println!("[{tag}] {}: worst {:.3e} (tol {:.3e}){at}", c.name, c.worst_residual, c.tolerance);
    }
    for (label, fit) in &report.rates {
        let ci = fit.ci.map(|(a, b)| format!(", 95% CI [{a:.6}, {b:.6}]")).unwrap_or_default();
        println!("       fitted rate of {label}: {:.6} (R^2 {:.6}, {} points{ci})", fit.rate, fit.r_squared, fit.points);
    }
    let ok = report.checks.iter().filter(|c| c.passed).count();
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!("result: {verdict} ({ok} of {} checks passed)", report.checks.len());
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    law: &'a ControlLaw,
    params: &'a ModelParams,
    samples: usize,
    t_end: f64,
    positivity_events: usize,
    passed: bool,
    verification: &'a VerificationReport,
}

pub struct SimulateOpts {
    pub scenario: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

fn resolve(dir: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

pub fn simulate(opts: &SimulateOpts) -> Result<bool> {
    let mut sc = Scenario::load(&opts.scenario)?;
    if let Some(dt) = opts.dt {
        sc.integrator.dt = dt;
    }
    if let Some(t) = opts.t_end {
        sc.integrator.t_end = t;
    }
    sc.validate().context("after command-line overrides")?;

    let out_dir = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let traj = integrate(&sc.initial, &sc.params, &sc.law, &sc.integrator.config())?;
    println!(
        "law {} over t in [{}, {}]: {} samples, {} positivity events",
        sc.law.label(),
        traj.first().t,
        traj.last().t,
        traj.len(),
        traj.meta.violations.len()
    );
    let csv_path = resolve(&out_dir, sc.outputs.csv.as_deref().unwrap_or("trajectory.csv"));
    write_trajectory(&csv_path, &traj)?;
    println!("wrote {}", csv_path.display());
    if let Some(name) = &sc.outputs.svg {
        let path = resolve(&out_dir, name);
        std::fs::write(&path, svg::render(&traj, &sc.law.label())).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }

    let report = run_checks(&traj, &sc)?;
    print_report(&report);
    if let Some(name) = &sc.outputs.report {
        let path = resolve(&out_dir, name);
        let body = SimulationReport {
            law: &sc.law,
            params: &sc.params,
            samples: traj.len(),
            t_end: traj.last().t,
            positivity_events: traj.meta.violations.len(),
            passed: report.passed(),
            verification: &report,
        };
        std::fs::write(&path, serde_json::to_string_pretty(&body)?).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(report.passed())
}

pub fn verify(csv: &Path, scenario: &Path) -> Result<bool> {
    let sc = Scenario::load(scenario)?;
    let traj = read_trajectory(csv, meta_for(&sc))?;
    println!("read {} samples from {}", traj.len(), csv.display());
    let report = run_checks(&traj, &sc)?;
    print_report(&report);
    Ok(report.passed())
}

fn fmt_state(x: &seirvax_core::model::SeirState) -> String {
    format!("S = {:.6}, E = {:.6}, I = {:.6}, R = {:.6}", x.s, x.e, x.i, x.r)
}

fn print_stability(title: &str, r: &StabilityReport) {
    println!("{title}: {}", fmt_state(&r.point.state));
    println!("  residual {:.3e}", r.point.residual);
    let eig: Vec<String> = r
        .spectrum
        .iter()
        .map(|[re, im]| if *im == 0.0 { format!("{re:.6}") } else { format!("{re:.6}{im:+.6}i") })
        .collect();
    println!("  eigenvalues: {}", eig.join(", "));
    if let Some(z) = r.closed_form_zeros {
        println!("  closed-form zeros: {}", z.map(|v| format!("{v:.6}")).join(", "));
    }
    let marginal = r.spectrum.iter().any(|z| z[0].abs() <= 1e-12 * r.jacobian.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())));
    println!("  locally stable: {}{}", r.locally_stable, if marginal { " (zero eigenvalue, marginal)" } else { "" });
    if let (Some(m), Some(h)) = (r.hinf_ratio, r.hinf_condition_holds) {
        println!("  frequency sweep: max ratio {m:.9}, robustness condition {}", if h { "holds" } else { "fails" });
    }
}

#[derive(Serialize)]
struct DiseaseFreeOnly<'a> {
    params: &'a ModelParams,
    disease_free: &'a StabilityReport,
}

pub fn equilibria(params: &ModelParams, endemic: bool, json: Option<&Path>) -> Result<bool> {
    params.validate()?;
    let body = if endemic {
        let a = analyze(params)?;
        print_stability("disease-free equilibrium", &a.disease_free);
        println!("endemic ratio (mu+sigma)^2/(sigma*beta) = {:.9}", a.endemic_ratio);
        match &a.endemic {
            Some(r) => {
                let title = match r.point.kind {
                    EquilibriumKind::MuZeroSpecial => "endemic equilibrium (mu = 0 branch)",
                    _ => "endemic equilibrium",
                };
                print_stability(title, r);
                if params.beta > 0.0 {
                    println!("  sweep threshold 1/beta = {:.9}", 1.0 / params.beta);
                }
            }
            None => println!("no endemic equilibrium (ratio >= 1)"),
        }
        if let Some(f) = a.feasibility {
            println!("feasibility value {:.9}: {}", f.value, if f.holds { "holds" } else { "fails" });
        }
        serde_json::to_string_pretty(&a)?
    } else {
        let r = stability_report(&disease_free_equilibrium(params), params)?;
        print_stability("disease-free equilibrium", &r);
        println!("endemic ratio (mu+sigma)^2/(sigma*beta) = {:.9}", endemic_ratio(params));
        serde_json::to_string_pretty(&DiseaseFreeOnly { params, disease_free: &r })?
    };
    if let Some(path) = json {
        std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

pub struct ZeroDynOpts {
    pub start: (f64, f64, f64),
    pub t_end: f64,
    pub dt: f64,
    pub out_dir: Option<PathBuf>,
}

pub fn zerodyn(params: &ModelParams, opts: &ZeroDynOpts) -> Result<bool> {
    let config = IntegratorConfig::fixed(opts.t_end, opts.dt);
    config.validate()?;
    let run = integrate_zero_dynamics(opts.start, params, &config)?;
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join("zerodyn.csv");
    write_zero_dynamics(&path, &run)?;
    println!("wrote {} ({} samples)", path.display(), run.len());
    let c = check_zero_dynamics(&run)?;
    let tag = |b: bool| if b { "PASS" } else { "FAIL" };
    println!("[{}] sum conservation: drift {:.3e} from C = {} (tol {:.3e})", tag(c.sum_conserved), c.max_sum_drift, c.c, c.tolerance);
    println!(
        "[{}] boundedness: components in [{:.6e}, {:.6e}], required [0, C]",
        tag(c.bounded),
        c.min_component,
        c.max_component
    );
    if (c.c - params.n).abs() > 1e-9 * params.n {
        println!("note: the sum relaxes toward N = {} when it starts elsewhere", params.n);
    }
    println!("result: {}", tag(c.passed()));
    Ok(c.passed())
}
