//! Static SVG line chart: populations on the left axis, V on the right.

use std::fmt::Write;

use seirvax_core::integrator::Trajectory;

const W: f64 = 900.0;
const H: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 2000;

const SERIES: [(&str, &str); 4] = [("S", "#1f77b4"), ("E", "#ff7f0e"), ("I", "#d62728"), ("R", "#2ca02c")];
const V_COLOR: &str = "#7f7f7f";

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        let pad = 0.5 * hi.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, dash: bool) {
    let mut d = String::new();
    for (x, y) in pts {
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, d.trim_end());
}

/// Renders the trajectory as a standalone SVG document.
pub fn render(traj: &Trajectory, title: &str) -> String {
    let smp = traj.samples();
    let step = smp.len().div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..smp.len()).step_by(step).collect();
    if idx.last() != Some(&(smp.len() - 1)) {
        idx.push(smp.len() - 1);
    }

    let (t0, t1) = (smp[0].t, smp[smp.len() - 1].t);
    let (ylo, yhi) = range(idx.iter().flat_map(|&k| smp[k].state.to_array()));
    let (vlo, vhi) = range(idx.iter().map(|&k| smp[k].v));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t - t0) / (t1 - t0).max(f64::MIN_POSITIVE) * pw;
    let sy = |y: f64| TOP + (yhi - y) / (yhi - ylo) * ph;
    let sv = |v: f64| TOP + (vhi - v) / (vhi - vlo) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let t = t0 + f * (t1 - t0);
        let x = sx(t);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick(t));
        let y = ylo + f * (yhi - ylo);
        let py = sy(y);
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, tick(y));
        let v = vlo + f * (vhi - vlo);
        let pv = sv(v);
        let xr = LEFT + pw;
        let _ = writeln!(out, r#"<line x1="{xr}" y1="{pv:.2}" x2="{}" y2="{pv:.2}" stroke="{V_COLOR}"/>"#, xr + 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" fill="{V_COLOR}">{}</text>"#, xr + 8.0, pv + 4.0, tick(v));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">t (days)</text>"#, LEFT + pw / 2.0, H - 10.0);
    let _ = writeln!(out, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">individuals</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" transform="rotate(90 {} {})" text-anchor="middle" fill="{V_COLOR}">V</text>"#, W - 16.0, TOP + ph / 2.0, W - 16.0, TOP + ph / 2.0);

    for (c, (name, color)) in SERIES.iter().enumerate() {
        let pts: Vec<(f64, f64)> = idx.iter().map(|&k| (sx(smp[k].t), sy(smp[k].state.to_array()[c]))).collect();
        polyline(&mut out, &pts, color, false);
        let lx = LEFT + 10.0 + 60.0 * c as f64;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#, TOP + 12.0, lx + 18.0, TOP + 12.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{name}</text>"#, lx + 22.0, TOP + 16.0);
    }
    let pts: Vec<(f64, f64)> = idx.iter().map(|&k| (sx(smp[k].t), sv(smp[k].v))).collect();
    polyline(&mut out, &pts, V_COLOR, true);
    let lx = LEFT + 250.0;
    let _ = writeln!(out, r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{V_COLOR}" stroke-width="2" stroke-dasharray="6 4"/>"#, TOP + 12.0, lx + 18.0, TOP + 12.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}">V</text>"#, lx + 22.0, TOP + 16.0);
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use seirvax_core::controllers::ControlLaw;
    use seirvax_core::integrator::{integrate, IntegratorConfig};
    use seirvax_core::model::{ModelParams, SeirState};

    #[test]
    fn renders_all_series() {
        let p = ModelParams::new(1000.0, 0.01, 0.02, 0.9, 0.2, 0.2).unwrap();
        let traj = integrate(&SeirState::new(900.0, 50.0, 50.0, 0.0), &p, &ControlLaw::ZeroVax, &IntegratorConfig::fixed(100.0, 0.01)).unwrap();
        let svg = render(&traj, "zero <vax>");
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 5);
        assert!(svg.contains("zero &lt;vax&gt;"));
        // constant V still gets a finite axis
        assert!(!svg.contains("NaN"));
    }
}
