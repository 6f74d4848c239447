//! CSV trajectory files.

use std::path::Path;

use anyhow::{bail, Context, Result};

use seirvax_core::fblin::ZeroDynamicsSample;
use seirvax_core::integrator::{Sample, Trajectory, TrajectoryMeta};
use seirvax_core::model::SeirState;

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "S", "E", "I", "R", "V", "u"];
pub const ZERODYN_HEADER: [&str; 5] = ["t", "z2", "z3", "z4", "sum"];

/// Shortest decimal that parses back to the same double.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(TRAJECTORY_HEADER)?;
    for s in traj.samples() {
        let x = s.state;
        w.write_record([s.t, x.s, x.e, x.i, x.r, s.v, s.u].map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads samples written by [`write_trajectory`]; the header must match
/// exactly and times must increase strictly.
pub fn read_trajectory(path: &Path, meta: TrajectoryMeta) -> Result<Trajectory> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        bail!("header mismatch in {}: expected `{}`, found `{}`", path.display(), TRAJECTORY_HEADER.join(","), header.iter().collect::<Vec<_>>().join(","));
    }
    let mut samples = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("row {}", k + 2))?;
        if rec.len() != TRAJECTORY_HEADER.len() {
            bail!("row {} has {} fields, expected {}", k + 2, rec.len(), TRAJECTORY_HEADER.len());
        }
        let mut v = [0.0; 7];
        for (j, field) in rec.iter().enumerate() {
            v[j] = field
                .trim()
                .parse::<f64>()
                .with_context(|| format!("row {}, column `{}`: not a number: `{field}`", k + 2, TRAJECTORY_HEADER[j]))?;
        }
        samples.push(Sample { t: v[0], state: SeirState::new(v[1], v[2], v[3], v[4]), v: v[5], u: v[6] });
    }
    Ok(Trajectory::from_samples(samples, meta)?)
}

pub fn write_zero_dynamics(path: &Path, run: &[ZeroDynamicsSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(ZERODYN_HEADER)?;
    for s in run {
        w.write_record([s.t, s.z2, s.z3, s.z4, s.sum()].map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use seirvax_core::controllers::ControlLaw;
    use seirvax_core::integrator::{integrate, IntegratorConfig};
    use seirvax_core::model::ModelParams;

    #[test]
    fn round_trip_is_exact() {
        let p = ModelParams::new(1000.0, 0.01, 0.02, 0.9, 0.2, 0.2).unwrap();
        let law = ControlLaw::SusceptibleLinear { g: 0.1 };
        let traj = integrate(&SeirState::new(500.0, 100.0, 100.0, 300.0), &p, &law, &IntegratorConfig::fixed(5.0, 0.1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory(&path, &traj).unwrap();
        let back = read_trajectory(&path, traj.meta.clone()).unwrap();
        assert_eq!(back.samples(), traj.samples());
    }
}
