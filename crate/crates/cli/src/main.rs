use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seirvax::commands::{self, SimulateOpts, ZeroDynOpts};
use seirvax_core::model::ModelParams;

/// Feedback vaccination control of an SEIR epidemic.
///
/// Exit status: 0 when all checks pass, 1 on invalid input, 2 when a check fails.
#[derive(Parser)]
#[command(name = "seirvax", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a scenario, write its trajectory and run the listed checks.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Re-run a scenario's checks against a stored trajectory CSV.
    Verify { csv: PathBuf, scenario: PathBuf },
    /// Equilibria, spectra and the frequency sweep of the uncontrolled model.
    Equilibria {
        #[command(flatten)]
        params: ParamArgs,
        /// Write the full analysis as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Skip the endemic point (allows sigma != gamma).
        #[arg(long)]
        no_endemic: bool,
    },
    /// Integrate the zero dynamics and check sum conservation and boundedness.
    Zerodyn {
        #[command(flatten)]
        params: ParamArgs,
        /// Start value of z2 (default N).
        #[arg(long)]
        z2: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        z3: f64,
        #[arg(long, default_value_t = 0.0)]
        z4: f64,
        #[arg(long, default_value_t = 1000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long = "N", default_value_t = 1000.0)]
    n: f64,
    #[arg(long, default_value_t = 0.01)]
    mu: f64,
    #[arg(long, default_value_t = 0.02)]
    omega: f64,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    gamma: f64,
}

impl ParamArgs {
    fn params(&self) -> anyhow::Result<ModelParams> {
        Ok(ModelParams::new(self.n, self.mu, self.omega, self.beta, self.sigma, self.gamma)?)
    }
}

fn run(cmd: Cmd) -> anyhow::Result<bool> {
    match cmd {
        Cmd::Simulate { scenario, out_dir, dt, t_end } => commands::simulate(&SimulateOpts { scenario, out_dir, dt, t_end }),
        Cmd::Verify { csv, scenario } => commands::verify(&csv, &scenario),
        Cmd::Equilibria { params, json, no_endemic } => commands::equilibria(&params.params()?, !no_endemic, json.as_deref()),
        Cmd::Zerodyn { params, z2, z3, z4, t_end, dt, out_dir } => {
            let p = params.params()?;
            commands::zerodyn(&p, &ZeroDynOpts { start: (z2.unwrap_or(p.n), z3, z4), t_end, dt, out_dir })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
