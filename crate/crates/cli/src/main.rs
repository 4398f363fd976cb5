use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracwave::exponents::{classify, default_gamma_grid, p_bar, region_atlas};
use fracwave::verify::{run_suite, SuiteOptions, SUITES};
use fracwave::nonexistence_probe::{probe_trajectory, SpaceTimeSamples};
use fracwave::{Error, ExponentInputs, FracParams};

mod manifest;
mod simulate;

/// Exit status for usage and parameter errors.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for numerical aborts.
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "fracwave", version, about = "Critical exponents, verification suites and simulations for a damped wave-plate equation with memory nonlinearity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Critical exponents for one parameter set, or the gamma atlas.
    Exponents(ExponentsArgs),
    /// Run a named property suite and print a pass/fail table.
    Verify(VerifyArgs),
    /// Integrate the equation and report diagnostics and the blow-up verdict.
    #[command(long_about = simulate::LONG_ABOUT)]
    Simulate(simulate::SimulateArgs),
    /// Simulate, then evaluate the five test-function integrals and their bounds on the run.
    Probe(ProbeArgs),
    /// Re-run the computation recorded in a manifest.
    Replay(manifest::ReplayArgs),
}

#[derive(Args, Debug)]
struct ExponentsArgs {
    /// Space dimension.
    #[arg(short = 'n', long = "dim")]
    n: usize,
    /// Memory exponent in (0, 1]; required unless --atlas.
    #[arg(long)]
    gamma: Option<f64>,
    /// Damping order in [0, 1/2).
    #[arg(long)]
    theta: f64,
    /// Regularity index of the data.
    #[arg(long)]
    s: Option<f64>,
    /// Classify this power against the critical exponent.
    #[arg(long)]
    p: Option<f64>,
    /// Tabulate the exponents over a gamma grid instead.
    #[arg(long)]
    atlas: bool,
    /// Number of gamma midpoints in the atlas.
    #[arg(long, default_value_t = 512)]
    gamma_count: usize,
    /// Output file (atlas only); stdout otherwise.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    /// JSON output (the atlas defaults to CSV).
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suite name.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    suite: String,
    /// Refinement levels for the weak-form suite.
    #[arg(long, default_value_t = 3)]
    refine: u32,
    /// Scaling exponents T = R^eta (comma separated); defaults to 0, 2θ, 2(1−θ), 5.
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[arg(short = 'n', long = "dim", default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.2)]
    theta: f64,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    /// Config file with `key = value` lines (see `simulate --help`).
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Spatial scale R of the test function.
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
    /// Temporal cutoff exponent; defaults to (α+2)p′ + 1.
    #[arg(long)]
    beta: Option<f64>,
    /// Fit |I_j| against R with T = R^eta over --radii.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Restrict the spatial quadrature to |x| ≤ 8R.
    #[arg(long)]
    truncate: bool,
    #[arg(long)]
    json: bool,
}

fn probe(args: ProbeArgs, out: &mut impl Write) -> Result<u8, Failure> {
    let mut cfg = simulate::resolve_config(args.config.as_deref(), &args.overrides)?;
    cfg.snapshot_stride = 1;
    let traj = fracwave::solver::run(&cfg)?;
    if let Some(a) = &traj.abort {
        return Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("run aborted at t = {}: {}", a.t, a.reason),
        });
    }
    let radius = args.truncate.then_some(8.0 * args.radius);
    let (quad, u) = SpaceTimeSamples::from_trajectory(&traj, cfg.dt, radius)?;
    let fit = match (args.eta, args.radii.as_deref()) {
        (Some(eta), Some(r)) => Some((eta, r)),
        (None, None) => None,
        _ => return Err(usage("--eta and --radii go together")),
    };
    let rep = probe_trajectory(&u, &quad, &cfg.params()?, args.radius, args.beta, fit)?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&rep)?)?;
    } else {
        writeln!(out, "T = {:?}, R = {:?}, beta = {:?}, C_eps = {:e}", rep.t_end, rep.radius, rep.beta, rep.c_epsilon)?;
        writeln!(out, "I_main = {:e}", rep.i_main)?;
        writeln!(out, "j,sigma,I,bound")?;
        for j in 0..5 {
            writeln!(
                out,
                "{},{:?},{:e},{:e}",
                fracwave::nonexistence_probe::TERMS[j].0,
                fracwave::nonexistence_probe::term_sigma(j, cfg.theta),
                rep.integrals[j],
                rep.bounds[j]
            )?;
        }
        if let Some(f) = &rep.fits {
            out.write_all(f.to_csv().as_bytes())?;
        }
        writeln!(
            out,
            "all bounded: {}; master inequality: {}; master exponent {:.6}",
            rep.verdict.all_bounded, rep.verdict.master_holds, rep.verdict.master_exponent
        )?;
    }
    Ok(0)
}

/// Error with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter { .. }
            | Error::Config(_)
            | Error::Domain(_)
            | Error::Regime(_)
            | Error::MeshMismatch(_) => EXIT_USAGE,
            Error::StabilityBudget { .. }
            | Error::NonFinite { .. }
            | Error::QuadratureNonConvergence { .. }
            | Error::DivergentTail(_)
            | Error::FitRejected(_)
            | Error::MeshTooCoarse { .. } => EXIT_NUMERICAL,
            Error::Io(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

pub fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn exponents(args: ExponentsArgs, out: &mut impl Write) -> Result<u8, Failure> {
    if args.atlas {
        let atlas = region_atlas(args.n, args.theta, args.s, &default_gamma_grid::<f64>(args.gamma_count))?;
        let text = if args.json { atlas.to_json() + "\n" } else { atlas.to_csv() };
        match args.output {
            Some(path) => std::fs::write(path, text)?,
            None => out.write_all(text.as_bytes())?,
        }
        return Ok(0);
    }
    let gamma = args
        .gamma
        .ok_or_else(|| usage("missing required flag `--gamma` (only --atlas may omit it)"))?;
    let inputs = ExponentInputs::new(args.n, gamma, args.theta, args.s)?;
    let report = p_bar(&inputs)?;
    let value = match args.p {
        Some(p) => {
            if !(p > 1.0) {
                return Err(Error::InvalidParameter {
                    name: "p",
                    reason: format!("must exceed 1, got {p}"),
                }
                .into());
            }
            serde_json::json!({"report": report, "classification": classify(&inputs, p)?})
        }
        None => serde_json::to_value(&report)?,
    };
    let text = serde_json::to_string_pretty(&value)? + "\n";
    match args.output {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}

fn verify(args: VerifyArgs, out: &mut impl Write) -> Result<u8, Failure> {
    let opts = SuiteOptions {
        refine: args.refine,
        params: FracParams::new(args.n, args.gamma, args.theta, args.p)?,
        etas: args.eta,
    };
    let report = run_suite(&args.suite, &opts)?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        out.write_all(report.table().as_bytes())?;
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Exponents(a) => exponents(a, &mut out),
        Command::Verify(a) => verify(a, &mut out),
        Command::Simulate(a) => simulate::simulate(a, &mut out),
        Command::Probe(a) => probe(a, &mut out),
        Command::Replay(a) => manifest::replay(a, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
