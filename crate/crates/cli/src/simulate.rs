use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use fracwave::frac_space::{Field, SpectralPlan};
use fracwave::solver::{blowup_monitor, run, Trajectory};
use fracwave::SolverConfig;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{usage, Failure};

pub const LONG_ABOUT: &str = "\
Integrate the equation with the semi-implicit pseudospectral scheme.

Parameters are resolved in three layers, later layers winning:
  1. built-in defaults
  2. the config file, flat `key = value` lines (`#` starts a comment)
  3. `--set key=value` flags

Keys: n gamma theta p points period dt steps amplitude u0_amplitude threshold
stride safety profile (gaussian|bracket|zero) width q forcing (memory|none) scheme.

Outputs, under --out: diagnostics.csv (t,E,dissipation,sup_norm,L2_norm,boundary_norm),
snapshots/u_<step>.bin and manifest.json. With --p-list each power gets its own
p_<value>/ directory and sweep.csv collects one verdict row per power.

Exit status: 0 ok, 2 usage or configuration error, 3 numerical abort
(including a time step above the stability budget).";

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Config file with `key = value` lines.
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set p=1.5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Sweep over these powers (comma separated) instead of the configured p.
    #[arg(long, value_delimiter = ',')]
    pub p_list: Option<Vec<f64>>,
    /// Output directory.
    #[arg(short = 'o', long = "out", default_value = "fracwave-out")]
    pub out: PathBuf,
    /// Write the manifest only.
    #[arg(long)]
    pub dry_run: bool,
    /// Worker threads for sweeps; 0 uses every logical core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub json: bool,
}

/// Outcome of one run.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub p: f64,
    pub blowup: bool,
    pub t_star: Option<f64>,
    pub growth_rate: f64,
    pub energy_monotone: bool,
    pub max_boundary_norm: f64,
    pub integral_u1: f64,
    pub abort: Option<String>,
}

impl Verdict {
    pub fn line(&self) -> String {
        match (self.blowup, self.t_star) {
            (true, Some(t)) => format!(
                "blow-up at t* = {t:.6}; growth rate {:.4}; max boundary norm {:e}",
                self.growth_rate, self.max_boundary_norm
            ),
            _ => format!("no blow-up; E monotone: {}", self.energy_monotone),
        }
    }

    fn csv_row(&self) -> String {
        format!(
            "{:?},{},{},{:?},{},{:?}\n",
            self.p,
            if self.blowup { "blow-up" } else { "bounded" },
            self.t_star.map(|t| format!("{t:?}")).unwrap_or_default(),
            self.growth_rate,
            self.energy_monotone,
            self.max_boundary_norm
        )
    }
}

pub const SWEEP_HEADER: &str = "p,verdict,t_star,growth_rate,E_monotone,max_boundary_norm\n";

pub fn resolve_config(file: Option<&Path>, overrides: &[String]) -> Result<SolverConfig, Failure> {
    let mut cfg = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            SolverConfig::from_kv_str(&text)?
        }
        None => SolverConfig::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run_dir(out: &Path, p: f64, sweep: bool) -> PathBuf {
    if sweep {
        out.join(format!("p_{p:?}"))
    } else {
        out.to_path_buf()
    }
}

/// Files a run writes, relative to the output directory.
pub fn planned_outputs(cfg: &SolverConfig, powers: &[f64], sweep: bool) -> Vec<String> {
    let stride = cfg.snapshot_stride.max(1);
    let mut steps: Vec<usize> = (0..=cfg.steps).step_by(stride).collect();
    if steps.last() != Some(&cfg.steps) {
        steps.push(cfg.steps);
    }
    let mut files = Vec::new();
    for &p in powers {
        let prefix = if sweep { format!("p_{p:?}/") } else { String::new() };
        files.push(format!("{prefix}diagnostics.csv"));
        files.extend(steps.iter().map(|s| format!("{prefix}snapshots/u_{s:06}.bin")));
    }
    if sweep {
        files.push("sweep.csv".into());
    }
    files
}

fn write_run(dir: &Path, cfg: &SolverConfig, traj: &Trajectory<f64>) -> Result<(), Failure> {
    fs::create_dir_all(dir.join("snapshots"))?;
    traj.write_csv(BufWriter::new(File::create(dir.join("diagnostics.csv"))?))?;
    let grid = cfg.grid()?;
    let plan = SpectralPlan::new(grid);
    for state in &traj.states {
        let step = (state.t / cfg.dt).round() as usize;
        let mut values = state.u_hat.values().to_vec();
        plan.inverse(&mut values);
        let field = Field::new(grid, values)?;
        let mut w = BufWriter::new(File::create(dir.join(format!("snapshots/u_{step:06}.bin")))?);
        field.write_binary(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn one_run(cfg: &SolverConfig, dir: &Path) -> Result<Verdict, Failure> {
    let traj = run(cfg)?;
    write_run(dir, cfg, &traj)?;
    let rep = blowup_monitor(&traj, cfg.blowup_threshold);
    let e = traj.energies();
    Ok(Verdict {
        p: cfg.p,
        blowup: rep.triggered,
        t_star: rep.t_star,
        growth_rate: rep.growth_rate,
        energy_monotone: e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10)),
        max_boundary_norm: traj
            .diagnostics
            .iter()
            .map(|d| d.boundary_norm)
            .fold(0.0, f64::max),
        integral_u1: traj.init.integral_u1,
        abort: traj.abort.as_ref().map(|a| a.reason.clone()),
    })
}

/// Runs (or plans) the resolved configuration into `out`, returning the verdicts.
pub fn execute(
    cfg: &SolverConfig,
    p_list: Option<&[f64]>,
    out: &Path,
    jobs: usize,
    dry_run: bool,
) -> Result<(RunManifest, Vec<Verdict>), Failure> {
    let start = Instant::now();
    let sweep = p_list.is_some();
    let powers: Vec<f64> = p_list.map(<[f64]>::to_vec).unwrap_or_else(|| vec![cfg.p]);
    let configs: Vec<SolverConfig> = powers
        .iter()
        .map(|&p| {
            let c = SolverConfig { p, ..cfg.clone() };
            c.validate().map(|_| c)
        })
        .collect::<fracwave::Result<_>>()?;
    fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("simulate", cfg, p_list, planned_outputs(cfg, &powers, sweep), dry_run);
    if dry_run {
        manifest.wall_time_seconds = start.elapsed().as_secs_f64();
        manifest.write(out)?;
        return Ok((manifest, Vec::new()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| usage(format!("cannot start {jobs} workers: {e}")))?;
    let verdicts: Vec<Verdict> = pool.install(|| {
        configs
            .par_iter()
            .map(|c| one_run(c, &run_dir(out, c.p, sweep)))
            .collect::<Result<_, Failure>>()
    })?;
    if sweep {
        let mut s = String::from(SWEEP_HEADER);
        verdicts.iter().for_each(|v| s.push_str(&v.csv_row()));
        fs::write(out.join("sweep.csv"), s)?;
    }
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok((manifest, verdicts))
}

pub fn report(
    out: &mut impl Write,
    manifest: &RunManifest,
    verdicts: &[Verdict],
    json: bool,
) -> Result<(), Failure> {
    if json {
        let v = serde_json::json!({"manifest": manifest, "verdicts": verdicts});
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        return Ok(());
    }
    if manifest.dry_run {
        writeln!(out, "dry run: manifest written, {} planned outputs", manifest.outputs.len())?;
        return Ok(());
    }
    if manifest.sweep.is_some() {
        write!(out, "{SWEEP_HEADER}")?;
        for v in verdicts {
            write!(out, "{}", v.csv_row())?;
        }
    } else if let Some(v) = verdicts.first() {
        writeln!(out, "integral of u1: {:e}; max boundary norm {:e}", v.integral_u1, v.max_boundary_norm)?;
        writeln!(out, "{}", v.line())?;
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs, out: &mut impl Write) -> Result<u8, Failure> {
    let cfg = resolve_config(args.config.as_deref(), &args.overrides)?;
    let (manifest, verdicts) = execute(&cfg, args.p_list.as_deref(), &args.out, args.jobs, args.dry_run)?;
    report(out, &manifest, &verdicts, args.json)?;
    Ok(0)
}
