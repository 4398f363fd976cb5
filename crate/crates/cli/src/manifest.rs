use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use fracwave::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::simulate::{execute, report};
use crate::{usage, Failure};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one invocation; outputs are relative to the manifest's directory.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    /// Resolved configuration as `key = value` lines.
    pub parameters: String,
    pub sweep: Option<Vec<f64>>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_seconds: f64,
    pub dry_run: bool,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        cfg: &SolverConfig,
        sweep: Option<&[f64]>,
        outputs: Vec<String>,
        dry_run: bool,
    ) -> Self {
        Self {
            subcommand: subcommand.into(),
            parameters: cfg.to_kv_string(),
            sweep: sweep.map(<[f64]>::to_vec),
            outputs,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_seconds: 0.0,
            dry_run,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("malformed manifest: {e}")))
    }
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Path to a manifest.json.
    pub manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub json: bool,
}

pub fn replay(args: ReplayArgs, out: &mut impl Write) -> Result<u8, Failure> {
    let m = RunManifest::read(&args.manifest)?;
    if m.subcommand != "simulate" {
        return Err(usage(format!("cannot replay subcommand `{}`", m.subcommand)));
    }
    let cfg = SolverConfig::from_kv_str(&m.parameters)?;
    let dir = args.out.unwrap_or_else(|| {
        args.manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    let (manifest, verdicts) = execute(&cfg, m.sweep.as_deref(), &dir, args.jobs, m.dry_run)?;
    report(out, &manifest, &verdicts, args.json)?;
    Ok(0)
}
