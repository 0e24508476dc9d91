//! Batch front door for the library: JSON experiment configs in, CSV/JSON
//! results plus a run manifest out. Identical config and seed produce
//! byte-identical result files; the worker count only affects wall time.

pub mod config;
pub mod manifest;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use young_bsde::error::{Error, Result};

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(
    name = "ybsde",
    version,
    about = "Variation norms, Young integrals and ODEs, and Monte-Carlo solvers \
             for BSDEs with a Young drift, driven by JSON experiment configs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
}

#[derive(Subcommand, Debug)]
pub enum CommandKind {
    /// Variation norms and a per-exponent profile of a path
    Pvar(CommonArgs),
    /// Young integral, the a-priori bound report, optional estimate sweeps
    Young(CommonArgs),
    /// Controlled ODE driven by a path, with a Richardson error report
    Ode(CommonArgs),
    /// Generate a driving signal, optionally with a smoothing ladder
    GenEta(CommonArgs),
    /// Forward SDE simulation summary
    Sde(CommonArgs),
    /// Solve the Young-drift BSDE and report norms and diagnostics
    Bsde(CommonArgs),
    /// Solve the PDE by finite differences or the stochastic representation
    Pde(CommonArgs),
    /// Driving-path stability and terminal-data continuity tables
    StudyStability(CommonArgs),
    /// Smooth-approximation convergence table for the rough PDE
    StudyConvergence(CommonArgs),
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Pvar(_) => "pvar",
            CommandKind::Young(_) => "young",
            CommandKind::Ode(_) => "ode",
            CommandKind::GenEta(_) => "gen-eta",
            CommandKind::Sde(_) => "sde",
            CommandKind::Bsde(_) => "bsde",
            CommandKind::Pde(_) => "pde",
            CommandKind::StudyStability(_) => "study-stability",
            CommandKind::StudyConvergence(_) => "study-convergence",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            CommandKind::Pvar(a)
            | CommandKind::Young(a)
            | CommandKind::Ode(a)
            | CommandKind::GenEta(a)
            | CommandKind::Sde(a)
            | CommandKind::Bsde(a)
            | CommandKind::Pde(a)
            | CommandKind::StudyStability(a)
            | CommandKind::StudyConvergence(a) => a,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Experiment configuration (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key, e.g. --set grid.steps=400 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory for result files and the manifest
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (outputs do not depend on this)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Override the top-level seed field
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Apply one `a.b.c=value` override to the config tree; the value parses as
/// JSON when possible and falls back to a string.
fn apply_override(root: &mut Value, entry: &str) -> Result<()> {
    let (key_path, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override '{entry}' is not KEY=VALUE")))?;
    let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = key_path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        if !node.is_object() {
            return Err(Error::invalid(format!(
                "override '{key_path}': '{}' is not an object",
                segments[..i].join(".")
            )));
        }
        let map = node.as_object_mut().unwrap();
        if i + 1 == segments.len() {
            map.insert(segment.to_string(), parsed);
            return Ok(());
        }
        node = map
            .entry(segment.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split produces at least one segment")
}

fn load_config(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::invalid(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Run one subcommand end to end: manifest first (marked failed), then the
/// computation, then result files, then the manifest flipped to ok.
pub fn execute(command: &CommandKind) -> Result<()> {
    let args = command.args();
    if let Some(workers) = args.workers {
        // Best effort: the global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }

    let mut value = load_config(&args.config)?;
    for entry in &args.set {
        apply_override(&mut value, entry)?;
    }
    if let Some(seed) = args.seed {
        apply_override(&mut value, &format!("seed={seed}"))?;
    }

    fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new(command.name(), value.clone());
    manifest.write(&args.out)?;

    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let outputs = run::dispatch(command.name(), &value, &base, &mut manifest)?;
    for (name, contents) in &outputs {
        fs::write(args.out.join(name), contents)?;
        manifest.outputs.push(name.clone());
    }
    manifest.status = "ok".to_string();
    manifest.write(&args.out)?;
    Ok(())
}

/// Process exit code for an error: 2 for validation problems, 3 for
/// numerical aborts, 1 for environment failures.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::InvalidInput(_) => 2,
        Error::Numerical(_) => 3,
        Error::Io(_) => 1,
    }
}
