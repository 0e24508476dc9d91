//! Typed experiment configurations and their translation into library
//! objects. Unknown keys are rejected everywhere; every random quantity
//! requires an explicit seed (there are no wall-clock defaults).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use young_bsde::bsde::{
    BsdeProblem, DriftField, Driver, ForwardModel, RegressionSpec, TerminalCondition,
};
use young_bsde::error::{Error, Result};
use young_bsde::io::read_path_csv;
use young_bsde::montecarlo::SdeSpec;
use young_bsde::paths::{DiscretePath, TimeGrid};
use young_bsde::rpde::PdeProblem;
use young_bsde::signals::{generate_eta, EtaSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub horizon: f64,
    pub steps: usize,
}

impl GridCfg {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.horizon, self.steps)
    }
}

/// A path either loaded from CSV (relative to the config file) or generated
/// from a signal spec on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSourceCfg {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridCfg>,
}

impl PathSourceCfg {
    pub fn resolve(&self, base: &Path) -> Result<DiscretePath> {
        match (&self.csv, &self.eta) {
            (Some(file), None) => read_path_csv(&base.join(file)),
            (None, Some(spec)) => {
                let grid = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| Error::invalid("path source with 'eta' needs 'grid'"))?
                    .build()?;
                Ok(generate_eta(spec, &grid)?.path)
            }
            _ => Err(Error::invalid(
                "path source needs exactly one of 'csv' or 'eta' (+ 'grid')",
            )),
        }
    }
}

/// Scalar coefficient function x -> a x + b in its various degenerate forms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoeffCfg {
    Constant { c: f64 },
    Proportional { a: f64 },
    Affine { a: f64, b: f64 },
}

impl CoeffCfg {
    pub fn build(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        match *self {
            CoeffCfg::Constant { c } => Arc::new(move |_| c),
            CoeffCfg::Proportional { a } => Arc::new(move |x| a * x),
            CoeffCfg::Affine { a, b } => Arc::new(move |x| a * x + b),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            CoeffCfg::Constant { .. } => 0.0,
            CoeffCfg::Proportional { a } | CoeffCfg::Affine { a, .. } => a.abs(),
        }
    }
}

/// Young-drift vector field g with derivative bounds supplied by the catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldCfg {
    Constant { c: f64 },
    Linear { beta: f64 },
    Tanh,
    Sin,
}

impl FieldCfg {
    pub fn build(&self) -> DriftField {
        match *self {
            FieldCfg::Constant { c } => DriftField::constant(c),
            FieldCfg::Linear { beta } => DriftField::linear(beta),
            FieldCfg::Tanh => DriftField::tanh(),
            FieldCfg::Sin => DriftField::sin(),
        }
    }
}

/// Generator f(t, y, z); Lipschitz and zero bounds come with the shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriverCfg {
    Zero,
    Constant { c: f64 },
    LinearY { a: f64 },
    LinearZ { a: f64 },
    Affine { a: f64, b: f64, c: f64 },
}

impl DriverCfg {
    pub fn build(&self) -> Driver {
        match *self {
            DriverCfg::Zero => Driver::zero(),
            DriverCfg::Constant { c } => Driver::new(move |_, _, _| c, 0.0, c.abs()),
            DriverCfg::LinearY { a } => Driver::linear_in_y(a),
            DriverCfg::LinearZ { a } => Driver::linear_in_z(a),
            DriverCfg::Affine { a, b, c } => Driver::new(
                move |_, y, z| a * y + b * z[0] + c,
                a.abs() + b.abs(),
                c.abs(),
            ),
        }
    }
}

/// Terminal functionals of the forward state (coordinate 0 unless indexed).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminalCfg {
    Constant { c: f64 },
    Coord { index: usize },
    Call { strike: f64 },
    Tanh { scale: f64 },
    Sin { scale: f64 },
    Square,
}

impl TerminalCfg {
    pub fn build(&self, bound: f64) -> TerminalCondition {
        match *self {
            TerminalCfg::Constant { c } => TerminalCondition::new(move |_| c, bound),
            TerminalCfg::Coord { index } => {
                TerminalCondition::new(move |x: &[f64]| x[index.min(x.len() - 1)], bound)
            }
            TerminalCfg::Call { strike } => {
                TerminalCondition::new(move |x: &[f64]| (x[0] - strike).max(0.0), bound)
            }
            TerminalCfg::Tanh { scale } => {
                TerminalCondition::new(move |x: &[f64]| (scale * x[0]).tanh(), bound)
            }
            TerminalCfg::Sin { scale } => {
                TerminalCondition::new(move |x: &[f64]| (scale * x[0]).sin(), bound)
            }
            TerminalCfg::Square => TerminalCondition::new(|x: &[f64]| x[0] * x[0], bound),
        }
    }

    /// The same payoff as a scalar function, for PDE terminal data.
    pub fn build_scalar(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        let built = self.build(f64::INFINITY);
        Arc::new(move |x: f64| (built.payoff)(&[x]))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForwardCfg {
    Identity,
    Sde {
        drift: CoeffCfg,
        diffusion: CoeffCfg,
        x0: f64,
        #[serde(default)]
        start: f64,
    },
}

impl ForwardCfg {
    pub fn build(&self) -> ForwardModel {
        match self {
            ForwardCfg::Identity => ForwardModel::IdentityOnW,
            ForwardCfg::Sde {
                drift,
                diffusion,
                x0,
                start,
            } => {
                let b = drift.build();
                let s = diffusion.build();
                ForwardModel::Sde(SdeSpec::scalar(
                    move |x| b(x),
                    move |x| s(x),
                    *x0,
                    *start,
                ))
            }
        }
    }
}

fn default_inner_iters() -> usize {
    3
}

fn default_sweeps() -> usize {
    5
}

fn default_scheme() -> String {
    "backward".to_string()
}

fn default_bp_exponent() -> f64 {
    2.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsdeCfg {
    pub schema_version: String,
    pub seed: u64,
    pub grid: GridCfg,
    pub paths: usize,
    #[serde(default = "one")]
    pub brownian_dim: usize,
    pub forward: ForwardCfg,
    pub driver: DriverCfg,
    pub drift_fields: Vec<FieldCfg>,
    pub eta: PathSourceCfg,
    pub terminal: TerminalCfg,
    pub terminal_bound: f64,
    #[serde(default)]
    pub regression: RegressionSpec,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_inner_iters")]
    pub inner_iters: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_bp_exponent")]
    pub bp_exponent: f64,
    #[serde(default)]
    pub export_slices: bool,
}

fn one() -> usize {
    1
}

impl BsdeCfg {
    pub fn problem(&self, base: &Path) -> Result<(BsdeProblem, TimeGrid)> {
        let grid = self.grid.build()?;
        let eta = match (&self.eta.csv, &self.eta.eta) {
            // A bare spec without a grid samples the signal on the
            // simulation grid itself.
            (None, Some(spec)) if self.eta.grid.is_none() => generate_eta(spec, &grid)?.path,
            _ => self.eta.resolve(base)?,
        };
        let problem = BsdeProblem {
            grid: grid.clone(),
            driver: self.driver.build(),
            drift_fields: self.drift_fields.iter().map(FieldCfg::build).collect(),
            eta,
            terminal: self.terminal.build(self.terminal_bound),
            forward: self.forward.build(),
        };
        Ok((problem, grid))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvarCfg {
    pub schema_version: String,
    pub path: PathSourceCfg,
    pub exponents: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSweepCfg {
    pub cases: usize,
    pub seed: u64,
    pub nodes: usize,
    pub scale: f64,
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YoungCfg {
    pub schema_version: String,
    pub x: PathSourceCfg,
    pub y: PathSourceCfg,
    pub p: f64,
    pub q: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "one")]
    pub refinement: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma_sweep: Option<LemmaSweepCfg>,
}

fn default_mode() -> String {
    "exact-pl".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeCfg {
    pub schema_version: String,
    pub initial: f64,
    pub fields: Vec<FieldCfg>,
    pub eta: PathSourceCfg,
    #[serde(default = "default_direction")]
    pub direction: String,
    pub substeps: usize,
}

fn default_direction() -> String {
    "forward".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenEtaCfg {
    pub schema_version: String,
    pub eta: EtaSpec,
    pub grid: GridCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder_levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_exponents: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeCfg {
    pub schema_version: String,
    pub seed: u64,
    pub grid: GridCfg,
    pub paths: usize,
    pub drift: CoeffCfg,
    pub diffusion: CoeffCfg,
    pub x0: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub export_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdCfg {
    pub time_steps: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub x_cells: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

impl FdCfg {
    pub fn xgrid(&self) -> Result<Vec<f64>> {
        if !(self.x_max > self.x_min) || self.x_cells == 0 {
            return Err(Error::invalid("fd grid needs x_max > x_min and cells >= 1"));
        }
        Ok((0..=self.x_cells)
            .map(|k| self.x_min + (self.x_max - self.x_min) * k as f64 / self.x_cells as f64)
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McCfg {
    pub paths: usize,
    pub seed: u64,
    pub sim_steps: usize,
    pub eval_times: Vec<f64>,
    pub eval_xs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeCfg {
    pub schema_version: String,
    pub solver: String,
    pub horizon: f64,
    pub sigma: CoeffCfg,
    pub drift: CoeffCfg,
    pub driver: DriverCfg,
    pub drift_fields: Vec<FieldCfg>,
    pub terminal: TerminalCfg,
    pub terminal_bound: f64,
    pub terminal_lipschitz: f64,
    pub eta: PathSourceCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd: Option<FdCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McCfg>,
    #[serde(default)]
    pub regression: RegressionSpec,
    #[serde(default = "default_inner_iters")]
    pub inner_iters: usize,
}

impl PdeCfg {
    pub fn problem(&self, base: &Path) -> Result<PdeProblem> {
        let eta = self.eta.resolve(base)?;
        Ok(PdeProblem {
            sigma: self.sigma.build(),
            drift: self.drift.build(),
            driver: self.driver.build(),
            drift_fields: self.drift_fields.iter().map(FieldCfg::build).collect(),
            terminal: self.terminal.build_scalar(),
            terminal_bound: self.terminal_bound,
            terminal_lipschitz: self.terminal_lipschitz,
            eta,
            horizon: self.horizon,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyStabilityCfg {
    pub schema_version: String,
    pub bsde: BsdeCfg,
    pub ladder_levels: usize,
    pub ladder_q: f64,
    #[serde(default)]
    pub lipschitz_deltas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConvergenceCfg {
    pub schema_version: String,
    pub pde: PdeCfg,
    pub ladder_levels: usize,
    pub ladder_q: f64,
    pub probes: Vec<(f64, f64)>,
}

/// Parse a typed config from the (post-override) JSON value; serde failures
/// stay attached to field paths.
pub fn from_value<T: serde::de::DeserializeOwned>(value: &serde_json::Value) -> Result<T> {
    serde_json::from_value(value.clone())
        .map_err(|e| Error::invalid(format!("config error: {e}")))
}
