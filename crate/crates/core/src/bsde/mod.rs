//! Least-squares Monte Carlo solution of backward stochastic differential
//! equations carrying a pathwise Young drift,
//!
//!   Y_t = xi + int_t^T f(r, Y_r, Z_r) dr + int_t^T g(Y_r) d eta_r
//!            - int_t^T Z_r dW_r,
//!
//! where eta is a deterministic path of finite q-variation (q < 2) and the
//! d eta integral is discretized by left-point sums on the simulation grid.
//! Two schemes are provided: backward induction with a per-cell semi-implicit
//! fixpoint ([`solve_backward`]) and global Picard sweeps of the
//! terminal-payload map ([`solve_picard`]), plus empirical estimators of the
//! process norms the theory is phrased in and the diagnostic checks of the
//! comparison, stability and terminal-continuity properties.

mod diagnostics;
mod solve;

pub use diagnostics::*;
pub use solve::*;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::{PathEnsemble, SdeSpec};
use crate::paths::{DiscretePath, TimeGrid};
pub use crate::regression::RegressionSpec;

/// Generator f(t, y, z) with its reported Lipschitz constant in (y, z) and a
/// bound on |f(t, 0, 0)|.
#[derive(Clone)]
pub struct Driver {
    pub f: Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>,
    pub lipschitz: f64,
    pub zero_bound: f64,
}

impl Driver {
    pub fn new(
        f: impl Fn(f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        zero_bound: f64,
    ) -> Self {
        Driver {
            f: Arc::new(f),
            lipschitz,
            zero_bound,
        }
    }

    pub fn zero() -> Self {
        Driver::new(|_, _, _| 0.0, 0.0, 0.0)
    }

    /// f(t, y, z) = a y.
    pub fn linear_in_y(a: f64) -> Self {
        Driver::new(move |_, y, _| a * y, a.abs(), 0.0)
    }

    /// f(t, y, z) = a z_1.
    pub fn linear_in_z(a: f64) -> Self {
        Driver::new(move |_, _, z| a * z[0], a.abs(), 0.0)
    }

    fn validate(&self) -> Result<()> {
        if !self.lipschitz.is_finite() || self.lipschitz < 0.0 {
            return Err(Error::invalid("driver Lipschitz constant must be finite and >= 0"));
        }
        if !self.zero_bound.is_finite() || self.zero_bound < 0.0 {
            return Err(Error::invalid("driver zero bound must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One channel of the Young drift: a C^2 scalar field with reported
/// derivative bounds. The bounds feed the cell-contraction guard and the
/// composition estimate; they are trusted, not verified.
#[derive(Clone)]
pub struct DriftField {
    pub g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dg_bound: f64,
    pub d2g_bound: f64,
}

impl DriftField {
    pub fn new(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg_bound: f64,
        d2g_bound: f64,
    ) -> Self {
        DriftField {
            g: Arc::new(g),
            dg_bound,
            d2g_bound,
        }
    }

    pub fn constant(c: f64) -> Self {
        DriftField::new(move |_| c, 0.0, 0.0)
    }

    /// g(y) = beta y.
    pub fn linear(beta: f64) -> Self {
        DriftField::new(move |y| beta * y, beta.abs(), 0.0)
    }

    pub fn tanh() -> Self {
        // max |d^2/dy^2 tanh| = 4 / (3 sqrt(3)).
        DriftField::new(|y: f64| y.tanh(), 1.0, 4.0 / (3.0 * 3.0_f64.sqrt()))
    }

    pub fn sin() -> Self {
        DriftField::new(|y: f64| y.sin(), 1.0, 1.0)
    }

    fn validate(&self) -> Result<()> {
        if !self.dg_bound.is_finite() || !self.d2g_bound.is_finite() {
            return Err(Error::invalid("drift field derivative bounds must be finite"));
        }
        Ok(())
    }
}

/// Bounded terminal functional of the forward state at T; evaluation clamps
/// at the declared essential bound.
#[derive(Clone)]
pub struct TerminalCondition {
    pub payoff: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub bound: f64,
}

impl TerminalCondition {
    pub fn new(payoff: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, bound: f64) -> Self {
        TerminalCondition {
            payoff: Arc::new(payoff),
            bound,
        }
    }

    pub fn constant(c: f64) -> Self {
        TerminalCondition::new(move |_| c, c.abs())
    }

    pub fn eval(&self, state: &[f64]) -> f64 {
        (self.payoff)(state).clamp(-self.bound, self.bound)
    }

    fn validate(&self) -> Result<()> {
        if !self.bound.is_finite() || self.bound < 0.0 {
            return Err(Error::invalid("terminal bound must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Forward state feeding the regression basis and the terminal functional.
#[derive(Clone)]
pub enum ForwardModel {
    /// X = W itself.
    IdentityOnW,
    /// X from an Euler-Maruyama simulation of the given diffusion.
    Sde(SdeSpec),
}

/// All inputs of the Young-drift BSDE on a fixed simulation grid. The driving
/// path eta is merged onto the grid by linear interpolation when it lives on
/// a different one.
#[derive(Clone)]
pub struct BsdeProblem {
    pub grid: TimeGrid,
    pub driver: Driver,
    pub drift_fields: Vec<DriftField>,
    pub eta: DiscretePath,
    pub terminal: TerminalCondition,
    pub forward: ForwardModel,
}

impl BsdeProblem {
    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.driver.validate()?;
        self.terminal.validate()?;
        for field in &self.drift_fields {
            field.validate()?;
        }
        if self.drift_fields.len() != self.eta.dim() {
            return Err(Error::invalid(format!(
                "{} drift fields for a driving path of dimension {}",
                self.drift_fields.len(),
                self.eta.dim()
            )));
        }
        Ok(())
    }

    /// Max of the per-channel first-derivative bounds.
    pub fn dg_max(&self) -> f64 {
        self.drift_fields
            .iter()
            .map(|f| f.dg_bound)
            .fold(0.0, f64::max)
    }
}

/// Which solver produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeTag {
    Backward,
    Picard,
}

/// Per-step regression diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    pub node: usize,
    pub condition: f64,
    pub residual_rms: f64,
    pub ridge_fallback: bool,
    pub dropped_columns: usize,
    pub kept_columns: usize,
    /// Largest hat-matrix diagonal of the slice design; fitted-value noise
    /// at the worst design point scales like residual_rms * sqrt(max_hat).
    pub max_hat: f64,
}

/// Monte-Carlo ensembles for (Y, Z) on the grid. Y and Z are stored
/// node-major so a time slice is contiguous; Z at the last node is zero by
/// convention (it parametrizes the cell [t_i, t_{i+1})).
pub struct BsdeSolution {
    pub grid: TimeGrid,
    pub paths: usize,
    pub dim_w: usize,
    pub start_index: usize,
    pub scheme: SchemeTag,
    pub seed: u64,
    pub steps: Vec<StepDiagnostics>,
    /// Forward states the conditional expectations condition on.
    pub forward: PathEnsemble,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl BsdeSolution {
    /// Assemble a solution from raw slices (node-major y of length
    /// nodes * paths, z of length nodes * paths * dim_w).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid: TimeGrid,
        paths: usize,
        dim_w: usize,
        y: Vec<f64>,
        z: Vec<f64>,
        forward: PathEnsemble,
        scheme: SchemeTag,
        seed: u64,
    ) -> Result<Self> {
        let n = grid.node_count();
        if y.len() != n * paths || z.len() != n * paths * dim_w {
            return Err(Error::invalid("solution array sizes do not match the grid"));
        }
        Ok(BsdeSolution {
            grid,
            paths,
            dim_w,
            start_index: 0,
            scheme,
            seed,
            steps: Vec::new(),
            forward,
            y,
            z,
        })
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    /// Y values of all paths at one grid node.
    pub fn y_slice(&self, node: usize) -> &[f64] {
        &self.y[node * self.paths..(node + 1) * self.paths]
    }

    pub fn y_at(&self, path: usize, node: usize) -> f64 {
        self.y[node * self.paths + path]
    }

    /// Z vector of one path at one node.
    pub fn z_at(&self, path: usize, node: usize) -> &[f64] {
        let base = (node * self.paths + path) * self.dim_w;
        &self.z[base..base + self.dim_w]
    }

    /// |Z|^2 of one path at one node.
    pub fn z_norm_sq(&self, path: usize, node: usize) -> f64 {
        self.z_at(path, node).iter().map(|v| v * v).sum()
    }

    /// Ensemble mean of Y at the start node.
    pub fn y0_mean(&self) -> f64 {
        let s = self.y_slice(self.start_index);
        s.iter().sum::<f64>() / self.paths as f64
    }

    /// Conservative standard error for the start-value estimate: the fitted
    /// slice at the start node is mean-preserving, so the Monte-Carlo noise
    /// of y0_mean is at most the largest downstream slice spread over
    /// sqrt(paths). (The start slice itself can be regression-degenerate,
    /// e.g. when the forward state starts deterministically.)
    pub fn y0_se(&self) -> f64 {
        self.y0_spread() / (self.paths as f64).sqrt()
    }

    /// Largest sample standard deviation of a Y slice at or after the start.
    pub fn y0_spread(&self) -> f64 {
        let n = self.node_count();
        let mut worst = 0.0_f64;
        for i in self.start_index..n {
            let s = self.y_slice(i);
            let mean = s.iter().sum::<f64>() / self.paths as f64;
            let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (self.paths as f64 - 1.0).max(1.0);
            worst = worst.max(var.sqrt());
        }
        worst
    }
}
