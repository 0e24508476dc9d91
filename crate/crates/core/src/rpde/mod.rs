//! Stochastic representation of the scalar semilinear PDE driven by a finite
//! q-variation path: the rough solution is defined operationally as the value
//! of the Young-drift BSDE started from the forward diffusion, u(s, x) =
//! Y^{s,x}_s, while the finite-difference solver of [`fd_reference_solve`]
//! plays the role of the smooth approximations. A convergence study along a
//! mollification ladder, a modulus-of-continuity check, and scalar Young ODE
//! barrier bounds complete the picture.

mod fd;

pub use fd::*;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::bsde::{
    solve_backward_from, BsdeProblem, DriftField, Driver, ForwardModel, RegressionSpec,
    TerminalCondition,
};
use crate::error::{Error, Result};
use crate::montecarlo::{sample_brownian, SdeSpec};
use crate::paths::{pvar_norm, var_distance, DiscretePath, TimeGrid, Window};
use crate::young::{ode_solve, OdeDirection, OdeSolution, OdeSpec};

/// Scalar semilinear problem: forward coefficients, generator, Young drift
/// fields, terminal function with its reported bounds, and the driving path.
#[derive(Clone)]
pub struct PdeProblem {
    pub sigma: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub drift: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub driver: Driver,
    pub drift_fields: Vec<DriftField>,
    /// Terminal function h, bounded uniformly continuous.
    pub terminal: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub terminal_bound: f64,
    pub terminal_lipschitz: f64,
    pub eta: DiscretePath,
    pub horizon: f64,
}

impl PdeProblem {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("PDE horizon must be > 0"));
        }
        if !self.terminal_bound.is_finite() || self.terminal_bound < 0.0 {
            return Err(Error::invalid("terminal bound must be finite and >= 0"));
        }
        if !self.terminal_lipschitz.is_finite() || self.terminal_lipschitz < 0.0 {
            return Err(Error::invalid("terminal Lipschitz bound must be finite and >= 0"));
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
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeMetadata {
    pub scheme: String,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub warnings: Vec<String>,
}

/// u values on a time x space grid, row-major in time. Monte-Carlo solutions
/// also carry the sample spread of the start-value estimate per cell.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub spread: Option<Vec<f64>>,
    pub metadata: PdeMetadata,
}

impl PdeSolution {
    pub fn value(&self, time_idx: usize, x_idx: usize) -> f64 {
        self.values[time_idx * self.xs.len() + x_idx]
    }

    /// Value at a (t, x) pair that must match grid nodes.
    pub fn value_at(&self, t: f64, x: f64) -> Result<f64> {
        let ti = self
            .times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .ok_or_else(|| Error::invalid(format!("time {t} is not a solution node")))?;
        let xi = self
            .xs
            .iter()
            .position(|&s| (s - x).abs() <= 1e-9 * (1.0 + x.abs()))
            .ok_or_else(|| Error::invalid(format!("position {x} is not a solution node")))?;
        Ok(self.value(ti, xi))
    }
}

/// Monte-Carlo budget for the representation solver.
#[derive(Debug, Clone, Copy)]
pub struct McParams {
    pub paths: usize,
    pub seed: u64,
}

fn union_times(horizon: f64, sim_cells: usize, inserts: &[f64]) -> Result<TimeGrid> {
    let mut times: Vec<f64> = (0..=sim_cells)
        .map(|k| {
            if k == sim_cells {
                horizon
            } else {
                horizon * k as f64 / sim_cells as f64
            }
        })
        .collect();
    for &t in inserts {
        if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::invalid(format!(
                "evaluation time {t} outside [0, {horizon}]"
            )));
        }
        times.push(t.min(horizon));
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + horizon));
    TimeGrid::new(times)
}

/// Representation solve: for every evaluation time s and space node x,
/// simulate the forward diffusion from (s, x) on a shared Brownian ensemble,
/// set the terminal condition h(X_T), solve the Young-drift BSDE backward on
/// [s, T] and record u(s, x) = Y^{s,x}_s together with its sample spread.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_solve(
    problem: &PdeProblem,
    eval_times: &[f64],
    xgrid: &[f64],
    sim_cells: usize,
    mc: McParams,
    regression: &RegressionSpec,
    inner_iters: usize,
) -> Result<PdeSolution> {
    problem.validate()?;
    if eval_times.is_empty() || xgrid.is_empty() {
        return Err(Error::invalid("need at least one evaluation time and node"));
    }
    if sim_cells == 0 {
        return Err(Error::invalid("sim_cells must be >= 1"));
    }
    let grid = union_times(problem.horizon, sim_cells, eval_times)?;
    let ensemble = sample_brownian(&grid, mc.paths, 1, mc.seed)?;

    let mut times: Vec<f64> = eval_times.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let jobs: Vec<(usize, usize)> = (0..times.len())
        .flat_map(|ti| (0..xgrid.len()).map(move |xi| (ti, xi)))
        .collect();

    let results: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(ti, xi)| {
            let s = times[ti].min(problem.horizon);
            let x = xgrid[xi];
            let start = grid
                .index_of(s)
                .ok_or_else(|| Error::invalid(format!("time {s} missing from the grid")))?;
            if start == grid.node_count() - 1 {
                return Ok(((problem.terminal)(x), 0.0));
            }
            let sigma = Arc::clone(&problem.sigma);
            let drift = Arc::clone(&problem.drift);
            let h = Arc::clone(&problem.terminal);
            let bound = problem.terminal_bound;
            let bsde = BsdeProblem {
                grid: grid.clone(),
                driver: problem.driver.clone(),
                drift_fields: problem.drift_fields.clone(),
                eta: problem.eta.clone(),
                terminal: TerminalCondition::new(move |state: &[f64]| h(state[0]), bound),
                forward: ForwardModel::Sde(SdeSpec::scalar(
                    move |y| drift(y),
                    move |y| sigma(y),
                    x,
                    s,
                )),
            };
            let sol = solve_backward_from(&bsde, &ensemble, regression, inner_iters, start)?;
            Ok((sol.y0_mean(), sol.y0_spread()))
        })
        .collect();

    let mut values = vec![0.0_f64; times.len() * xgrid.len()];
    let mut spread = vec![0.0_f64; times.len() * xgrid.len()];
    for (&(ti, xi), r) in jobs.iter().zip(results) {
        let (v, s) = r?;
        values[ti * xgrid.len() + xi] = v;
        spread[ti * xgrid.len() + xi] = s;
    }

    Ok(PdeSolution {
        times,
        xs: xgrid.to_vec(),
        values,
        spread: Some(spread),
        metadata: PdeMetadata {
            scheme: "feynman-kac".to_string(),
            seed: Some(mc.seed),
            paths: Some(mc.paths),
            warnings: Vec::new(),
        },
    })
}

/// One row of the rough-convergence study. `cauchy_gap` is the probe-max
/// distance to the previous level (absent for the first level), `mc_gap` the
/// probe-max distance to the Monte-Carlo rough solution.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub level: usize,
    pub qvar_distance: f64,
    pub cauchy_gap: Option<f64>,
    pub mc_gap: f64,
}

/// Grids and budgets for [`rough_convergence_study`].
#[derive(Clone)]
pub struct ConvergenceStudyConfig {
    pub fd_tgrid: TimeGrid,
    pub fd_xgrid: Vec<f64>,
    pub theta: f64,
    pub sim_cells: usize,
    pub mc: McParams,
    pub regression: RegressionSpec,
    pub inner_iters: usize,
    pub q: f64,
}

/// Solve the finite-difference approximation per smoothed level and the
/// Monte-Carlo representation with the rough path itself; report per level
/// the q-variation distance of the level path to the rough one, the Cauchy
/// gap between consecutive levels and the gap to the Monte-Carlo values, all
/// maximized over the probe points.
pub fn rough_convergence_study(
    problem: &PdeProblem,
    eta_levels: &[DiscretePath],
    probes: &[(f64, f64)],
    config: &ConvergenceStudyConfig,
) -> Result<Vec<ConvergenceRow>> {
    if eta_levels.len() < 3 {
        return Err(Error::invalid("convergence study needs at least 3 levels"));
    }
    if probes.is_empty() {
        return Err(Error::invalid("convergence study needs probe points"));
    }

    let eval_times: Vec<f64> = {
        let mut ts: Vec<f64> = probes.iter().map(|p| p.0).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        ts
    };
    let eval_xs: Vec<f64> = {
        let mut xs: Vec<f64> = probes.iter().map(|p| p.1).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        xs
    };

    let mc_solution = feynman_kac_solve(
        problem,
        &eval_times,
        &eval_xs,
        config.sim_cells,
        config.mc,
        &config.regression,
        config.inner_iters,
    )?;

    let mut rows = Vec::with_capacity(eta_levels.len());
    let mut previous: Option<Vec<f64>> = None;
    for (level, eta_n) in eta_levels.iter().enumerate() {
        let mut smooth = problem.clone();
        smooth.eta = eta_n.clone();
        let fd = fd_reference_solve(&smooth, &config.fd_tgrid, &config.fd_xgrid, config.theta)?;

        let at_probes: Vec<f64> = probes
            .iter()
            .map(|&(t, x)| fd.value_at(t, x))
            .collect::<Result<_>>()?;
        let mc_gap = probes
            .iter()
            .zip(&at_probes)
            .map(|(&(t, x), &v)| (v - mc_solution.value_at(t, x).unwrap()).abs())
            .fold(0.0, f64::max);
        let cauchy_gap = previous.as_ref().map(|prev| {
            prev.iter()
                .zip(&at_probes)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
        rows.push(ConvergenceRow {
            level,
            qvar_distance: var_distance(eta_n, &problem.eta, config.q)?,
            cauchy_gap,
            mc_gap,
        });
        previous = Some(at_probes);
    }
    Ok(rows)
}

/// Probe pairs for [`modulus_check`]: spatial pairs share a time index,
/// temporal pairs share a space index.
#[derive(Debug, Clone, Default)]
pub struct ModulusProbes {
    /// (time index, space index, second space index)
    pub spatial: Vec<(usize, usize, usize)>,
    /// (time index, later time index, space index)
    pub temporal: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct ModulusConstants {
    pub spatial: f64,
    pub temporal: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ModulusReport {
    /// Smallest constants that make every probe inequality hold.
    pub fitted: ModulusConstants,
    /// Whether the reused constants (when given) covered every probe.
    pub satisfied: bool,
}

/// Fit or verify the continuity moduli
/// |u(s, x) - u(s, x')| <= K |x - x'| and
/// |u(s + d, x) - u(s, x)| <= K' (d^{1/2} + d + ||eta||_{q-var;[s,s+d]}).
pub fn modulus_check(
    solution: &PdeSolution,
    eta: &DiscretePath,
    q: f64,
    probes: &ModulusProbes,
    reuse: Option<ModulusConstants>,
) -> Result<ModulusReport> {
    let mut spatial = 0.0_f64;
    for &(ti, xa, xb) in &probes.spatial {
        if xa == xb {
            return Err(Error::invalid("spatial probe needs distinct nodes"));
        }
        let gap = (solution.value(ti, xa) - solution.value(ti, xb)).abs();
        let dist = (solution.xs[xa] - solution.xs[xb]).abs();
        spatial = spatial.max(gap / dist);
    }

    let mut temporal = 0.0_f64;
    if !probes.temporal.is_empty() {
        // Put the driver on the solution's own time nodes; exact for the
        // piecewise-linear paths in play.
        let sol_grid = TimeGrid::new(solution.times.clone())?;
        let eta_sol = eta.resample(&sol_grid)?;
        for &(ta, tb, xi) in &probes.temporal {
            if tb <= ta {
                return Err(Error::invalid("temporal probe needs increasing times"));
            }
            let delta = solution.times[tb] - solution.times[ta];
            let eta_var = pvar_norm(&eta_sol, q, Window::new(ta, tb)?)?;
            let gap = (solution.value(tb, xi) - solution.value(ta, xi)).abs();
            let scale = delta.sqrt() + delta + eta_var;
            temporal = temporal.max(gap / scale);
        }
    }

    let satisfied = match reuse {
        Some(k) => spatial <= k.spatial + 1e-12 && temporal <= k.temporal + 1e-12,
        None => true,
    };
    Ok(ModulusReport {
        fitted: ModulusConstants { spatial, temporal },
        satisfied,
    })
}

/// Scalar Young ODE barriers from the terminal bound: the upper barrier
/// solves the terminal-value ODE with the envelope driver
/// f_up(y) = |f(., 0, 0)|_sup + C_f |y| and the problem's own fields; the
/// lower barrier uses the negated envelope. Together they bracket every
/// solution value: lower_t <= u(t, x) <= upper_t.
pub fn barrier_bounds(
    problem: &PdeProblem,
    substeps: usize,
) -> Result<(OdeSolution, OdeSolution)> {
    problem.validate()?;
    let eta = &problem.eta;
    let n = eta.node_count();
    let e = eta.dim();
    // Augment the driver with a clock channel so the dt term rides along.
    let mut values = vec![0.0_f64; n * (e + 1)];
    for k in 0..n {
        values[k * (e + 1)] = eta.grid().times()[k];
        values[k * (e + 1) + 1..(k + 1) * (e + 1)].copy_from_slice(eta.value(k));
    }
    let augmented = DiscretePath::new(eta.grid().clone(), e + 1, values)?;

    let zero_bound = problem.driver.zero_bound;
    let lipschitz = problem.driver.lipschitz;
    let mut upper_fields: Vec<crate::young::ScalarField> =
        vec![Arc::new(move |y: f64| zero_bound + lipschitz * y.abs())];
    let mut lower_fields: Vec<crate::young::ScalarField> =
        vec![Arc::new(move |y: f64| -(zero_bound + lipschitz * y.abs()))];
    for field in &problem.drift_fields {
        let g = Arc::clone(&field.g);
        upper_fields.push(Arc::new(move |y| g(y)));
        let g = Arc::clone(&field.g);
        lower_fields.push(Arc::new(move |y| g(y)));
    }

    let upper = ode_solve(
        &OdeSpec {
            initial: problem.terminal_bound,
            fields: upper_fields,
            eta: augmented.clone(),
            direction: OdeDirection::Backward,
        },
        substeps,
    )?;
    let lower = ode_solve(
        &OdeSpec {
            initial: -problem.terminal_bound,
            fields: lower_fields,
            eta: augmented,
            direction: OdeDirection::Backward,
        },
        substeps,
    )?;
    Ok((upper, lower))
}
