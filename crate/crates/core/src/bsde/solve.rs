//! The two solution schemes: backward induction with a per-cell fixpoint and
//! global Picard sweeps of the terminal-payload map.
//!
//! Conditional expectations are least-squares projections onto a polynomial
//! basis of the forward state. Z is recovered from the regression of centered
//! martingale increments against the Brownian increments; centering changes
//! nothing in exact arithmetic and makes the estimator exactly covariant
//! under constant shifts of Y, which several identities of the test suite
//! rely on.

use crate::error::{Error, Result};
use crate::montecarlo::{euler_maruyama, BrownianEnsemble, PathEnsemble};
use crate::regression::{RegressionSpec, SliceDesign};

use super::{BsdeProblem, BsdeSolution, ForwardModel, SchemeTag, StepDiagnostics};

pub(crate) struct SolveContext {
    pub forward: PathEnsemble,
    pub state_dim: usize,
    /// Driving-path increments, cell-major: eta_inc[cell * e + channel].
    pub eta_inc: Vec<f64>,
    pub e_dim: usize,
    pub xi: Vec<f64>,
    pub start: usize,
}

impl SolveContext {
    pub(crate) fn prepare(
        problem: &BsdeProblem,
        ensemble: &BrownianEnsemble,
        start: usize,
    ) -> Result<SolveContext> {
        problem.validate()?;
        let grid = ensemble.grid();
        if problem.grid.times() != grid.times() {
            return Err(Error::invalid(
                "problem grid and ensemble grid must be the identical node set",
            ));
        }
        let n = grid.node_count();
        if start >= n {
            return Err(Error::invalid(format!(
                "start index {start} outside grid of {n} nodes"
            )));
        }

        let forward = match &problem.forward {
            ForwardModel::IdentityOnW => ensemble.inner.clone(),
            ForwardModel::Sde(spec) => {
                match grid.index_of(spec.start_time) {
                    Some(k) if k == start => {}
                    _ => {
                        return Err(Error::invalid(format!(
                            "SDE start time {} must sit at the solve start node {start}",
                            spec.start_time
                        )))
                    }
                }
                euler_maruyama(spec, ensemble)?
            }
        };
        let state_dim = forward.dim;

        let eta = problem.eta.resample(grid)?;
        let e_dim = eta.dim();
        let mut eta_inc = vec![0.0_f64; (n - 1) * e_dim];
        for k in 0..n - 1 {
            let inc = eta.cell_increment(k);
            eta_inc[k * e_dim..(k + 1) * e_dim].copy_from_slice(&inc);
        }

        // Refuse cells on which the implicit cell map is not a contraction.
        let dg_max = problem.dg_max();
        for k in start..n - 1 {
            let dt = grid.cell(k);
            let deta_l1: f64 = eta_inc[k * e_dim..(k + 1) * e_dim]
                .iter()
                .map(|v| v.abs())
                .sum();
            let contraction = problem.driver.lipschitz * dt + dg_max * deta_l1;
            if contraction >= 1.0 {
                return Err(Error::invalid(format!(
                    "cell {k} violates the contraction guard: C_f dt + |Dg| |d eta| = {contraction:.4} >= 1; refine the grid"
                )));
            }
        }

        let m = ensemble.paths();
        let xi: Vec<f64> = (0..m)
            .map(|path| problem.terminal.eval(forward.value(path, n - 1)))
            .collect();

        Ok(SolveContext {
            forward,
            state_dim,
            eta_inc,
            e_dim,
            xi,
            start,
        })
    }
}

/// Backward induction over the whole grid.
pub fn solve_backward(
    problem: &BsdeProblem,
    ensemble: &BrownianEnsemble,
    regression: &RegressionSpec,
    inner_iters: usize,
) -> Result<BsdeSolution> {
    solve_backward_from(problem, ensemble, regression, inner_iters, 0)
}

/// Backward induction from the terminal node down to `start`; below the
/// start node Y is frozen at its start value and Z is zero. Per step,
/// Z comes from the regression of the centered continuation value times the
/// Brownian increment, and Y solves the semi-implicit cell equation
/// y = E_i[Y_{i+1}] + f(t_i, y, Z_i) dt_i + g(y) . d eta_i
/// by `inner_iters` fixpoint iterations started at the conditional mean.
pub fn solve_backward_from(
    problem: &BsdeProblem,
    ensemble: &BrownianEnsemble,
    regression: &RegressionSpec,
    inner_iters: usize,
    start: usize,
) -> Result<BsdeSolution> {
    if inner_iters == 0 {
        return Err(Error::invalid("inner_iters must be >= 1"));
    }
    let ctx = SolveContext::prepare(problem, ensemble, start)?;
    let grid = ensemble.grid().clone();
    let n = grid.node_count();
    let m = ensemble.paths();
    let d = ensemble.dim();

    let mut y = vec![0.0_f64; n * m];
    let mut z = vec![0.0_f64; n * m * d];
    y[(n - 1) * m..n * m].copy_from_slice(&ctx.xi);

    let mut steps: Vec<StepDiagnostics> = Vec::with_capacity(n.saturating_sub(1));
    let mut y_next = vec![0.0_f64; m];
    let mut centered = vec![0.0_f64; m];
    let mut target = vec![0.0_f64; m];
    let mut dw = vec![0.0_f64; d];

    for i in (ctx.start..n - 1).rev() {
        let t_i = grid.times()[i];
        let dt = grid.cell(i);
        let deta = &ctx.eta_inc[i * ctx.e_dim..(i + 1) * ctx.e_dim];

        let forward = &ctx.forward;
        let design = SliceDesign::from_states(
            |path| forward.value(path, i),
            m,
            ctx.state_dim,
            regression,
        )?;

        y_next.copy_from_slice(&y[(i + 1) * m..(i + 2) * m]);
        let (e_fit, residual_rms) = design.fit(&y_next);

        for path in 0..m {
            centered[path] = y_next[path] - e_fit[path];
        }
        for c in 0..d {
            for (path, t) in target.iter_mut().enumerate() {
                ensemble.increment_into(path, i, &mut dw);
                *t = centered[path] * dw[c];
            }
            let (z_fit, _) = design.fit(&target);
            for path in 0..m {
                z[(i * m + path) * d + c] = z_fit[path] / dt;
            }
        }

        for path in 0..m {
            let e = e_fit[path];
            let z_row = &z[(i * m + path) * d..(i * m + path + 1) * d];
            let mut current = e;
            let mut prev_update = f64::INFINITY;
            for iter in 0..inner_iters {
                let mut next = e + (problem.driver.f)(t_i, current, z_row) * dt;
                for (field, de) in problem.drift_fields.iter().zip(deta) {
                    next += (field.g)(current) * de;
                }
                if !next.is_finite() {
                    return Err(Error::numerical(format!(
                        "non-finite Y update at step {i}, path {path}"
                    )));
                }
                let update = (next - current).abs();
                if iter > 0
                    && update > prev_update * (1.0 + 1e-9)
                    && update > 1e-10 * (1.0 + current.abs())
                {
                    return Err(Error::numerical(format!(
                        "divergent inner fixpoint at step {i}: update {update} after {prev_update}"
                    )));
                }
                prev_update = update;
                current = next;
            }
            y[i * m + path] = current;
        }

        steps.push(StepDiagnostics {
            node: i,
            condition: design.condition,
            residual_rms,
            ridge_fallback: design.ridge_fallback,
            dropped_columns: design.dropped_columns,
            kept_columns: design.kept_columns(),
            max_hat: design.max_hat,
        });
    }

    // Freeze Y below the start node.
    if ctx.start > 0 {
        let start_row: Vec<f64> = y[ctx.start * m..(ctx.start + 1) * m].to_vec();
        for i in 0..ctx.start {
            y[i * m..(i + 1) * m].copy_from_slice(&start_row);
        }
    }
    steps.reverse();

    Ok(BsdeSolution {
        grid,
        paths: m,
        dim_w: d,
        start_index: ctx.start,
        scheme: SchemeTag::Backward,
        seed: ensemble.seed,
        steps,
        forward: ctx.forward,
        y,
        z,
    })
}

/// Picard solve: the solution plus the per-sweep successive-difference norms
/// (max over time slices of the path-RMS change of Y) and their ratios.
pub struct PicardRun {
    pub solution: BsdeSolution,
    pub sweep_diffs: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
}

/// Iterates the global map: from (Y, Z), build the per-path payload
/// xi + sum_i f(t_i, Y_i, Z_i) dt_i + sum_i g(Y_i) . d eta_i with left-point
/// sums, project its tails onto each time slice to get the new Y, and
/// recover the new Z from regressing centered martingale increments against
/// the Brownian increments. Starts from (Y, Z) = (0, 0).
pub fn solve_picard(
    problem: &BsdeProblem,
    ensemble: &BrownianEnsemble,
    regression: &RegressionSpec,
    sweeps: usize,
) -> Result<PicardRun> {
    if sweeps == 0 {
        return Err(Error::invalid("sweeps must be >= 1"));
    }
    let ctx = SolveContext::prepare(problem, ensemble, 0)?;
    let grid = ensemble.grid().clone();
    let n = grid.node_count();
    let m = ensemble.paths();
    let d = ensemble.dim();

    // Designs are reused across sweeps.
    let forward = &ctx.forward;
    let mut designs = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        designs.push(SliceDesign::from_states(
            |path| forward.value(path, i),
            m,
            ctx.state_dim,
            regression,
        )?);
    }

    let mut y = vec![0.0_f64; n * m];
    let mut z = vec![0.0_f64; n * m * d];
    y[(n - 1) * m..n * m].copy_from_slice(&ctx.xi);

    let mut head = vec![0.0_f64; (n - 1) * m];
    let mut tails = vec![0.0_f64; n * m];
    let mut scratch = vec![0.0_f64; m];
    let mut dn = vec![0.0_f64; m];
    let mut dw = vec![0.0_f64; d];
    let mut sweep_diffs = Vec::with_capacity(sweeps);
    let mut last_residuals = vec![0.0_f64; n - 1];

    for _sweep in 0..sweeps {
        // Cell increments of the payload under the current (Y, Z).
        for i in 0..n - 1 {
            let t_i = grid.times()[i];
            let dt = grid.cell(i);
            let deta = &ctx.eta_inc[i * ctx.e_dim..(i + 1) * ctx.e_dim];
            for path in 0..m {
                let y_i = y[i * m + path];
                let z_row = &z[(i * m + path) * d..(i * m + path + 1) * d];
                let mut h = (problem.driver.f)(t_i, y_i, z_row) * dt;
                for (field, de) in problem.drift_fields.iter().zip(deta) {
                    h += (field.g)(y_i) * de;
                }
                if !h.is_finite() {
                    return Err(Error::numerical(format!(
                        "non-finite payload increment at step {i}, path {path}"
                    )));
                }
                head[i * m + path] = h;
            }
        }
        // Tail sums: tail_i = xi + sum_{j >= i} h_j.
        tails[(n - 1) * m..n * m].copy_from_slice(&ctx.xi);
        for i in (0..n - 1).rev() {
            for path in 0..m {
                tails[i * m + path] = tails[(i + 1) * m + path] + head[i * m + path];
            }
        }

        let mut new_y = vec![0.0_f64; n * m];
        let mut new_z = vec![0.0_f64; n * m * d];
        new_y[(n - 1) * m..n * m].copy_from_slice(&ctx.xi);
        for i in 0..n - 1 {
            scratch.copy_from_slice(&tails[i * m..(i + 1) * m]);
            let (fit, residual) = designs[i].fit(&scratch);
            new_y[i * m..(i + 1) * m].copy_from_slice(&fit);
            last_residuals[i] = residual;
        }

        for i in 0..n - 1 {
            let dt = grid.cell(i);
            for path in 0..m {
                dn[path] =
                    head[i * m + path] + new_y[(i + 1) * m + path] - new_y[i * m + path];
            }
            let (dn_fit, _) = designs[i].fit(&dn);
            for path in 0..m {
                scratch[path] = dn[path] - dn_fit[path];
            }
            for c in 0..d {
                let mut t = vec![0.0_f64; m];
                for (path, tv) in t.iter_mut().enumerate() {
                    ensemble.increment_into(path, i, &mut dw);
                    *tv = scratch[path] * dw[c];
                }
                let (z_fit, _) = designs[i].fit(&t);
                for path in 0..m {
                    new_z[(i * m + path) * d + c] = z_fit[path] / dt;
                }
            }
        }

        // Successive-difference norm: sup over slices of the path RMS.
        let mut diff = 0.0_f64;
        for i in 0..n {
            let mut acc = 0.0;
            for path in 0..m {
                let dv = new_y[i * m + path] - y[i * m + path];
                acc += dv * dv;
            }
            diff = diff.max((acc / m as f64).sqrt());
        }
        sweep_diffs.push(diff);

        y = new_y;
        z = new_z;
    }

    let contraction_ratios = sweep_diffs
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();

    let steps = designs
        .iter()
        .enumerate()
        .map(|(i, design)| StepDiagnostics {
            node: i,
            condition: design.condition,
            residual_rms: last_residuals[i],
            ridge_fallback: design.ridge_fallback,
            dropped_columns: design.dropped_columns,
            kept_columns: design.kept_columns(),
            max_hat: design.max_hat,
        })
        .collect();

    Ok(PicardRun {
        solution: BsdeSolution {
            grid,
            paths: m,
            dim_w: d,
            start_index: 0,
            scheme: SchemeTag::Picard,
            seed: ensemble.seed,
            steps,
            forward: ctx.forward,
            y,
            z,
        },
        sweep_diffs,
        contraction_ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::{BsdeProblem, DriftField, Driver, ForwardModel, TerminalCondition};
    use crate::montecarlo::sample_brownian;
    use crate::paths::{DiscretePath, TimeGrid};
    use crate::signals::{generate_eta, EtaKind, EtaSpec};
    use crate::young::{ode_solve, OdeDirection, OdeSpec};
    use std::sync::Arc;

    fn sinusoid_eta(grid: &TimeGrid, amplitude: f64) -> DiscretePath {
        let spec = EtaSpec {
            signal: EtaKind::Sinusoid {
                amplitudes: vec![amplitude],
                frequencies: vec![1.0],
                phases: vec![0.3],
            },
            dim: 1,
            horizon: grid.horizon(),
        };
        generate_eta(&spec, grid).unwrap().path
    }

    fn zero_eta(grid: &TimeGrid) -> DiscretePath {
        DiscretePath::scalar_from_fn(grid.clone(), |_| 0.0).unwrap()
    }

    fn identity_problem(
        grid: &TimeGrid,
        driver: Driver,
        fields: Vec<DriftField>,
        eta: DiscretePath,
        terminal: TerminalCondition,
    ) -> BsdeProblem {
        BsdeProblem {
            grid: grid.clone(),
            driver,
            drift_fields: fields,
            eta,
            terminal,
            forward: ForwardModel::IdentityOnW,
        }
    }

    #[test]
    fn martingale_case_recovers_brownian_pair() {
        // f = 0, g = 0, xi = W_T: Y_t = W_t and Z = 1 up to regression noise.
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let m = 10_000;
        let ensemble = sample_brownian(&grid, m, 1, 99).unwrap();
        let problem = identity_problem(
            &grid,
            Driver::zero(),
            vec![DriftField::constant(0.0)],
            zero_eta(&grid),
            TerminalCondition::new(|x: &[f64]| x[0], 50.0),
        );
        let spec = RegressionSpec {
            degree: 1,
            ..RegressionSpec::default()
        };
        let sol = solve_backward(&problem, &ensemble, &spec, 3).unwrap();

        let mut max_y_err = 0.0_f64;
        for i in 0..grid.node_count() {
            for path in 0..m {
                let err = (sol.y_at(path, i) - ensemble.value(path, i)[0]).abs();
                max_y_err = max_y_err.max(err);
            }
        }
        assert!(max_y_err <= 5e-2, "max |Y - W| = {max_y_err}");

        let mut z_rms = 0.0_f64;
        let mut count = 0usize;
        for i in 0..grid.node_count() - 1 {
            for path in 0..m {
                let d = sol.z_at(path, i)[0] - 1.0;
                z_rms += d * d;
                count += 1;
            }
        }
        let z_rms = (z_rms / count as f64).sqrt();
        assert!(z_rms <= 5e-2, "rms |Z - 1| = {z_rms}");
    }

    #[test]
    fn constant_field_shifts_by_the_driver_exactly() {
        // f = 0, g = 1, xi = c: Y_t = c + eta_T - eta_t exactly, Z = 0.
        let grid = TimeGrid::uniform(1.0, 200).unwrap();
        let ensemble = sample_brownian(&grid, 500, 1, 7).unwrap();
        let eta = sinusoid_eta(&grid, 0.8);
        let c = 1.25;
        let problem = identity_problem(
            &grid,
            Driver::zero(),
            vec![DriftField::constant(1.0)],
            eta.clone(),
            TerminalCondition::constant(c),
        );
        let sol = solve_backward(&problem, &ensemble, &RegressionSpec::default(), 3).unwrap();
        let n = grid.node_count();
        let eta_t = eta.scalar_value(n - 1);
        for i in 0..n {
            let expected = c + eta_t - eta.scalar_value(i);
            for path in 0..ensemble.paths() {
                assert!(
                    (sol.y_at(path, i) - expected).abs() < 1e-12,
                    "node {i}: {} vs {expected}",
                    sol.y_at(path, i)
                );
                assert!(sol.z_at(path, i)[0].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_driver_matches_exponential() {
        // f = a y, g = 0, xi = c: Y_0 = c e^{a T}.
        let grid = TimeGrid::uniform(1.0, 200).unwrap();
        let ensemble = sample_brownian(&grid, 500, 1, 13).unwrap();
        let a = 0.8;
        let c = 2.0;
        let problem = identity_problem(
            &grid,
            Driver::linear_in_y(a),
            vec![DriftField::constant(0.0)],
            zero_eta(&grid),
            TerminalCondition::constant(c),
        );
        let sol = solve_backward(&problem, &ensemble, &RegressionSpec::default(), 3).unwrap();
        let expected = c * (a * 1.0_f64).exp();
        let y0 = sol.y0_mean();
        assert!(
            (y0 - expected).abs() <= 0.01 * expected,
            "Y_0 = {y0} vs {expected}"
        );
    }

    #[test]
    fn linear_field_matches_the_ode_oracle() {
        // f = 0, g(y) = beta y, deterministic eta:
        // Y_t = c exp(beta (eta_T - eta_t)), cross-checked against the
        // backward Young ODE solver.
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let ensemble = sample_brownian(&grid, 500, 1, 17).unwrap();
        let eta = sinusoid_eta(&grid, 0.5);
        let beta = 0.6;
        let c = 1.1;
        let problem = identity_problem(
            &grid,
            Driver::zero(),
            vec![DriftField::linear(beta)],
            eta.clone(),
            TerminalCondition::constant(c),
        );
        let sol = solve_backward(&problem, &ensemble, &RegressionSpec::default(), 3).unwrap();

        let oracle = ode_solve(
            &OdeSpec {
                initial: c,
                fields: vec![Arc::new(move |y| beta * y)],
                eta: eta.clone(),
                direction: OdeDirection::Backward,
            },
            200,
        )
        .unwrap();

        let n = grid.node_count();
        let eta_t = eta.scalar_value(n - 1);
        for i in 0..n {
            let analytic = c * (beta * (eta_t - eta.scalar_value(i))).exp();
            let numeric = sol.y_at(0, i);
            let ode = oracle.path.scalar_value(i);
            assert!(
                (numeric - ode).abs() <= 0.01 * ode.abs(),
                "node {i}: solver {numeric} vs ODE {ode}"
            );
            assert!(
                (numeric - analytic).abs() <= 0.01 * analytic.abs(),
                "node {i}: solver {numeric} vs analytic {analytic}"
            );
            assert!(sol.z_at(0, i)[0].abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_slice_is_bit_exact() {
        let grid = TimeGrid::uniform(0.5, 40).unwrap();
        let ensemble = sample_brownian(&grid, 800, 1, 23).unwrap();
        let problem = identity_problem(
            &grid,
            Driver::linear_in_y(0.5),
            vec![DriftField::tanh()],
            sinusoid_eta(&grid, 0.2),
            TerminalCondition::new(|x: &[f64]| x[0].sin(), 1.0),
        );
        let sol = solve_backward(&problem, &ensemble, &RegressionSpec::default(), 3).unwrap();
        let n = grid.node_count();
        for path in 0..ensemble.paths() {
            let xi = problem.terminal.eval(sol.forward.value(path, n - 1));
            assert_eq!(sol.y_at(path, n - 1), xi);
        }
    }

    #[test]
    fn zero_driver_deterministic_terminal_is_flat() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let ensemble = sample_brownian(&grid, 600, 1, 29).unwrap();
        let c = -0.75;
        let problem = identity_problem(
            &grid,
            Driver::zero(),
            vec![DriftField::constant(0.0)],
            zero_eta(&grid),
            TerminalCondition::constant(c),
        );
        let sol = solve_backward(&problem, &ensemble, &RegressionSpec::default(), 3).unwrap();
        for i in 0..grid.node_count() {
            for path in 0..ensemble.paths() {
                assert!((sol.y_at(path, i) - c).abs() < 1e-12);
                assert!(sol.z_at(path, i)[0].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_shift_of_the_field_is_exactly_covariant() {
        // Replacing g by g + c shifts Y by c (eta_T - eta_t) and leaves Z
        // unchanged; f depends on z only so the identity is exact.
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let ensemble = sample_brownian(&grid, 2_000, 1, 31).unwrap();
        let eta = sinusoid_eta(&grid, 0.6);
        let base = identity_problem(
            &grid,
            Driver::linear_in_z(0.5),
            vec![DriftField::constant(0.7)],
            eta.clone(),
            TerminalCondition::new(|x: &[f64]| (x[0] - 0.2).max(0.0), 40.0),
        );
        let mut shifted = base.clone();
        let c_shift = 0.3;
        shifted.drift_fields = vec![DriftField::constant(0.7 + c_shift)];

        let spec = RegressionSpec::default();
        let sol_a = solve_backward(&base, &ensemble, &spec, 3).unwrap();
        let sol_b = solve_backward(&shifted, &ensemble, &spec, 3).unwrap();

        let n = grid.node_count();
        let eta_t = eta.scalar_value(n - 1);
        for i in 0..n {
            let shift = c_shift * (eta_t - eta.scalar_value(i));
            for path in 0..ensemble.paths() {
                assert!(
                    ((sol_b.y_at(path, i) - sol_a.y_at(path, i)) - shift).abs() < 1e-12,
                    "node {i} path {path}"
                );
                assert!(
                    (sol_b.z_at(path, i)[0] - sol_a.z_at(path, i)[0]).abs() < 1e-12,
                    "z changed at node {i}"
                );
            }
        }
    }

    #[test]
    fn contraction_guard_refuses_coarse_cells() {
        // One driver cell carries a large eta increment against a field with
        // |Dg| = 2: the cell map is not a contraction and the solve refuses.
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let ensemble = sample_brownian(&grid, 200, 1, 37).unwrap();
        let eta = DiscretePath::scalar(grid.clone(), vec![0.0, 0.9, 0.9, 0.9, 0.9]).unwrap();
        let problem = identity_problem(
            &grid,
            Driver::zero(),
            vec![DriftField::linear(2.0)],
            eta,
            TerminalCondition::constant(1.0),
        );
        let err = solve_backward(&problem, &ensemble, &RegressionSpec::default(), 3)
            .err()
            .expect("guard should reject");
        let msg = err.to_string();
        assert!(msg.contains("cell 0"), "message was: {msg}");
    }

    #[test]
    fn divergent_fixpoint_aborts_with_the_step() {
        // The guard trusts the reported derivative bound; under-reporting it
        // lets a genuinely expanding cell map through, and the divergence
        // check must catch it.
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let ensemble = sample_brownian(&grid, 200, 1, 39).unwrap();
        let eta = DiscretePath::scalar(grid.clone(), vec![0.0, 0.8, 1.6, 2.4, 3.2]).unwrap();
        let lying_field = DriftField::new(|y: f64| 10.0 * y, 0.0, 0.0);
        let problem = identity_problem(
            &grid,
            Driver::zero(),
            vec![lying_field],
            eta,
            TerminalCondition::constant(1.0),
        );
        let err = solve_backward(&problem, &ensemble, &RegressionSpec::default(), 8)
            .err()
            .expect("divergence should abort");
        let msg = err.to_string();
        assert!(
            msg.contains("divergent") || msg.contains("non-finite"),
            "message was: {msg}"
        );
    }

    #[test]
    fn picard_zero_data_is_a_fixpoint_after_one_sweep() {
        let grid = TimeGrid::uniform(1.0, 30).unwrap();
        let ensemble = sample_brownian(&grid, 1_000, 1, 41).unwrap();
        let problem = identity_problem(
            &grid,
            Driver::zero(),
            vec![DriftField::constant(0.0)],
            zero_eta(&grid),
            TerminalCondition::new(|x: &[f64]| x[0].tanh(), 1.0),
        );
        let run = solve_picard(&problem, &ensemble, &RegressionSpec::default(), 3).unwrap();
        // Sweep one does all the work; later sweeps change nothing.
        assert!(run.sweep_diffs[1] < 1e-10, "diffs {:?}", run.sweep_diffs);
        assert!(run.sweep_diffs[2] < 1e-10);
    }

    #[test]
    fn picard_contracts_on_a_small_horizon() {
        let grid = TimeGrid::uniform(0.25, 50).unwrap();
        let ensemble = sample_brownian(&grid, 2_000, 1, 43).unwrap();
        let problem = identity_problem(
            &grid,
            Driver::new(|_, y, _| y, 1.0, 0.0),
            vec![DriftField::tanh()],
            sinusoid_eta(&grid, 0.05),
            TerminalCondition::new(|x: &[f64]| x[0].tanh(), 1.0),
        );
        let run = solve_picard(&problem, &ensemble, &RegressionSpec::default(), 5).unwrap();
        for w in run.sweep_diffs.windows(2) {
            assert!(w[1] < w[0], "diffs not decreasing: {:?}", run.sweep_diffs);
        }
        for r in &run.contraction_ratios {
            assert!(*r < 1.0, "ratios {:?}", run.contraction_ratios);
        }
    }

    #[test]
    fn schemes_agree_at_the_start() {
        let grid = TimeGrid::uniform(0.25, 50).unwrap();
        let ensemble = sample_brownian(&grid, 4_000, 1, 47).unwrap();
        let problem = identity_problem(
            &grid,
            Driver::linear_in_y(0.5),
            vec![DriftField::tanh()],
            sinusoid_eta(&grid, 0.05),
            TerminalCondition::new(|x: &[f64]| x[0].sin(), 1.0),
        );
        let spec = RegressionSpec::default();
        let backward = solve_backward(&problem, &ensemble, &spec, 3).unwrap();
        let picard = solve_picard(&problem, &ensemble, &spec, 8).unwrap();
        let se = (backward.y0_se().powi(2) + picard.solution.y0_se().powi(2)).sqrt();
        let gap = (backward.y0_mean() - picard.solution.y0_mean()).abs();
        assert!(gap <= 2.0 * se + 1e-3, "gap {gap} vs se {se}");
    }

    #[test]
    fn solve_from_interior_node_freezes_the_head() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let ensemble = sample_brownian(&grid, 600, 1, 53).unwrap();
        let problem = identity_problem(
            &grid,
            Driver::zero(),
            vec![DriftField::constant(1.0)],
            sinusoid_eta(&grid, 0.4),
            TerminalCondition::constant(0.5),
        );
        let start = 8;
        let sol = solve_backward_from(&problem, &ensemble, &RegressionSpec::default(), 3, start)
            .unwrap();
        for i in 0..start {
            for path in 0..ensemble.paths() {
                assert_eq!(sol.y_at(path, i), sol.y_at(path, start));
                assert_eq!(sol.z_at(path, i)[0], 0.0);
            }
        }
    }
}
