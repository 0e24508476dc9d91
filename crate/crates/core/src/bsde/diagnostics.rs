//! Empirical norm estimators and property diagnostics for BSDE solutions:
//! the conditional p-variation and BMO norms the theory is phrased in, the
//! comparison check, stability under perturbations of the driving path, the
//! terminal-data continuity ratio, and a fitted-constant look at the
//! p-variation Burkholder-Davis-Gundy inequality.
//!
//! All esssup-style quantities are reported as finite-sample maxima of
//! regression estimates; they are biased proxies and labeled as such.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::montecarlo::BrownianEnsemble;
use crate::paths::var_distance;
use crate::regression::{RegressionSpec, SliceDesign};

use super::{solve_backward, BsdeProblem, BsdeSolution};

/// Backward dynamic program for the p-variation of one path over every tail
/// window [i, end] at once: best[i] = max_j (|y_j - y_i|^p + best[j]).
fn tail_pvar_pow(ys: &[f64], p: f64, best: &mut [f64]) {
    let n = ys.len();
    best[n - 1] = 0.0;
    for i in (0..n - 1).rev() {
        let mut b = 0.0_f64;
        for j in i + 1..n {
            let cand = (ys[j] - ys[i]).abs().powf(p) + best[j];
            if cand > b {
                b = cand;
            }
        }
        best[i] = b;
    }
}

/// Empirical B_p norm: per path and grid time t the squared p-variation of Y
/// on [t, T], regressed on the time-t state; the estimator is
/// max_t (max_m fitted)^{1/2} + max_m |Y_T|, a finite-sample proxy for the
/// esssup over (t, omega).
pub fn bp_norm_estimate(
    solution: &BsdeSolution,
    p: f64,
    conditioning: &RegressionSpec,
) -> Result<f64> {
    if !(p > 2.0) {
        return Err(Error::invalid(format!(
            "the conditional p-variation norm needs p > 2, got {p}"
        )));
    }
    let n = solution.node_count();
    let m = solution.paths;
    let start = solution.start_index;

    // Path-major squared tail variations.
    let mut vsq = vec![0.0_f64; m * n];
    vsq.par_chunks_mut(n).enumerate().for_each(|(path, row)| {
        let ys: Vec<f64> = (0..n).map(|i| solution.y_at(path, i)).collect();
        let mut best = vec![0.0_f64; n];
        tail_pvar_pow(&ys, p, &mut best);
        for i in 0..n {
            row[i] = best[i].powf(2.0 / p);
        }
    });

    let forward = &solution.forward;
    let state_dim = forward.dim;
    let mut overall = 0.0_f64;
    let mut slice = vec![0.0_f64; m];
    for i in start..n {
        for path in 0..m {
            slice[path] = vsq[path * n + i];
        }
        let design =
            SliceDesign::from_states(|path| forward.value(path, i), m, state_dim, conditioning)?;
        let (fit, _) = design.fit(&slice);
        for f in fit {
            if f > overall {
                overall = f;
            }
        }
    }

    let terminal_max = solution
        .y_slice(n - 1)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    Ok(overall.max(0.0).sqrt() + terminal_max)
}

/// Empirical BMO norm of Z: max over grid times of the largest fitted
/// conditional expectation of the remaining quadratic mass
/// sum_{r >= t} |Z_r|^2 dt_r.
pub fn bmo_norm_estimate(
    solution: &BsdeSolution,
    conditioning: &RegressionSpec,
) -> Result<f64> {
    let n = solution.node_count();
    let m = solution.paths;
    let start = solution.start_index;
    let grid = &solution.grid;

    let mut tails = vec![0.0_f64; m * n];
    tails.par_chunks_mut(n).enumerate().for_each(|(path, row)| {
        let mut acc = 0.0;
        for i in (0..n - 1).rev() {
            acc += solution.z_norm_sq(path, i) * grid.cell(i);
            row[i] = acc;
        }
        row[n - 1] = 0.0;
    });

    let forward = &solution.forward;
    let state_dim = forward.dim;
    let mut overall = 0.0_f64;
    let mut slice = vec![0.0_f64; m];
    for i in start..n {
        for path in 0..m {
            slice[path] = tails[path * n + i];
        }
        let design =
            SliceDesign::from_states(|path| forward.value(path, i), m, state_dim, conditioning)?;
        let (fit, _) = design.fit(&slice);
        for f in fit {
            if f > overall {
                overall = f;
            }
        }
    }
    Ok(overall.max(0.0))
}

/// A conservative scale for pointwise fitted-value noise: the worst per-step
/// combination of regression residual and design leverage, so the estimate
/// covers fitted values at extreme states, combined over both solutions in
/// quadrature.
pub fn pooled_regression_se(a: &BsdeSolution, b: &BsdeSolution) -> f64 {
    let one = |s: &BsdeSolution| -> f64 {
        s.steps
            .iter()
            .map(|d| d.residual_rms * d.max_hat.sqrt())
            .fold(0.0, f64::max)
    };
    let (sa, sb) = (one(a), one(b));
    (sa * sa + sb * sb).sqrt()
}

/// Fraction of (path, time) pairs with Y1 > Y2 + epsilon, and the largest
/// excess. The caller asserts the order preconditions (xi1 <= xi2 pathwise,
/// f1 <= f2 pointwise, identical g, eta and ensemble).
#[derive(Debug, Clone, Copy)]
pub struct ComparisonReport {
    pub violation_fraction: f64,
    pub max_violation: f64,
}

pub fn comparison_check(
    problem1: &BsdeProblem,
    problem2: &BsdeProblem,
    ensemble: &BrownianEnsemble,
    regression: &RegressionSpec,
    inner_iters: usize,
    epsilon: f64,
) -> Result<ComparisonReport> {
    let sol1 = solve_backward(problem1, ensemble, regression, inner_iters)?;
    let sol2 = solve_backward(problem2, ensemble, regression, inner_iters)?;
    Ok(compare_solutions(&sol1, &sol2, epsilon))
}

/// The counting step of [`comparison_check`], reusable when the solutions
/// are already in hand.
pub fn compare_solutions(
    sol1: &BsdeSolution,
    sol2: &BsdeSolution,
    epsilon: f64,
) -> ComparisonReport {
    let n = sol1.node_count();
    let m = sol1.paths;
    let mut violations = 0usize;
    let mut max_violation = f64::NEG_INFINITY;
    for i in 0..n {
        let s1 = sol1.y_slice(i);
        let s2 = sol2.y_slice(i);
        for path in 0..m {
            let excess = s1[path] - s2[path];
            if excess > epsilon {
                violations += 1;
            }
            if excess > max_violation {
                max_violation = excess;
            }
        }
    }
    ComparisonReport {
        violation_fraction: violations as f64 / (n * m) as f64,
        max_violation,
    }
}

/// One row per approximation level: distance of eta^n to the limit path, the
/// gap of the starting values, its Monte-Carlo standard error, and the gap of
/// the empirical B_p norms. All levels share the Brownian ensemble.
#[derive(Debug, Clone, Copy)]
pub struct StabilityRow {
    pub level: usize,
    pub qvar_distance: f64,
    pub y0_gap: f64,
    pub y0_se: f64,
    pub bp_gap: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn stability_in_eta(
    problem: &BsdeProblem,
    etas: &[crate::paths::DiscretePath],
    q: f64,
    p_for_bp: f64,
    ensemble: &BrownianEnsemble,
    regression: &RegressionSpec,
    inner_iters: usize,
) -> Result<Vec<StabilityRow>> {
    let limit = solve_backward(problem, ensemble, regression, inner_iters)?;
    let limit_y0 = limit.y0_mean();
    let limit_bp = bp_norm_estimate(&limit, p_for_bp, regression)?;

    let mut rows = Vec::with_capacity(etas.len());
    for (level, eta) in etas.iter().enumerate() {
        let mut perturbed = problem.clone();
        perturbed.eta = eta.clone();
        let sol = solve_backward(&perturbed, ensemble, regression, inner_iters)?;
        let bp = bp_norm_estimate(&sol, p_for_bp, regression)?;
        let se = (sol.y0_se().powi(2) + limit.y0_se().powi(2)).sqrt();
        rows.push(StabilityRow {
            level,
            qvar_distance: var_distance(eta, &problem.eta, q)?,
            y0_gap: (sol.y0_mean() - limit_y0).abs(),
            y0_se: se,
            bp_gap: (bp - limit_bp).abs(),
        });
    }
    Ok(rows)
}

/// Terminal-data continuity ratio |Y_0 - Y'_0| / E[|xi - xi'|^2]^{1/2},
/// computed with common randomness. A zero denominator with a nonzero
/// numerator is flagged instead of reported as a ratio.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzReport {
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    pub y0_se: f64,
    pub inconsistent: bool,
}

pub fn lipschitz_in_xi(
    problem: &BsdeProblem,
    terminal_a: &super::TerminalCondition,
    terminal_b: &super::TerminalCondition,
    ensemble: &BrownianEnsemble,
    regression: &RegressionSpec,
    inner_iters: usize,
) -> Result<LipschitzReport> {
    let mut pa = problem.clone();
    pa.terminal = terminal_a.clone();
    let mut pb = problem.clone();
    pb.terminal = terminal_b.clone();
    let sa = solve_backward(&pa, ensemble, regression, inner_iters)?;
    let sb = solve_backward(&pb, ensemble, regression, inner_iters)?;

    let n = sa.node_count();
    let m = sa.paths;
    let mut diff_sq = 0.0;
    for path in 0..m {
        let d = sa.y_at(path, n - 1) - sb.y_at(path, n - 1);
        diff_sq += d * d;
    }
    let denominator = (diff_sq / m as f64).sqrt();
    let numerator = (sa.y0_mean() - sb.y0_mean()).abs();
    let y0_se = (sa.y0_se().powi(2) + sb.y0_se().powi(2)).sqrt();

    let zero_den = denominator < 1e-14;
    let inconsistent = zero_den && numerator > 1e-10;
    let ratio = if zero_den { 0.0 } else { numerator / denominator };
    Ok(LipschitzReport {
        numerator,
        denominator,
        ratio,
        y0_se,
        inconsistent,
    })
}

/// Fitted-constant look at the p-variation Burkholder-Davis-Gundy relation:
/// lhs is the path average of the squared p-variation of the stochastic
/// integral of Z, rhs the average quadratic mass of Z. Reported only; not a
/// pass/fail gate.
#[derive(Debug, Clone, Copy)]
pub struct BdgReport {
    pub lhs: f64,
    pub rhs: f64,
    pub fitted_constant: f64,
}

pub fn bdg_diagnostic(
    solution: &BsdeSolution,
    ensemble: &BrownianEnsemble,
    p: f64,
) -> Result<BdgReport> {
    if !(p > 2.0) {
        return Err(Error::invalid(format!(
            "the p-variation BDG diagnostic needs p > 2, got {p}"
        )));
    }
    if ensemble.paths() != solution.paths || ensemble.dim() != solution.dim_w {
        return Err(Error::invalid("ensemble does not match the solution"));
    }
    let n = solution.node_count();
    let m = solution.paths;
    let d = solution.dim_w;
    let grid = &solution.grid;

    let per_path: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|path| {
            // Left-point stochastic integral of Z against W along this path.
            let mut integral = vec![0.0_f64; n];
            let mut quad = 0.0;
            let mut dw = vec![0.0_f64; d];
            for i in 0..n - 1 {
                ensemble.increment_into(path, i, &mut dw);
                let z = solution.z_at(path, i);
                let step: f64 = z.iter().zip(&dw).map(|(a, b)| a * b).sum();
                integral[i + 1] = integral[i] + step;
                quad += solution.z_norm_sq(path, i) * grid.cell(i);
            }
            let mut best = vec![0.0_f64; n];
            tail_pvar_pow(&integral, p, &mut best);
            (best[0].powf(2.0 / p), quad)
        })
        .collect();

    let lhs = per_path.iter().map(|v| v.0).sum::<f64>() / m as f64;
    let rhs = per_path.iter().map(|v| v.1).sum::<f64>() / m as f64;
    let fitted_constant = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(BdgReport {
        lhs,
        rhs,
        fitted_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::{
        BsdeProblem, BsdeSolution, DriftField, Driver, ForwardModel, SchemeTag,
        TerminalCondition,
    };
    use crate::montecarlo::sample_brownian;
    use crate::paths::{DiscretePath, TimeGrid};
    use crate::signals::{generate_eta, EtaKind, EtaSpec};

    fn sinusoid_eta(grid: &TimeGrid, amplitude: f64) -> DiscretePath {
        let spec = EtaSpec {
            signal: EtaKind::Sinusoid {
                amplitudes: vec![amplitude],
                frequencies: vec![1.0],
                phases: vec![0.0],
            },
            dim: 1,
            horizon: grid.horizon(),
        };
        generate_eta(&spec, grid).unwrap().path
    }

    /// Solution with Y equal to the Brownian paths scaled by `y_scale` and Z
    /// constant at `z_value`.
    fn synthetic_solution(
        grid: &TimeGrid,
        m: usize,
        seed: u64,
        y_scale: f64,
        z_value: f64,
    ) -> (BsdeSolution, crate::montecarlo::BrownianEnsemble) {
        let ensemble = sample_brownian(grid, m, 1, seed).unwrap();
        let n = grid.node_count();
        let mut y = vec![0.0_f64; n * m];
        let mut z = vec![0.0_f64; n * m];
        for i in 0..n {
            for path in 0..m {
                y[i * m + path] = y_scale * ensemble.value(path, i)[0];
                if i < n - 1 {
                    z[i * m + path] = z_value;
                }
            }
        }
        let sol = BsdeSolution::from_parts(
            grid.clone(),
            m,
            1,
            y,
            z,
            ensemble.inner.clone(),
            SchemeTag::Backward,
            seed,
        )
        .unwrap();
        (sol, ensemble)
    }

    #[test]
    fn bp_norm_of_a_constant_is_the_constant() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let m = 500;
        let ensemble = sample_brownian(&grid, m, 1, 3).unwrap();
        let c = -2.5_f64;
        let n = grid.node_count();
        let y = vec![c; n * m];
        let z = vec![0.0; n * m];
        let sol = BsdeSolution::from_parts(
            grid,
            m,
            1,
            y,
            z,
            ensemble.inner.clone(),
            SchemeTag::Backward,
            3,
        )
        .unwrap();
        let v = bp_norm_estimate(&sol, 2.5, &RegressionSpec::default()).unwrap();
        assert!((v - c.abs()).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn bp_norm_rejects_small_exponents() {
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let (sol, _) = synthetic_solution(&grid, 200, 5, 1.0, 0.0);
        assert!(bp_norm_estimate(&sol, 2.0, &RegressionSpec::default()).is_err());
    }

    #[test]
    fn bp_norm_is_positively_homogeneous() {
        let grid = TimeGrid::uniform(1.0, 25).unwrap();
        let (sol1, _) = synthetic_solution(&grid, 2_000, 7, 1.0, 0.0);
        let (sol3, _) = synthetic_solution(&grid, 2_000, 7, 3.0, 0.0);
        let spec = RegressionSpec::default();
        let v1 = bp_norm_estimate(&sol1, 2.5, &spec).unwrap();
        let v3 = bp_norm_estimate(&sol3, 2.5, &spec).unwrap();
        assert!((v3 - 3.0 * v1).abs() < 1e-9 * (1.0 + v1), "{v3} vs 3 x {v1}");
    }

    #[test]
    fn bp_norm_of_brownian_y_is_seed_stable() {
        let grid = TimeGrid::uniform(1.0, 40).unwrap();
        let spec = RegressionSpec::default();
        let mut values = Vec::new();
        for seed in [11u64, 12, 13] {
            let (sol, _) = synthetic_solution(&grid, 10_000, seed, 1.0, 0.0);
            values.push(bp_norm_estimate(&sol, 2.5, &spec).unwrap());
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in &values {
            assert!(
                (v - mean).abs() <= 0.10 * mean,
                "seed spread too wide: {values:?}"
            );
        }
        assert!(values.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn bmo_norm_examples() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let spec = RegressionSpec::default();

        let (zeros, _) = synthetic_solution(&grid, 400, 15, 0.3, 0.0);
        assert_eq!(bmo_norm_estimate(&zeros, &spec).unwrap(), 0.0);

        let (ones, _) = synthetic_solution(&grid, 400, 15, 0.3, 1.0);
        let v = bmo_norm_estimate(&ones, &spec).unwrap();
        assert!((v - 1.0).abs() <= 0.05, "got {v}");
    }

    #[test]
    fn comparison_of_identical_problems_is_clean() {
        let grid = TimeGrid::uniform(1.0, 40).unwrap();
        let ensemble = sample_brownian(&grid, 2_000, 1, 21).unwrap();
        let problem = BsdeProblem {
            grid: grid.clone(),
            driver: Driver::zero(),
            drift_fields: vec![DriftField::tanh()],
            eta: sinusoid_eta(&grid, 0.3),
            terminal: TerminalCondition::new(|x: &[f64]| x[0].tanh(), 1.0),
            forward: ForwardModel::IdentityOnW,
        };
        let report = comparison_check(
            &problem,
            &problem,
            &ensemble,
            &RegressionSpec::default(),
            3,
            1e-12,
        )
        .unwrap();
        assert_eq!(report.violation_fraction, 0.0);
        assert!(report.max_violation <= 1e-12);
    }

    #[test]
    fn comparison_orders_shifted_terminals() {
        let grid = TimeGrid::uniform(1.0, 60).unwrap();
        let ensemble = sample_brownian(&grid, 4_000, 1, 23).unwrap();
        let base = BsdeProblem {
            grid: grid.clone(),
            driver: Driver::zero(),
            drift_fields: vec![DriftField::tanh()],
            eta: sinusoid_eta(&grid, 0.3),
            terminal: TerminalCondition::new(|x: &[f64]| x[0].tanh(), 1.0),
            forward: ForwardModel::IdentityOnW,
        };
        let mut bigger = base.clone();
        bigger.terminal = TerminalCondition::new(|x: &[f64]| x[0].tanh() + 1.0, 2.0);

        let spec = RegressionSpec::default();
        let sol1 = solve_backward(&base, &ensemble, &spec, 3).unwrap();
        let sol2 = solve_backward(&bigger, &ensemble, &spec, 3).unwrap();
        let epsilon = 3.0 * pooled_regression_se(&sol1, &sol2);
        let report = compare_solutions(&sol1, &sol2, epsilon);
        assert_eq!(
            report.violation_fraction, 0.0,
            "violations at eps {epsilon}: max excess {}",
            report.max_violation
        );
    }

    #[test]
    fn bigger_driver_raises_the_start_value() {
        let grid = TimeGrid::uniform(1.0, 60).unwrap();
        let ensemble = sample_brownian(&grid, 3_000, 1, 25).unwrap();
        let base = BsdeProblem {
            grid: grid.clone(),
            driver: Driver::zero(),
            drift_fields: vec![DriftField::tanh()],
            eta: sinusoid_eta(&grid, 0.3),
            terminal: TerminalCondition::new(|x: &[f64]| x[0].tanh(), 1.0),
            forward: ForwardModel::IdentityOnW,
        };
        let mut bigger = base.clone();
        bigger.driver = Driver::new(|_, _, _| 1.0, 0.0, 1.0);
        let spec = RegressionSpec::default();
        let sol1 = solve_backward(&base, &ensemble, &spec, 3).unwrap();
        let sol2 = solve_backward(&bigger, &ensemble, &spec, 3).unwrap();
        assert!(
            sol2.y0_mean() > sol1.y0_mean(),
            "f + 1 should raise Y_0: {} vs {}",
            sol2.y0_mean(),
            sol1.y0_mean()
        );
    }

    #[test]
    fn stability_rows_vanish_for_a_constant_ladder_and_zero_field() {
        let grid = TimeGrid::uniform(1.0, 40).unwrap();
        let ensemble = sample_brownian(&grid, 1_500, 1, 27).unwrap();
        let eta = sinusoid_eta(&grid, 0.4);
        let problem = BsdeProblem {
            grid: grid.clone(),
            driver: Driver::zero(),
            drift_fields: vec![DriftField::tanh()],
            eta: eta.clone(),
            terminal: TerminalCondition::new(|x: &[f64]| x[0].tanh(), 1.0),
            forward: ForwardModel::IdentityOnW,
        };
        let spec = RegressionSpec::default();

        // Constant sequence eta^n = eta: all gaps zero.
        let rows = stability_in_eta(
            &problem,
            &[eta.clone(), eta.clone()],
            1.5,
            2.5,
            &ensemble,
            &spec,
            3,
        )
        .unwrap();
        for row in &rows {
            assert!(row.qvar_distance < 1e-12);
            assert!(row.y0_gap < 1e-12);
            assert!(row.bp_gap < 1e-12);
        }

        // g = 0: eta enters only through g, so any ladder gives zero gaps.
        let mut no_field = problem.clone();
        no_field.drift_fields = vec![DriftField::constant(0.0)];
        let other = sinusoid_eta(&grid, 0.9);
        let rows =
            stability_in_eta(&no_field, &[other], 1.5, 2.5, &ensemble, &spec, 3).unwrap();
        assert!(rows[0].qvar_distance > 0.1);
        assert!(rows[0].y0_gap < 1e-12);
        assert!(rows[0].bp_gap < 1e-12);
    }

    #[test]
    fn lipschitz_ratio_examples() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let ensemble = sample_brownian(&grid, 2_000, 1, 29).unwrap();
        let problem = BsdeProblem {
            grid: grid.clone(),
            driver: Driver::zero(),
            drift_fields: vec![DriftField::constant(0.0)],
            eta: sinusoid_eta(&grid, 0.2),
            terminal: TerminalCondition::new(|x: &[f64]| x[0].tanh(), 1.0),
            forward: ForwardModel::IdentityOnW,
        };
        let spec = RegressionSpec::default();

        // Identical terminals: 0/0 reported as ratio 0, consistent.
        let same = lipschitz_in_xi(
            &problem,
            &problem.terminal.clone(),
            &problem.terminal.clone(),
            &ensemble,
            &spec,
            3,
        )
        .unwrap();
        assert_eq!(same.ratio, 0.0);
        assert!(!same.inconsistent);

        // Constant shift with f = g = 0: both sides equal delta, ratio 1.
        let delta = 0.35;
        let shifted = TerminalCondition::new(move |x: &[f64]| x[0].tanh() + delta, 2.0);
        let report = lipschitz_in_xi(
            &problem,
            &problem.terminal.clone(),
            &shifted,
            &ensemble,
            &spec,
            3,
        )
        .unwrap();
        assert!((report.numerator - delta).abs() < 1e-10, "{}", report.numerator);
        assert!((report.denominator - delta).abs() < 1e-10);
        assert!((report.ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bdg_examples_and_scaling() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let spec_p = 2.5;

        let (zeros, ens) = synthetic_solution(&grid, 500, 33, 0.5, 0.0);
        let r = bdg_diagnostic(&zeros, &ens, spec_p).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert_eq!(r.fitted_constant, 0.0);

        let (ones, ens) = synthetic_solution(&grid, 2_000, 33, 0.5, 1.0);
        let r1 = bdg_diagnostic(&ones, &ens, spec_p).unwrap();
        assert!(r1.fitted_constant.is_finite() && r1.fitted_constant > 0.0);
        assert!((r1.rhs - 1.0).abs() < 1e-12, "rhs {}", r1.rhs);

        let (twos, ens2) = synthetic_solution(&grid, 2_000, 33, 0.5, 2.0);
        let r2 = bdg_diagnostic(&twos, &ens2, spec_p).unwrap();
        assert!((r2.lhs - 4.0 * r1.lhs).abs() < 1e-9 * (1.0 + r1.lhs));
        assert!((r2.rhs - 4.0 * r1.rhs).abs() < 1e-9);
        assert!((r2.fitted_constant - r1.fitted_constant).abs() < 1e-12);
    }

    #[test]
    fn bdg_constant_is_seed_stable() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let mut constants = Vec::new();
        for seed in [41u64, 42, 43] {
            let (sol, ens) = synthetic_solution(&grid, 10_000, seed, 0.5, 1.0);
            constants.push(bdg_diagnostic(&sol, &ens, 2.5).unwrap().fitted_constant);
        }
        let mean = constants.iter().sum::<f64>() / constants.len() as f64;
        for c in &constants {
            assert!(
                (c - mean).abs() <= 0.20 * mean,
                "constants spread too wide: {constants:?}"
            );
        }
    }
}
