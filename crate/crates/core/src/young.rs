//! Young integration against finite q-variation paths, the a-priori bound
//! on the integral, controlled ODEs driven by such paths, and numerical
//! checks of the product and composition estimates used throughout.
//!
//! For piecewise-linear integrand and integrator the integral is computed in
//! closed form per cell (`ExactPl`); the `LeftPoint` mode exists to exhibit
//! convergence of left-point Riemann sums as the partition refines.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::paths::{pvar_norm, sup_norm, DiscretePath, Window};

/// How the indefinite integral is accumulated per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMode {
    /// Closed-form integral of the piecewise-linear pair: trapezoidal weight
    /// (X_u + X_v)/2 against the cell increment of Y. Exact for these paths.
    ExactPl,
    /// Left-point Riemann sums on the grid refined `refinement`-fold.
    LeftPoint { refinement: usize },
}

/// Indefinite Young integral plus the two sides of the a-priori estimate.
#[derive(Debug, Clone)]
pub struct YoungIntegralResult {
    /// t -> integral from 0 to t of X dY, on the union grid of X and Y.
    pub integral_path: DiscretePath,
    /// q-variation of the indefinite integral over the whole horizon.
    pub qvar_of_integral: f64,
    /// C(p,q) * (|X_0| + ||X||_p) * ||Y||_q with the explicit constant below.
    pub bound_rhs: f64,
}

/// The sewing constant C(p,q) = (1 - 2^{1-theta})^{-1}, theta = 1/p + 1/q.
/// Requires theta > 1.
pub fn young_constant(p: f64, q: f64) -> Result<f64> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(Error::invalid(format!("exponents must be >= 1, got p={p} q={q}")));
    }
    let theta = 1.0 / p + 1.0 / q;
    if theta <= 1.0 {
        return Err(Error::invalid(format!(
            "Young regime requires 1/p + 1/q > 1, got {theta}"
        )));
    }
    Ok(1.0 / (1.0 - 2.0_f64.powf(1.0 - theta)))
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Dimension of the integral for integrand dim a against integrator dim b:
/// a scalar integrand scales every channel of Y, matching dimensions contract
/// to a scalar.
fn integral_dim(x_dim: usize, y_dim: usize) -> Result<usize> {
    if x_dim == 1 {
        Ok(y_dim)
    } else if x_dim == y_dim {
        Ok(1)
    } else {
        Err(Error::invalid(format!(
            "cannot compose integrand of dim {x_dim} with integrator of dim {y_dim}"
        )))
    }
}

fn cell_contribution(x_avg: &[f64], dy: &[f64], out: &mut [f64]) {
    if x_avg.len() == 1 {
        for (o, d) in out.iter_mut().zip(dy) {
            *o = x_avg[0] * d;
        }
    } else {
        out[0] = x_avg.iter().zip(dy).map(|(a, d)| a * d).sum();
    }
}

/// Indefinite Young integral of X against Y with the a-priori bound evaluated
/// at exponents (p, q); the caller asserts 1/p + 1/q > 1 for the pair it will
/// test against, and the constant is only defined in that regime.
pub fn young_integral(
    x: &DiscretePath,
    y: &DiscretePath,
    mode: IntegrationMode,
    p: f64,
    q: f64,
) -> Result<YoungIntegralResult> {
    let constant = young_constant(p, q)?;
    let out_dim = integral_dim(x.dim(), y.dim())?;
    let grid = x.grid().union(y.grid())?;
    let xs = x.resample(&grid)?;
    let ys = y.resample(&grid)?;
    let n = grid.node_count();

    let mut values = vec![0.0_f64; n * out_dim];
    let mut acc = vec![0.0_f64; out_dim];
    let mut contrib = vec![0.0_f64; out_dim];

    match mode {
        IntegrationMode::ExactPl => {
            for k in 0..n - 1 {
                let xa = xs.value(k);
                let xb = xs.value(k + 1);
                let avg: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| 0.5 * (a + b)).collect();
                let dy = ys.cell_increment(k);
                cell_contribution(&avg, &dy, &mut contrib);
                for (a, c) in acc.iter_mut().zip(&contrib) {
                    *a += c;
                }
                values[(k + 1) * out_dim..(k + 2) * out_dim].copy_from_slice(&acc);
            }
        }
        IntegrationMode::LeftPoint { refinement } => {
            if refinement == 0 {
                return Err(Error::invalid("refinement must be >= 1"));
            }
            let times = grid.times();
            for k in 0..n - 1 {
                let (t0, t1) = (times[k], times[k + 1]);
                for s in 0..refinement {
                    let ta = t0 + (t1 - t0) * s as f64 / refinement as f64;
                    let tb = if s + 1 == refinement {
                        t1
                    } else {
                        t0 + (t1 - t0) * (s + 1) as f64 / refinement as f64
                    };
                    let xa = xs.eval(ta);
                    let ya = ys.eval(ta);
                    let yb = ys.eval(tb);
                    let dy: Vec<f64> = yb.iter().zip(&ya).map(|(b, a)| b - a).collect();
                    cell_contribution(&xa, &dy, &mut contrib);
                    for (a, c) in acc.iter_mut().zip(&contrib) {
                        *a += c;
                    }
                }
                values[(k + 1) * out_dim..(k + 2) * out_dim].copy_from_slice(&acc);
            }
        }
    }

    let integral_path = DiscretePath::new(grid.clone(), out_dim, values)?;
    let qvar_of_integral = pvar_norm(&integral_path, q, Window::full(&grid))?;
    let x_start = euclid(xs.value(0));
    let x_var = pvar_norm(&xs, p, Window::full(&grid))?;
    let y_var = pvar_norm(&ys, q, Window::full(&grid))?;
    let bound_rhs = constant * (x_start + x_var) * y_var;

    Ok(YoungIntegralResult {
        integral_path,
        qvar_of_integral,
        bound_rhs,
    })
}

/// Both sides of the Young estimate
/// ||int X dY||_q <= C(p,q) (|X_0| + ||X||_p) ||Y||_q.
#[derive(Debug, Clone, Copy)]
pub struct YoungBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

pub fn young_bound_report(
    x: &DiscretePath,
    y: &DiscretePath,
    p: f64,
    q: f64,
) -> Result<YoungBoundReport> {
    let result = young_integral(x, y, IntegrationMode::ExactPl, p, q)?;
    Ok(YoungBoundReport {
        lhs: result.qvar_of_integral,
        rhs: result.bound_rhs,
        satisfied: result.qvar_of_integral <= result.bound_rhs,
    })
}

/// Scalar vector field with reported derivative bounds; the bounds feed the
/// composition estimate and the BSDE cell-contraction guard.
pub type ScalarField = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeDirection {
    Forward,
    /// Terminal-value form y_t = y_T + int_t^T g(y_s) d eta_s, solved by
    /// reversing the time axis of the driver (exact for Young ODEs, no Ito
    /// correction).
    Backward,
}

/// ODE controlled by a multichannel driving path:
/// dy = sum_i g_i(y) d eta^i, forward or in terminal-value form.
#[derive(Clone)]
pub struct OdeSpec {
    pub initial: f64,
    pub fields: Vec<ScalarField>,
    pub eta: DiscretePath,
    pub direction: OdeDirection,
}

/// Euler solution on the driver grid plus the Richardson discrepancy against
/// the run with doubled substeps.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub path: DiscretePath,
    pub richardson_gap: f64,
}

fn euler_forward(
    initial: f64,
    fields: &[ScalarField],
    eta: &DiscretePath,
    substeps: usize,
) -> Result<DiscretePath> {
    let n = eta.node_count();
    let mut values = Vec::with_capacity(n);
    let mut y = initial;
    values.push(y);
    for k in 0..n - 1 {
        let dexa = eta.cell_increment(k);
        for _ in 0..substeps {
            let mut step = 0.0;
            for (g, d) in fields.iter().zip(&dexa) {
                step += g(y) * d / substeps as f64;
            }
            y += step;
            if !y.is_finite() {
                return Err(Error::numerical(format!(
                    "ODE state became non-finite in cell {k} (t = {})",
                    eta.grid().times()[k]
                )));
            }
        }
        values.push(y);
    }
    DiscretePath::scalar(eta.grid().clone(), values)
}

/// Explicit Euler with `substeps` uniform sub-steps per driver cell. A second
/// run at doubled substeps provides the reported Richardson discrepancy.
pub fn ode_solve(spec: &OdeSpec, substeps: usize) -> Result<OdeSolution> {
    if substeps == 0 {
        return Err(Error::invalid("substeps must be >= 1"));
    }
    if spec.fields.len() != spec.eta.dim() {
        return Err(Error::invalid(format!(
            "{} vector fields for driver of dimension {}",
            spec.fields.len(),
            spec.eta.dim()
        )));
    }
    match spec.direction {
        OdeDirection::Forward => {
            let coarse = euler_forward(spec.initial, &spec.fields, &spec.eta, substeps)?;
            let fine = euler_forward(spec.initial, &spec.fields, &spec.eta, 2 * substeps)?;
            let gap = coarse
                .values()
                .iter()
                .zip(fine.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(OdeSolution {
                path: coarse,
                richardson_gap: gap,
            })
        }
        OdeDirection::Backward => {
            // Reverse the driver and negate the fields: with eta~_u = eta_{T-u}
            // the terminal-value equation becomes a forward equation for
            // y~_u = y_{T-u} with fields -g; reverse the result back.
            let reversed = spec.eta.reverse();
            let neg_fields: Vec<ScalarField> = spec
                .fields
                .iter()
                .map(|g| {
                    let g = Arc::clone(g);
                    Arc::new(move |y: f64| -g(y)) as ScalarField
                })
                .collect();
            let forward_spec = OdeSpec {
                initial: spec.initial,
                fields: neg_fields,
                eta: reversed,
                direction: OdeDirection::Forward,
            };
            let solved = ode_solve(&forward_spec, substeps)?;
            Ok(OdeSolution {
                path: solved.path.reverse(),
                richardson_gap: solved.richardson_gap,
            })
        }
    }
}

/// lhs <= rhs report for the variation estimates below.
#[derive(Debug, Clone, Copy)]
pub struct LemmaReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Product estimate: ||a b||_p <= ||a||_p ||b||_inf + ||a||_inf ||b||_p
/// for scalar paths, with constant one.
pub fn product_lemma_check(a: &DiscretePath, b: &DiscretePath, p: f64) -> Result<LemmaReport> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::invalid("product estimate requires scalar paths"));
    }
    let ab = a.product(b)?;
    let w = Window::full(ab.grid());
    let lhs = pvar_norm(&ab, p, w)?;
    let a_m = a.resample(ab.grid())?;
    let b_m = b.resample(ab.grid())?;
    let rhs = pvar_norm(&a_m, p, w)? * sup_norm(&b_m, w)?
        + sup_norm(&a_m, w)? * pvar_norm(&b_m, p, w)?;
    Ok(LemmaReport {
        lhs,
        rhs,
        satisfied: lhs <= rhs + 1e-12 * (1.0 + rhs),
    })
}

/// Composition difference estimate for g in C^2_b:
/// ||g(a) - g(a')||_p <= c [ ||a - a'||_p + (||a||_p + ||a'||_p) ||a - a'||_inf ],
/// c = max(|Dg|_inf, |D2g|_inf). Derivative bounds are supplied by the caller.
pub fn composition_lemma_check(
    g: impl Fn(f64) -> f64,
    dg_bound: f64,
    d2g_bound: f64,
    a: &DiscretePath,
    a_prime: &DiscretePath,
    p: f64,
) -> Result<LemmaReport> {
    if a.dim() != 1 || a_prime.dim() != 1 {
        return Err(Error::invalid("composition estimate requires scalar paths"));
    }
    if !dg_bound.is_finite() || !d2g_bound.is_finite() || dg_bound < 0.0 || d2g_bound < 0.0 {
        return Err(Error::invalid(
            "finite nonnegative derivative bounds are required",
        ));
    }
    let grid = a.grid().union(a_prime.grid())?;
    let am = a.resample(&grid)?;
    let apm = a_prime.resample(&grid)?;
    let w = Window::full(&grid);

    let ga = am.map_scalar(&g)?;
    let gap = apm.map_scalar(&g)?;
    let lhs = pvar_norm(&ga.sub(&gap)?, p, w)?;

    let diff = am.sub(&apm)?;
    let c = dg_bound.max(d2g_bound);
    let rhs = c
        * (pvar_norm(&diff, p, w)?
            + (pvar_norm(&am, p, w)? + pvar_norm(&apm, p, w)?) * sup_norm(&diff, w)?);
    Ok(LemmaReport {
        lhs,
        rhs,
        satisfied: lhs <= rhs + 1e-12 * (1.0 + rhs),
    })
}
