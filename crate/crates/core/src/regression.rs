//! Least-squares estimation of conditional expectations on a polynomial
//! basis of the forward state.
//!
//! The design per time slice centers and standardizes the non-constant
//! columns and leaves the intercept unpenalized. Two consequences the solvers
//! rely on: fitting a constant target reproduces it up to roundoff for any
//! ridge parameter, and the fit is linear in the target, so shifting every
//! target by a constant shifts every fitted value by the same constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Basis and ridge configuration for the conditional-expectation estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionSpec {
    /// Total polynomial degree of the state basis.
    pub degree: usize,
    /// Ridge parameter applied to standardized non-constant coefficients.
    pub ridge: f64,
    /// Require at least this many samples per basis function.
    pub min_samples_per_basis: usize,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        RegressionSpec {
            degree: 3,
            ridge: 1e-8,
            min_samples_per_basis: 10,
        }
    }
}

impl RegressionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) {
            return Err(Error::invalid("ridge must be >= 0"));
        }
        if self.min_samples_per_basis == 0 {
            return Err(Error::invalid("min_samples_per_basis must be >= 1"));
        }
        Ok(())
    }
}

/// Multivariate monomials of total degree <= `degree` in `dim` variables,
/// constant term first.
#[derive(Debug, Clone)]
pub struct PolyBasis {
    exponents: Vec<Vec<u32>>,
}

impl PolyBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        let mut exponents = Vec::new();
        let mut current = vec![0u32; dim];
        fn walk(exps: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, pos: usize, left: u32) {
            if pos == current.len() {
                exps.push(current.clone());
                return;
            }
            for e in 0..=left {
                current[pos] = e;
                walk(exps, current, pos + 1, left - e);
            }
            current[pos] = 0;
        }
        walk(&mut exponents, &mut current, 0, degree as u32);
        // Constant first, then by total degree for readability of diagnostics.
        exponents.sort_by_key(|e| (e.iter().sum::<u32>(), e.clone()));
        PolyBasis { exponents }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (slot, exps) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (xi, &e) in x.iter().zip(exps) {
                for _ in 0..e {
                    v *= xi;
                }
            }
            *slot = v;
        }
    }
}

/// Neumaier compensated summation; keeps long reductions exact to a few ulps
/// so that constant targets survive hundreds of chained fits.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Factorized design for one time slice; fit any number of targets against it.
pub struct SliceDesign {
    samples: usize,
    /// Standardized non-constant columns, column-major.
    columns: Vec<f64>,
    kept: usize,
    /// Cholesky factor of (Gram/M + ridge I).
    chol: Vec<f64>,
    pub condition: f64,
    pub ridge_fallback: bool,
    pub dropped_columns: usize,
    /// Largest hat-matrix diagonal: the fitted-value variance at the worst
    /// design point is residual_variance * max_hat.
    pub max_hat: f64,
}

impl SliceDesign {
    /// Build the design from the slice states: `states(m)` returns the
    /// forward state of sample m.
    pub fn from_states<'a>(
        states: impl Fn(usize) -> &'a [f64],
        samples: usize,
        state_dim: usize,
        spec: &RegressionSpec,
    ) -> Result<SliceDesign> {
        spec.validate()?;
        let basis = PolyBasis::new(state_dim, spec.degree);
        if basis.len() * spec.min_samples_per_basis > samples {
            return Err(Error::invalid(format!(
                "basis of size {} needs at least {} samples, got {samples}",
                basis.len(),
                basis.len() * spec.min_samples_per_basis
            )));
        }

        // Evaluate raw columns (skip the constant, it is handled exactly).
        let b_raw = basis.len() - 1;
        let mut raw = vec![0.0_f64; samples * b_raw.max(1)];
        let mut row = vec![0.0_f64; basis.len()];
        if b_raw > 0 {
            for m in 0..samples {
                basis.eval_into(states(m), &mut row);
                for j in 0..b_raw {
                    raw[j * samples + m] = row[j + 1];
                }
            }
        }

        // Center and scale; drop degenerate columns.
        let mut columns = Vec::with_capacity(samples * b_raw);
        let mut kept = 0;
        let mut dropped = 0;
        for j in 0..b_raw {
            let col = &raw[j * samples..(j + 1) * samples];
            let mean = col.iter().sum::<f64>() / samples as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / samples as f64;
            let sd = var.sqrt();
            if !(sd > 1e-12 * (1.0 + mean.abs())) {
                dropped += 1;
                continue;
            }
            columns.extend(col.iter().map(|v| (v - mean) / sd));
            kept += 1;
        }

        // Gram of standardized columns; ridge escalation doubles as the
        // rank-deficiency fallback.
        let mut gram = vec![0.0_f64; kept * kept];
        for a in 0..kept {
            for b in 0..=a {
                let ca = &columns[a * samples..(a + 1) * samples];
                let cb = &columns[b * samples..(b + 1) * samples];
                let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                gram[a * kept + b] = dot / samples as f64;
                gram[b * kept + a] = dot / samples as f64;
            }
        }

        let mut ridge = spec.ridge;
        let mut fallback = false;
        let chol = loop {
            let mut work = gram.clone();
            for i in 0..kept {
                work[i * kept + i] += ridge;
            }
            match cholesky_in_place(&mut work, kept) {
                Ok(()) => break work,
                Err(_) if ridge < 1e-4 => {
                    ridge = (ridge * 10.0).max(1e-10);
                    fallback = true;
                }
                Err(e) => return Err(e),
            }
        };

        let condition = if kept == 0 {
            1.0
        } else {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0_f64;
            for i in 0..kept {
                let d = chol[i * kept + i];
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (hi / lo) * (hi / lo)
        };

        // Largest leverage: 1/M for the intercept plus the quadratic form of
        // the standardized row through the factored Gram.
        let mut max_hat = 1.0 / samples as f64;
        if kept > 0 {
            let mut row = vec![0.0_f64; kept];
            for m in 0..samples {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = columns[j * samples + m];
                }
                // Forward-solve L w = row; the quadratic form is |w|^2.
                let mut quad = 0.0;
                for i in 0..kept {
                    let mut w = row[i];
                    for k in 0..i {
                        w -= chol[i * kept + k] * row[k];
                    }
                    w /= chol[i * kept + i];
                    row[i] = w;
                    quad += w * w;
                }
                let hat = (1.0 + quad) / samples as f64;
                if hat > max_hat {
                    max_hat = hat;
                }
            }
        }

        Ok(SliceDesign {
            samples,
            columns,
            kept,
            chol,
            condition,
            ridge_fallback: fallback,
            dropped_columns: dropped,
            max_hat,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Number of non-constant basis columns kept after degeneracy dropping.
    pub fn kept_columns(&self) -> usize {
        self.kept
    }

    /// Fitted conditional-expectation values for one target vector, plus the
    /// root-mean-square residual.
    pub fn fit(&self, targets: &[f64]) -> (Vec<f64>, f64) {
        assert_eq!(targets.len(), self.samples);
        let mean = compensated_sum(targets.iter().copied()) / self.samples as f64;
        let mut fitted = vec![mean; self.samples];
        if self.kept > 0 {
            let mut rhs = vec![0.0_f64; self.kept];
            for (j, r) in rhs.iter_mut().enumerate() {
                let col = &self.columns[j * self.samples..(j + 1) * self.samples];
                *r = compensated_sum(col.iter().zip(targets).map(|(c, y)| c * (y - mean)))
                    / self.samples as f64;
            }
            let beta = chol_solve(&self.chol, self.kept, &rhs);
            for (j, b) in beta.iter().enumerate() {
                let col = &self.columns[j * self.samples..(j + 1) * self.samples];
                for (f, c) in fitted.iter_mut().zip(col) {
                    *f += b * c;
                }
            }
        }
        let rss: f64 = fitted
            .iter()
            .zip(targets)
            .map(|(f, y)| (y - f) * (y - f))
            .sum();
        (fitted, (rss / self.samples as f64).sqrt())
    }
}

fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::numerical(format!(
                        "Gram pivot {sum} non-positive at row {i}"
                    )));
                }
                a[i * n + j] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in i + 1..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

fn chol_solve(l: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut y = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}
