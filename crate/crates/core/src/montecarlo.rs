//! Brownian ensemble generation and forward SDE simulation.
//!
//! Increments are drawn from the counter-based generator keyed by
//! (seed, path, node, coordinate), so ensembles are reproducible and
//! independent of the parallel schedule. Per-path work parallelizes with
//! rayon; every path writes only its own slot.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::paths::{DiscretePath, TimeGrid};
use crate::rng;

/// Dense ensemble of d-dimensional paths on a shared grid,
/// stored path-major: values[((path * nodes) + node) * dim + coord].
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub paths: usize,
    pub dim: usize,
    values: Vec<f64>,
}

impl PathEnsemble {
    pub fn zeros(grid: TimeGrid, paths: usize, dim: usize) -> Self {
        let n = grid.node_count();
        PathEnsemble {
            grid,
            paths,
            dim,
            values: vec![0.0; paths * n * dim],
        }
    }

    #[inline]
    pub fn value(&self, path: usize, node: usize) -> &[f64] {
        let n = self.grid.node_count();
        let base = (path * n + node) * self.dim;
        &self.values[base..base + self.dim]
    }

    #[inline]
    pub fn scalar_value(&self, path: usize, node: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.values[(path * self.grid.node_count() + node) * self.dim]
    }

    /// Increment over cell `node` of one path, written into `out`.
    pub fn increment_into(&self, path: usize, node: usize, out: &mut [f64]) {
        let a = self.value(path, node);
        let b = self.value(path, node + 1);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = y - x;
        }
    }

    /// One sample as a standalone path.
    pub fn sample_path(&self, path: usize) -> DiscretePath {
        let n = self.grid.node_count();
        let base = path * n * self.dim;
        DiscretePath::new(
            self.grid.clone(),
            self.dim,
            self.values[base..base + n * self.dim].to_vec(),
        )
        .expect("ensemble rows are valid paths")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn rows_mut(&mut self) -> rayon::slice::ChunksMut<'_, f64> {
        let row = self.grid.node_count() * self.dim;
        self.values.par_chunks_mut(row)
    }
}

/// Brownian ensemble: every path starts at 0, increments over a cell are
/// independent N(0, dt) per coordinate.
#[derive(Debug, Clone)]
pub struct BrownianEnsemble {
    pub seed: u64,
    pub inner: PathEnsemble,
}

impl BrownianEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.inner.grid
    }

    pub fn paths(&self) -> usize {
        self.inner.paths
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    #[inline]
    pub fn value(&self, path: usize, node: usize) -> &[f64] {
        self.inner.value(path, node)
    }

    pub fn increment_into(&self, path: usize, node: usize, out: &mut [f64]) {
        self.inner.increment_into(path, node, out)
    }
}

/// Sample `paths` Brownian paths of dimension `dim` on `grid`.
pub fn sample_brownian(grid: &TimeGrid, paths: usize, dim: usize, seed: u64) -> Result<BrownianEnsemble> {
    if paths == 0 || dim == 0 {
        return Err(Error::invalid("ensemble needs paths >= 1 and dim >= 1"));
    }
    let n = grid.node_count();
    let dts: Vec<f64> = (0..n - 1).map(|k| grid.cell(k).sqrt()).collect();
    let mut ensemble = PathEnsemble::zeros(grid.clone(), paths, dim);
    ensemble.rows_mut().enumerate().for_each(|(m, row)| {
        for k in 0..n - 1 {
            for c in 0..dim {
                let z = rng::keyed_normal(seed, m as u64, k as u64, c as u64);
                row[(k + 1) * dim + c] = row[k * dim + c] + dts[k] * z;
            }
        }
    });
    Ok(BrownianEnsemble {
        seed,
        inner: ensemble,
    })
}

pub type VectorFieldFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Diffusion matrix, row-major state_dim x brownian_dim.
pub type MatrixFieldFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Forward diffusion dX = b(X) dt + sigma(X) dW started from `initial` at
/// `start_time`; before the start node the state is frozen at the initial
/// point.
#[derive(Clone)]
pub struct SdeSpec {
    pub state_dim: usize,
    pub drift: VectorFieldFn,
    pub diffusion: MatrixFieldFn,
    pub initial: Vec<f64>,
    pub start_time: f64,
}

impl SdeSpec {
    /// Scalar state driven by a scalar Brownian motion.
    pub fn scalar(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
        initial: f64,
        start_time: f64,
    ) -> Self {
        SdeSpec {
            state_dim: 1,
            drift: Arc::new(move |x: &[f64]| vec![drift(x[0])]),
            diffusion: Arc::new(move |x: &[f64]| vec![diffusion(x[0])]),
            initial: vec![initial],
            start_time,
        }
    }
}

/// Euler-Maruyama over the ensemble grid:
/// X_{k+1} = X_k + b(X_k) dt_k + sigma(X_k) dW_k from the start node on.
pub fn euler_maruyama(sde: &SdeSpec, ensemble: &BrownianEnsemble) -> Result<PathEnsemble> {
    let grid = ensemble.grid().clone();
    let start = grid.index_of(sde.start_time).ok_or_else(|| {
        Error::invalid(format!(
            "SDE start time {} is not a grid node",
            sde.start_time
        ))
    })?;
    if sde.initial.len() != sde.state_dim {
        return Err(Error::invalid("initial point does not match the state dimension"));
    }
    let n = grid.node_count();
    let m_dim = sde.state_dim;
    let d = ensemble.dim();
    let paths = ensemble.paths();
    let dts: Vec<f64> = (0..n - 1).map(|k| grid.cell(k)).collect();

    let mut out = PathEnsemble::zeros(grid, paths, m_dim);
    let bad_path = std::sync::atomic::AtomicUsize::new(usize::MAX);
    let row_len = n * m_dim;
    out.values
        .par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(m, row)| {
            let mut dw = vec![0.0_f64; d];
            for k in 0..=start {
                row[k * m_dim..(k + 1) * m_dim].copy_from_slice(&sde.initial);
            }
            for k in start..n - 1 {
                let state = row[k * m_dim..(k + 1) * m_dim].to_vec();
                let b = (sde.drift)(&state);
                let sig = (sde.diffusion)(&state);
                ensemble.increment_into(m, k, &mut dw);
                let mut ok = true;
                for i in 0..m_dim {
                    let mut v = state[i] + b[i] * dts[k];
                    for (j, dwj) in dw.iter().enumerate() {
                        v += sig[i * d + j] * dwj;
                    }
                    if !v.is_finite() {
                        ok = false;
                    }
                    row[(k + 1) * m_dim + i] = v;
                }
                if !ok {
                    bad_path.fetch_min(m, std::sync::atomic::Ordering::SeqCst);
                    break;
                }
            }
        });
    let bad = bad_path.load(std::sync::atomic::Ordering::SeqCst);
    if bad != usize::MAX {
        return Err(Error::numerical(format!(
            "SDE state became non-finite on path {bad}"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(steps: usize) -> TimeGrid {
        TimeGrid::uniform(1.0, steps).unwrap()
    }

    #[test]
    fn brownian_terminal_moments() {
        let m = 100_000;
        let ens = sample_brownian(&grid(8), m, 1, 77).unwrap();
        let n = ens.grid().node_count();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for path in 0..m {
            let w_t = ens.value(path, n - 1)[0];
            sum += w_t;
            sum_sq += w_t * w_t;
        }
        let mean = sum / m as f64;
        let var = sum_sq / m as f64 - mean * mean;
        let t = 1.0;
        assert!(mean.abs() <= 3.0 * (t / m as f64).sqrt(), "mean {mean}");
        let se_var = t * (2.0 / (m as f64 - 1.0)).sqrt();
        assert!((var - t).abs() <= 3.0 * se_var, "var {var}");
    }

    #[test]
    fn brownian_is_deterministic_per_seed() {
        let a = sample_brownian(&grid(16), 50, 2, 5).unwrap();
        let b = sample_brownian(&grid(16), 50, 2, 5).unwrap();
        assert_eq!(a.inner.values(), b.inner.values());
        let c = sample_brownian(&grid(16), 50, 2, 6).unwrap();
        assert_ne!(a.inner.values(), c.inner.values());
    }

    #[test]
    fn disjoint_increments_uncorrelated() {
        let m = 50_000;
        let ens = sample_brownian(&grid(4), m, 1, 11).unwrap();
        let mut dot = 0.0;
        for path in 0..m {
            let d1 = ens.value(path, 1)[0] - ens.value(path, 0)[0];
            let d2 = ens.value(path, 3)[0] - ens.value(path, 2)[0];
            dot += d1 * d2;
        }
        let corr = dot / m as f64 / 0.25;
        assert!(corr.abs() < 3.0 / (m as f64).sqrt() + 1e-3, "corr {corr}");
    }

    #[test]
    fn deterministic_drift_is_exact() {
        let ens = sample_brownian(&grid(10), 3, 1, 1).unwrap();
        let sde = SdeSpec::scalar(|_| 1.0, |_| 0.0, 0.0, 0.0);
        let xs = euler_maruyama(&sde, &ens).unwrap();
        for path in 0..3 {
            for (k, &t) in ens.grid().times().iter().enumerate() {
                assert!((xs.scalar_value(path, k) - t).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unit_diffusion_reproduces_brownian() {
        let ens = sample_brownian(&grid(10), 20, 1, 2).unwrap();
        let x0 = 0.4;
        let sde = SdeSpec::scalar(|_| 0.0, |_| 1.0, x0, 0.0);
        let xs = euler_maruyama(&sde, &ens).unwrap();
        for path in 0..20 {
            for k in 0..ens.grid().node_count() {
                let expected = x0 + ens.value(path, k)[0];
                assert!((xs.scalar_value(path, k) - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn geometric_case_matches_moment_oracle() {
        // dX = 0.1 X dt + 0.2 X dW, X_0 = 1: E[X_1] = e^{0.1}.
        let m = 100_000;
        let steps = 200;
        let ens = sample_brownian(&grid(steps), m, 1, 314).unwrap();
        let sde = SdeSpec::scalar(|x| 0.1 * x, |x| 0.2 * x, 1.0, 0.0);
        let xs = euler_maruyama(&sde, &ens).unwrap();
        let n = ens.grid().node_count();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for path in 0..m {
            let x_t = xs.scalar_value(path, n - 1);
            sum += x_t;
            sum_sq += x_t * x_t;
        }
        let mean = sum / m as f64;
        let var = (sum_sq / m as f64 - mean * mean).max(0.0);
        let se = (var / m as f64).sqrt();
        let expected = 0.1_f64.exp();
        assert!(
            (mean - expected).abs() <= 3.0 * se + 2e-4,
            "mean {mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn weak_error_has_first_order_in_the_step() {
        // |E[X_1] - e| for dX = X dt + 0.5 X dW: the drift is strong enough
        // that the Euler bias dominates the Monte-Carlo noise, and the
        // log-log fit of error against step count comes out near order one.
        let m = 200_000;
        let expected = std::f64::consts::E;
        let steps_list = [25usize, 50, 100];
        let mut errors = Vec::new();
        for &steps in &steps_list {
            let ens = sample_brownian(&grid(steps), m, 1, 2718).unwrap();
            let sde = SdeSpec::scalar(|x| x, |x| 0.5 * x, 1.0, 0.0);
            let xs = euler_maruyama(&sde, &ens).unwrap();
            let n = ens.grid().node_count();
            let mean = (0..m).map(|p| xs.scalar_value(p, n - 1)).sum::<f64>() / m as f64;
            errors.push((mean - expected).abs());
        }
        for w in errors.windows(2) {
            assert!(w[1] < w[0], "weak error did not shrink: {errors:?}");
        }
        let xs: Vec<f64> = steps_list.iter().map(|s| (*s as f64).ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 3.0;
        let ym = ys.iter().sum::<f64>() / 3.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        let order = -slope;
        assert!(
            (0.6..=1.4).contains(&order),
            "observed weak order {order} (errors {errors:?})"
        );
    }

    #[test]
    fn start_time_freezes_the_state_before_it() {
        let g = grid(10);
        let s = g.times()[4];
        let ens = sample_brownian(&g, 5, 1, 9).unwrap();
        let sde = SdeSpec::scalar(|_| 0.0, |_| 1.0, 2.0, s);
        let xs = euler_maruyama(&sde, &ens).unwrap();
        for path in 0..5 {
            for k in 0..=4 {
                assert_eq!(xs.scalar_value(path, k), 2.0);
            }
        }
    }

    #[test]
    fn off_grid_start_time_rejected() {
        let ens = sample_brownian(&grid(10), 2, 1, 9).unwrap();
        let sde = SdeSpec::scalar(|_| 0.0, |_| 1.0, 0.0, 0.123456);
        assert!(euler_maruyama(&sde, &ens).is_err());
    }

    #[test]
    fn exploding_coefficients_abort_with_a_path_index() {
        let ens = sample_brownian(&grid(20), 4, 1, 10).unwrap();
        let sde = SdeSpec::scalar(|x| x * x * x * 1e100, |_| 1.0, 1.0, 0.0);
        let err = euler_maruyama(&sde, &ens).err().expect("overflow should abort");
        assert!(err.to_string().contains("path"), "{err}");
    }
}
