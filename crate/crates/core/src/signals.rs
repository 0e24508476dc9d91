//! Generation of deterministic driving signals of finite q-variation and of
//! smooth approximation sequences converging to them in variation distance.
//!
//! Fractional Brownian motion with Hurst index H > 1/2 is the canonical
//! nontrivial signal here: for q > 1/H its sample paths have finite
//! q-variation, which keeps q < 2 on the admissible range of H. Smoothing
//! uses discrete moving averages; on a grid they play the role of mollifiers
//! exactly and cheaply.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{pvar_norm, var_distance, DiscretePath, TimeGrid, Window};
use crate::rng;

/// Grids beyond this size would need more than a dense covariance
/// factorization; reject instead of grinding.
pub const MAX_FBM_NODES: usize = 4096;

/// Recipe for a driving signal. Deterministic: the same spec and grid always
/// produce the same path, bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSpec {
    pub signal: EtaKind,
    pub dim: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EtaKind {
    /// Per-channel A_i sin(2 pi f_i t + phi_i).
    Sinusoid {
        amplitudes: Vec<f64>,
        frequencies: Vec<f64>,
        phases: Vec<f64>,
    },
    /// Piecewise-linear path with seeded Gaussian increments on an internal
    /// uniform grid of `nodes` nodes, then interpolated onto the target grid.
    RandomPl { nodes: usize, scale: f64, seed: u64 },
    /// Fractional Brownian motion, H strictly in (1/2, 1), sampled exactly by
    /// Cholesky factorization of the covariance per channel.
    Fbm { hurst: f64, seed: u64 },
    /// Moving-average smoothing of a base spec; the window halves per level.
    Mollified { base: Box<EtaSpec>, level: u32 },
}

/// Generated path plus disclosure of any numerical fallback applied.
#[derive(Debug, Clone)]
pub struct EtaSample {
    pub path: DiscretePath,
    /// Diagonal jitter added to the fBm covariance when the factorization
    /// failed as given; None when the factorization was clean.
    pub covariance_jitter: Option<f64>,
}

impl EtaSpec {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("signal dimension must be >= 1"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("signal horizon must be > 0"));
        }
        match &self.signal {
            EtaKind::Sinusoid {
                amplitudes,
                frequencies,
                phases,
            } => {
                if amplitudes.len() != self.dim
                    || frequencies.len() != self.dim
                    || phases.len() != self.dim
                {
                    return Err(Error::invalid(
                        "sinusoid parameter vectors must match the dimension",
                    ));
                }
                if amplitudes.iter().any(|a| !a.is_finite()) {
                    return Err(Error::invalid("sinusoid amplitudes must be finite"));
                }
            }
            EtaKind::RandomPl { nodes, scale, .. } => {
                if *nodes < 2 {
                    return Err(Error::invalid("random-pl needs at least 2 nodes"));
                }
                if !scale.is_finite() {
                    return Err(Error::invalid("random-pl scale must be finite"));
                }
            }
            EtaKind::Fbm { hurst, .. } => {
                if !(*hurst > 0.5 && *hurst < 1.0) {
                    return Err(Error::invalid(format!(
                        "Hurst index must lie strictly in (0.5, 1), got {hurst}"
                    )));
                }
            }
            EtaKind::Mollified { base, .. } => {
                if base.dim != self.dim {
                    return Err(Error::invalid("mollified base must share the dimension"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }
}

/// fBm covariance R(s, t) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
}

/// Lower Cholesky factor of a dense symmetric matrix; fails on a
/// non-positive pivot instead of patching silently.
fn cholesky_lower(matrix: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::numerical(format!(
                        "covariance pivot {sum} non-positive at row {i}"
                    )));
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

fn fbm_channels(
    grid: &TimeGrid,
    dim: usize,
    hurst: f64,
    seed: u64,
) -> Result<(Vec<f64>, Option<f64>)> {
    let n = grid.node_count() - 1;
    let times = &grid.times()[1..];
    let mut cov = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let c = fbm_covariance(times[j], times[i], hurst);
            cov[i * n + j] = c;
            cov[j * n + i] = c;
        }
    }

    let scale = times.last().unwrap().powf(2.0 * hurst);
    let mut jitter_used = None;
    let mut jitter = 1e-12 * scale;
    let lower = loop {
        match cholesky_lower(&cov, n) {
            Ok(l) => break l,
            Err(_) if jitter <= 1e-6 * scale => {
                for i in 0..n {
                    cov[i * n + i] += jitter;
                }
                jitter_used = Some(jitter_used.unwrap_or(0.0) + jitter);
                jitter *= 10.0;
            }
            Err(e) => return Err(e),
        }
    };

    let mut values = vec![0.0_f64; (n + 1) * dim];
    for channel in 0..dim {
        let z: Vec<f64> = (0..n)
            .map(|j| rng::keyed_normal(seed, channel as u64, j as u64, 0))
            .collect();
        for i in 0..n {
            let mut v = 0.0;
            for j in 0..=i {
                v += lower[i * n + j] * z[j];
            }
            values[(i + 1) * dim + channel] = v;
        }
    }
    Ok((values, jitter_used))
}

/// Centered moving average with index half-width `half_width`; the window is
/// clamped at the boundary, so endpoint values are smoothed too (a genuine
/// mollification, perturbing the path everywhere including its endpoints).
pub fn moving_average(path: &DiscretePath, half_width: usize) -> DiscretePath {
    if half_width == 0 {
        return path.clone();
    }
    let n = path.node_count();
    let dim = path.dim();
    let mut values = vec![0.0_f64; n * dim];
    for i in 0..n {
        let lo = i.saturating_sub(half_width);
        let hi = (i + half_width).min(n - 1);
        let count = (hi - lo + 1) as f64;
        for c in 0..dim {
            let mut sum = 0.0;
            for j in lo..=hi {
                sum += path.value(j)[c];
            }
            values[i * dim + c] = sum / count;
        }
    }
    DiscretePath::new(path.grid().clone(), dim, values)
        .expect("smoothing preserves path validity")
}

fn mollify_half_width(cells: usize, level: u32) -> usize {
    (cells / 4) >> level.min(63)
}

/// Second smoothing family: keep every `stride`-th node (plus the last) and
/// interpolate linearly back onto the original grid. Stride 1 is the
/// identity.
pub fn coarse_interpolation(path: &DiscretePath, stride: usize) -> Result<DiscretePath> {
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    if stride == 1 {
        return Ok(path.clone());
    }
    let n = path.node_count();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut k = 0;
    while k < n {
        times.push(path.grid().times()[k]);
        values.extend_from_slice(path.value(k));
        k += stride;
    }
    if *times.last().unwrap() < path.grid().horizon() {
        times.push(path.grid().horizon());
        values.extend_from_slice(path.value(n - 1));
    }
    let coarse = DiscretePath::new(TimeGrid::new(times)?, path.dim(), values)?;
    coarse.resample(path.grid())
}

/// Sample the signal described by `spec` on `grid`.
pub fn generate_eta(spec: &EtaSpec, grid: &TimeGrid) -> Result<EtaSample> {
    spec.validate()?;
    if (grid.horizon() - spec.horizon).abs() > 1e-9 * (1.0 + spec.horizon) {
        return Err(Error::invalid(format!(
            "grid horizon {} does not match the spec horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    match &spec.signal {
        EtaKind::Sinusoid {
            amplitudes,
            frequencies,
            phases,
        } => {
            let n = grid.node_count();
            let mut values = vec![0.0_f64; n * spec.dim];
            for (k, &t) in grid.times().iter().enumerate() {
                for c in 0..spec.dim {
                    values[k * spec.dim + c] = amplitudes[c]
                        * (2.0 * std::f64::consts::PI * frequencies[c] * t + phases[c]).sin();
                }
            }
            Ok(EtaSample {
                path: DiscretePath::new(grid.clone(), spec.dim, values)?,
                covariance_jitter: None,
            })
        }
        EtaKind::RandomPl { nodes, scale, seed } => {
            let internal = TimeGrid::uniform(spec.horizon, nodes - 1)?;
            let mut values = vec![0.0_f64; nodes * spec.dim];
            for c in 0..spec.dim {
                let mut acc = 0.0;
                for k in 1..*nodes {
                    acc += scale * rng::keyed_normal(*seed, c as u64, k as u64, 1);
                    values[k * spec.dim + c] = acc;
                }
            }
            let base = DiscretePath::new(internal, spec.dim, values)?;
            Ok(EtaSample {
                path: base.resample(grid)?,
                covariance_jitter: None,
            })
        }
        EtaKind::Fbm { hurst, seed } => {
            if grid.node_count() > MAX_FBM_NODES {
                return Err(Error::invalid(format!(
                    "fBm sampling limited to {MAX_FBM_NODES} nodes, grid has {}",
                    grid.node_count()
                )));
            }
            let (values, jitter) = fbm_channels(grid, spec.dim, *hurst, *seed)?;
            Ok(EtaSample {
                path: DiscretePath::new(grid.clone(), spec.dim, values)?,
                covariance_jitter: jitter,
            })
        }
        EtaKind::Mollified { base, level } => {
            let inner = generate_eta(base, grid)?;
            let h = mollify_half_width(grid.cell_count(), *level);
            Ok(EtaSample {
                path: moving_average(&inner.path, h),
                covariance_jitter: inner.covariance_jitter,
            })
        }
    }
}

/// Moving-average smoothings of `eta` with geometrically shrinking windows,
/// together with the q-variation distance of each level to `eta`.
#[derive(Debug, Clone)]
pub struct ApproximationLadder {
    pub paths: Vec<DiscretePath>,
    pub distances: Vec<f64>,
}

pub fn approximation_sequence(
    eta: &DiscretePath,
    q: f64,
    levels: usize,
) -> Result<ApproximationLadder> {
    if levels < 2 {
        return Err(Error::invalid("approximation ladder needs at least 2 levels"));
    }
    let cells = eta.grid().cell_count();
    let mut paths = Vec::with_capacity(levels);
    let mut distances = Vec::with_capacity(levels);
    for level in 0..levels {
        let h = mollify_half_width(cells, level as u32);
        let smoothed = moving_average(eta, h);
        distances.push(var_distance(&smoothed, eta, q)?);
        paths.push(smoothed);
    }
    Ok(ApproximationLadder { paths, distances })
}

/// One row per requested exponent: the full-window variation norm plus the
/// same quantity aggregated over dyadic sub-windows, for inspection of how
/// mass accumulates at smaller scales.
#[derive(Debug, Clone, Serialize)]
pub struct QvarProfileRow {
    pub exponent: f64,
    pub norm: f64,
    pub dyadic: Vec<f64>,
}

pub const QVAR_PROFILE_DYADIC_LEVELS: usize = 4;

pub fn qvar_profile(eta: &DiscretePath, exponents: &[f64]) -> Result<Vec<QvarProfileRow>> {
    let n = eta.node_count() - 1;
    let mut rows = Vec::with_capacity(exponents.len());
    for &p in exponents {
        if !(p >= 1.0) {
            return Err(Error::invalid(format!("profile exponent must be >= 1, got {p}")));
        }
        let norm = pvar_norm(eta, p, Window::full(eta.grid()))?;
        let mut dyadic = Vec::with_capacity(QVAR_PROFILE_DYADIC_LEVELS);
        for level in 0..QVAR_PROFILE_DYADIC_LEVELS {
            let pieces = 1usize << level;
            let mut sum = 0.0;
            for j in 0..pieces {
                let lo = j * n / pieces;
                let hi = (j + 1) * n / pieces;
                if hi > lo {
                    sum += pvar_norm(eta, p, Window::new(lo, hi)?)?.powf(p);
                }
            }
            dyadic.push(sum.powf(1.0 / p));
        }
        rows.push(QvarProfileRow {
            exponent: p,
            norm,
            dyadic,
        });
    }
    Ok(rows)
}
