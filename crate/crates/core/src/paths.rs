//! Discrete paths on time grids and exact computation of variation norms.
//!
//! A [`DiscretePath`] is a time grid plus one d-dimensional value per node,
//! always interpreted as its piecewise-linear extension. For piecewise-linear
//! paths the p-variation supremum is attained on partitions whose points are
//! grid nodes, so the node-restricted dynamic program in [`pvar_norm`] is
//! exact, and [`brute_force_pvar`] (full partition enumeration) serves as an
//! independent oracle on small windows.

use crate::error::{Error, Result};

/// Windows longer than this are rejected rather than silently approximated;
/// the dynamic program is O(n^2) in window length.
pub const MAX_PVAR_WINDOW: usize = 20_000;

/// Enumeration over all partitions is exponential; cap the window size.
pub const MAX_BRUTE_FORCE_WINDOW: usize = 14;

/// Strictly increasing time nodes on [0, T] with first node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("time grid needs at least 2 nodes"));
        }
        if times[0] != 0.0 {
            return Err(Error::invalid(format!(
                "time grid must start at 0, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::invalid(format!(
                    "time grid must be strictly increasing and finite, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid { times })
    }

    /// Uniform grid with `cells` cells on [0, horizon].
    pub fn uniform(horizon: f64, cells: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be > 0, got {horizon}")));
        }
        if cells == 0 {
            return Err(Error::invalid("uniform grid needs at least 1 cell"));
        }
        let times = (0..=cells)
            .map(|k| {
                if k == cells {
                    horizon
                } else {
                    horizon * k as f64 / cells as f64
                }
            })
            .collect();
        TimeGrid::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node_count(&self) -> usize {
        self.times.len()
    }

    pub fn cell_count(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Length of cell i, i.e. t_{i+1} - t_i.
    pub fn cell(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// Largest cell length.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index of the node matching `t` up to a small relative tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * (1.0 + self.horizon());
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Union of the two node sets. Grids must share the same horizon.
    pub fn union(&self, other: &TimeGrid) -> Result<TimeGrid> {
        if (self.horizon() - other.horizon()).abs() > 1e-12 * (1.0 + self.horizon()) {
            return Err(Error::invalid(format!(
                "cannot merge grids with horizons {} and {}",
                self.horizon(),
                other.horizon()
            )));
        }
        let mut times: Vec<f64> = self
            .times
            .iter()
            .chain(other.times.iter())
            .copied()
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let tol = 1e-12 * (1.0 + self.horizon());
        times.dedup_by(|a, b| (*a - *b).abs() <= tol);
        TimeGrid::new(times)
    }
}

/// A window of grid nodes [lo, hi] with lo < hi.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub lo: usize,
    pub hi: usize,
}

impl Window {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo >= hi {
            return Err(Error::invalid(format!("empty window [{lo}, {hi}]")));
        }
        Ok(Window { lo, hi })
    }

    pub fn full(grid: &TimeGrid) -> Self {
        Window {
            lo: 0,
            hi: grid.node_count() - 1,
        }
    }

    pub fn node_count(&self) -> usize {
        self.hi - self.lo + 1
    }

    fn validate(&self, nodes: usize) -> Result<()> {
        if self.hi >= nodes {
            return Err(Error::invalid(format!(
                "window [{}, {}] exceeds path with {} nodes",
                self.lo, self.hi, nodes
            )));
        }
        Ok(())
    }
}

/// A piecewise-linear path: grid nodes plus a d-dimensional value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    grid: TimeGrid,
    dim: usize,
    // Node-major storage: values[node * dim + coord].
    values: Vec<f64>,
}

impl DiscretePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("path dimension must be >= 1"));
        }
        if values.len() != grid.node_count() * dim {
            return Err(Error::invalid(format!(
                "value count {} does not match {} nodes x dim {}",
                values.len(),
                grid.node_count(),
                dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path values must be finite"));
        }
        Ok(DiscretePath { grid, dim, values })
    }

    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        DiscretePath::new(grid, 1, values)
    }

    /// Sample a scalar function of time on the grid nodes.
    pub fn scalar_from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.times().iter().map(|&t| f(t)).collect();
        DiscretePath::scalar(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    pub fn scalar_value(&self, node: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.values[node * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation at time t (clamped to [0, T]).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let times = self.grid.times();
        if t <= times[0] {
            return self.value(0).to_vec();
        }
        if t >= *times.last().unwrap() {
            return self.value(self.node_count() - 1).to_vec();
        }
        let k = match times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.value(k).to_vec(),
            Err(k) => k - 1,
        };
        let w = (t - times[k]) / (times[k + 1] - times[k]);
        let a = self.value(k);
        let b = self.value(k + 1);
        a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
    }

    /// The same path re-sampled on another grid by linear interpolation.
    /// Exact when the new grid contains the old nodes.
    pub fn resample(&self, grid: &TimeGrid) -> Result<DiscretePath> {
        let mut values = Vec::with_capacity(grid.node_count() * self.dim);
        for &t in grid.times() {
            values.extend_from_slice(&self.eval(t));
        }
        DiscretePath::new(grid.clone(), self.dim, values)
    }

    /// Euclidean norm of the increment between nodes i and j.
    pub fn increment_norm(&self, i: usize, j: usize) -> f64 {
        let a = self.value(i);
        let b = self.value(j);
        a.iter()
            .zip(b)
            .map(|(x, y)| (y - x) * (y - x))
            .sum::<f64>()
            .sqrt()
    }

    /// Per-coordinate increment over cell k, as a vector.
    pub fn cell_increment(&self, k: usize) -> Vec<f64> {
        let a = self.value(k);
        let b = self.value(k + 1);
        a.iter().zip(b).map(|(x, y)| y - x).collect()
    }

    pub fn scale(&self, c: f64) -> DiscretePath {
        DiscretePath {
            grid: self.grid.clone(),
            dim: self.dim,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Difference a - b on the union grid.
    pub fn sub(&self, other: &DiscretePath) -> Result<DiscretePath> {
        if self.dim != other.dim {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        let grid = self.grid.union(other.grid())?;
        let a = self.resample(&grid)?;
        let b = other.resample(&grid)?;
        let values = a
            .values
            .iter()
            .zip(b.values.iter())
            .map(|(x, y)| x - y)
            .collect();
        DiscretePath::new(grid, self.dim, values)
    }

    /// Pointwise product of two scalar paths on the union grid.
    pub fn product(&self, other: &DiscretePath) -> Result<DiscretePath> {
        if self.dim != 1 || other.dim != 1 {
            return Err(Error::invalid("pointwise product requires scalar paths"));
        }
        let grid = self.grid.union(other.grid())?;
        let a = self.resample(&grid)?;
        let b = other.resample(&grid)?;
        let values = a
            .values
            .iter()
            .zip(b.values.iter())
            .map(|(x, y)| x * y)
            .collect();
        DiscretePath::new(grid, 1, values)
    }

    /// Apply a scalar function at every node of a scalar path.
    pub fn map_scalar(&self, f: impl Fn(f64) -> f64) -> Result<DiscretePath> {
        if self.dim != 1 {
            return Err(Error::invalid("map_scalar requires a scalar path"));
        }
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        DiscretePath::new(self.grid.clone(), 1, values)
    }

    /// Time reversal: node k of the result carries the value at node n-k,
    /// at time T - t_{n-k}. Used to solve terminal-value ODEs forward.
    pub fn reverse(&self) -> DiscretePath {
        let horizon = self.grid.horizon();
        let n = self.node_count();
        let mut times = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(self.values.len());
        for k in 0..n {
            let src = n - 1 - k;
            let t = if src == 0 {
                horizon
            } else {
                horizon - self.grid.times()[src]
            };
            times.push(t);
            values.extend_from_slice(self.value(src));
        }
        times[0] = 0.0;
        DiscretePath {
            grid: TimeGrid::new(times).expect("reversal preserves grid validity"),
            dim: self.dim,
            values,
        }
    }
}

/// Exact p-variation of the piecewise-linear path over a node window,
/// computed by dynamic programming over partition points at grid nodes:
///
/// ```text
/// best[j] = max over m < j of best[m] + |X_j - X_m|^p
/// ```
///
/// and returning the window total to the power 1/p. Increments of
/// multidimensional paths are measured in the Euclidean norm.
pub fn pvar_norm(path: &DiscretePath, p: f64, window: Window) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("variation exponent must be >= 1, got {p}")));
    }
    window.validate(path.node_count())?;
    if window.node_count() > MAX_PVAR_WINDOW {
        return Err(Error::invalid(format!(
            "window of {} nodes exceeds the {} node limit",
            window.node_count(),
            MAX_PVAR_WINDOW
        )));
    }
    let n = window.node_count();
    let mut best = vec![0.0_f64; n];
    for j in 1..n {
        let mut b = f64::NEG_INFINITY;
        for m in 0..j {
            let d = path.increment_norm(window.lo + m, window.lo + j);
            let cand = best[m] + d.powf(p);
            if cand > b {
                b = cand;
            }
        }
        best[j] = b;
    }
    Ok(best[n - 1].powf(1.0 / p))
}

/// Supremum norm over the window; piecewise-linear paths attain extrema at
/// nodes, so the node maximum is exact.
pub fn sup_norm(path: &DiscretePath, window: Window) -> Result<f64> {
    window.validate(path.node_count())?;
    let mut best = 0.0_f64;
    for k in window.lo..=window.hi {
        let norm = path
            .value(k)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm > best {
            best = norm;
        }
    }
    Ok(best)
}

/// q-variation distance |a_0 - b_0| + ||a - b||_{q-var} on the union grid.
pub fn var_distance(a: &DiscretePath, b: &DiscretePath, q: f64) -> Result<f64> {
    let diff = a.sub(b)?;
    let start: f64 = diff
        .value(0)
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let var = pvar_norm(&diff, q, Window::full(diff.grid()))?;
    Ok(start + var)
}

/// Exhaustive-enumeration p-variation over all partitions of the window.
/// Test oracle for [`pvar_norm`]; windows are capped at
/// [`MAX_BRUTE_FORCE_WINDOW`] nodes.
pub fn brute_force_pvar(path: &DiscretePath, p: f64, window: Window) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("variation exponent must be >= 1, got {p}")));
    }
    window.validate(path.node_count())?;
    if window.node_count() > MAX_BRUTE_FORCE_WINDOW {
        return Err(Error::invalid(format!(
            "brute-force window of {} nodes exceeds the {} node limit",
            window.node_count(),
            MAX_BRUTE_FORCE_WINDOW
        )));
    }
    let interior = window.node_count() - 2;
    let mut best = 0.0_f64;
    let mut points = Vec::with_capacity(window.node_count());
    for mask in 0..(1_u64 << interior) {
        points.clear();
        points.push(window.lo);
        for b in 0..interior {
            if mask & (1 << b) != 0 {
                points.push(window.lo + 1 + b);
            }
        }
        points.push(window.hi);
        let sum: f64 = points
            .windows(2)
            .map(|w| path.increment_norm(w[0], w[1]).powf(p))
            .sum();
        if sum > best {
            best = sum;
        }
    }
    Ok(best.powf(1.0 / p))
}
