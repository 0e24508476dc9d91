//! CSV and JSON interchange, shared by the CLI and the test fixtures.
//!
//! Floating-point fields are written with Rust's shortest round-trip
//! formatting so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::bsde::BsdeSolution;
use crate::error::{Error, Result};
use crate::montecarlo::PathEnsemble;
use crate::paths::{DiscretePath, TimeGrid};
use crate::rpde::PdeSolution;
use crate::signals::QvarProfileRow;

/// `t,x1,...,xd` with one row per node.
pub fn path_to_csv(path: &DiscretePath) -> String {
    let mut out = String::from("t");
    for c in 1..=path.dim() {
        let _ = write!(out, ",x{c}");
    }
    out.push('\n');
    for (k, &t) in path.grid().times().iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in path.value(k) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Parse the CSV emitted by [`path_to_csv`]; errors carry line numbers.
pub fn path_from_csv(text: &str) -> Result<DiscretePath> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid("empty path CSV"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.is_empty() || cols[0] != "t" || cols.len() < 2 {
        return Err(Error::invalid(format!(
            "line 1: expected header t,x1,...  got '{header}'"
        )));
    }
    let dim = cols.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::invalid(format!(
                "line {}: expected {} fields, got {}",
                idx + 1,
                dim + 1,
                fields.len()
            )));
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::invalid(format!(
                    "line {}, field {}: cannot parse '{}' as a number",
                    idx + 1,
                    col + 1,
                    field
                ))
            })?;
            if col == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    DiscretePath::new(TimeGrid::new(times)?, dim, values)
}

pub fn write_path_csv(path: &DiscretePath, file: &Path) -> Result<()> {
    fs::write(file, path_to_csv(path))?;
    Ok(())
}

pub fn read_path_csv(file: &Path) -> Result<DiscretePath> {
    let text = fs::read_to_string(file)?;
    path_from_csv(&text)
}

/// Matrix CSV: rows are time nodes, columns are space nodes; the header
/// carries the space coordinates.
pub fn pde_solution_to_csv(solution: &PdeSolution) -> String {
    let mut out = String::from("t");
    for x in &solution.xs {
        let _ = write!(out, ",{x}");
    }
    out.push('\n');
    for (i, &t) in solution.times.iter().enumerate() {
        let _ = write!(out, "{t}");
        for k in 0..solution.xs.len() {
            let _ = write!(out, ",{}", solution.value(i, k));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct PdeSolutionMeta<'a> {
    scheme: &'a str,
    seed: Option<u64>,
    paths: Option<usize>,
    warnings: &'a [String],
    time_nodes: usize,
    space_nodes: usize,
}

pub fn pde_metadata_json(solution: &PdeSolution) -> String {
    let meta = PdeSolutionMeta {
        scheme: &solution.metadata.scheme,
        seed: solution.metadata.seed,
        paths: solution.metadata.paths,
        warnings: &solution.metadata.warnings,
        time_nodes: solution.times.len(),
        space_nodes: solution.xs.len(),
    };
    serde_json::to_string_pretty(&meta).expect("metadata serializes")
}

/// Long-form per-slice export: `t,sample,y,z1,...,zd`, grouped by slice.
pub fn bsde_solution_to_csv(solution: &BsdeSolution) -> String {
    let mut out = String::from("t,sample,y");
    for c in 1..=solution.dim_w {
        let _ = write!(out, ",z{c}");
    }
    out.push('\n');
    for (i, &t) in solution.grid.times().iter().enumerate() {
        for path in 0..solution.paths {
            let _ = write!(out, "{t},{path},{}", solution.y_at(path, i));
            for zc in solution.z_at(path, i) {
                let _ = write!(out, ",{zc}");
            }
            out.push('\n');
        }
    }
    out
}

/// Fixed-name summary record for a BSDE solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub y0: f64,
    pub bp_norm: f64,
    pub bmo_norm: f64,
    pub scheme: crate::bsde::SchemeTag,
    pub seed: u64,
    pub steps: usize,
    pub paths: usize,
}

impl SolutionSummary {
    pub fn new(solution: &BsdeSolution, bp_norm: f64, bmo_norm: f64) -> Self {
        SolutionSummary {
            y0: solution.y0_mean(),
            bp_norm,
            bmo_norm,
            scheme: solution.scheme,
            seed: solution.seed,
            steps: solution.grid.cell_count(),
            paths: solution.paths,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Debug export of an ensemble sample range: `t,p<i>_x<c>,...` columns.
pub fn ensemble_to_csv(ensemble: &PathEnsemble, first: usize, count: usize) -> Result<String> {
    let last = first
        .checked_add(count)
        .filter(|&l| l <= ensemble.paths)
        .ok_or_else(|| Error::invalid("sample range outside the ensemble"))?;
    let mut out = String::from("t");
    for p in first..last {
        for c in 1..=ensemble.dim {
            let _ = write!(out, ",p{p}_x{c}");
        }
    }
    out.push('\n');
    for (k, &t) in ensemble.grid.times().iter().enumerate() {
        let _ = write!(out, "{t}");
        for p in first..last {
            for v in ensemble.value(p, k) {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// `exponent,norm,dyadic_0,...` rows of a variation profile.
pub fn qvar_profile_to_csv(rows: &[QvarProfileRow]) -> String {
    let levels = rows.first().map(|r| r.dyadic.len()).unwrap_or(0);
    let mut out = String::from("exponent,norm");
    for l in 0..levels {
        let _ = write!(out, ",dyadic_{l}");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{},{}", row.exponent, row.norm);
        for d in &row.dyadic {
            let _ = write!(out, ",{d}");
        }
        out.push('\n');
    }
    out
}

/// Stability study table with fixed headers.
pub fn stability_rows_to_csv(rows: &[crate::bsde::StabilityRow]) -> String {
    let mut out = String::from("level,qvar_distance,y0_gap,y0_se,bp_gap\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.level, r.qvar_distance, r.y0_gap, r.y0_se, r.bp_gap
        );
    }
    out
}

/// Convergence study table with fixed headers; a missing Cauchy entry (first
/// level) is left empty.
pub fn convergence_rows_to_csv(rows: &[crate::rpde::ConvergenceRow]) -> String {
    let mut out = String::from("level,qvar_distance,cauchy_gap,mc_gap\n");
    for r in rows {
        let cauchy = r
            .cauchy_gap
            .map(|v| v.to_string())
            .unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.level, r.qvar_distance, cauchy, r.mc_gap);
    }
    out
}
