//! Subcommand dispatch: each command parses its typed config from the
//! effective JSON value, computes, and returns named output files. The
//! caller owns manifest lifecycle and file writing.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};

use young_bsde::bsde::{
    bdg_diagnostic, bmo_norm_estimate, bp_norm_estimate, lipschitz_in_xi, solve_backward,
    solve_picard, stability_in_eta, BsdeSolution, TerminalCondition,
};
use young_bsde::error::{Error, Result};
use young_bsde::io;
use young_bsde::montecarlo::{euler_maruyama, sample_brownian, SdeSpec};
use young_bsde::paths::{pvar_norm, DiscretePath, TimeGrid, Window};
use young_bsde::rpde::{
    fd_reference_solve, feynman_kac_solve, rough_convergence_study, ConvergenceStudyConfig,
    McParams,
};
use young_bsde::signals::{approximation_sequence, generate_eta, qvar_profile, EtaKind, EtaSpec};
use young_bsde::young::{
    composition_lemma_check, ode_solve, product_lemma_check, young_bound_report, young_integral,
    IntegrationMode, OdeDirection, OdeSpec, YoungBoundReport,
};

use crate::config::*;
use crate::manifest::RunManifest;

pub type Outputs = Vec<(String, String)>;

fn timed<T>(manifest: &mut RunManifest, op: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let result = f()?;
    manifest.time(op, start.elapsed().as_secs_f64());
    Ok(result)
}

pub fn dispatch(
    command: &str,
    value: &Value,
    base: &Path,
    manifest: &mut RunManifest,
) -> Result<Outputs> {
    match command {
        "pvar" => run_pvar(value, base, manifest),
        "young" => run_young(value, base, manifest),
        "ode" => run_ode(value, base, manifest),
        "gen-eta" => run_gen_eta(value, manifest),
        "sde" => run_sde(value, manifest),
        "bsde" => run_bsde(value, base, manifest),
        "pde" => run_pde(value, base, manifest),
        "study-stability" => run_study_stability(value, base, manifest),
        "study-convergence" => run_study_convergence(value, base, manifest),
        other => Err(Error::invalid(format!("unknown subcommand '{other}'"))),
    }
}

fn run_pvar(value: &Value, base: &Path, manifest: &mut RunManifest) -> Result<Outputs> {
    let cfg: PvarCfg = from_value(value)?;
    let path = cfg.path.resolve(base)?;
    let window = match cfg.window {
        Some((lo, hi)) => Window::new(lo, hi)?,
        None => Window::full(path.grid()),
    };
    for &p in &cfg.exponents {
        let v = timed(manifest, &format!("pvar_p{p}"), || pvar_norm(&path, p, window))?;
        println!("pvar(p={p}) = {v}");
    }
    let rows = timed(manifest, "qvar_profile", || {
        qvar_profile(&path, &cfg.exponents)
    })?;
    Ok(vec![("profile.csv".into(), io::qvar_profile_to_csv(&rows))])
}

fn bound_report_json(report: &YoungBoundReport, constant: f64) -> String {
    serde_json::to_string_pretty(&json!({
        "lhs": report.lhs,
        "rhs": report.rhs,
        "satisfied": report.satisfied,
        "constant": constant,
    }))
    .expect("report serializes")
}

fn run_young(value: &Value, base: &Path, manifest: &mut RunManifest) -> Result<Outputs> {
    let cfg: YoungCfg = from_value(value)?;
    let x = cfg.x.resolve(base)?;
    let y = cfg.y.resolve(base)?;
    let mode = match cfg.mode.as_str() {
        "exact-pl" => IntegrationMode::ExactPl,
        "left-point" => IntegrationMode::LeftPoint {
            refinement: cfg.refinement,
        },
        other => return Err(Error::invalid(format!("unknown integration mode '{other}'"))),
    };
    let result = timed(manifest, "young_integral", || {
        young_integral(&x, &y, mode, cfg.p, cfg.q)
    })?;
    let report = timed(manifest, "young_bound", || {
        young_bound_report(&x, &y, cfg.p, cfg.q)
    })?;
    let constant = young_bsde::young::young_constant(cfg.p, cfg.q)?;
    println!(
        "young bound: lhs = {}, rhs = {}, satisfied = {}",
        report.lhs, report.rhs, report.satisfied
    );

    let mut outputs = vec![
        ("integral.csv".into(), io::path_to_csv(&result.integral_path)),
        ("bound.json".into(), bound_report_json(&report, constant)),
    ];

    if let Some(sweep) = &cfg.lemma_sweep {
        let (product_violations, composition_violations) =
            timed(manifest, "lemma_sweep", || {
                let mut product = 0usize;
                let mut composition = 0usize;
                let tanh_d2 = 4.0 / (3.0 * 3.0_f64.sqrt());
                for case in 0..sweep.cases {
                    let a = random_pl(sweep.seed.wrapping_add(2 * case as u64), sweep)?;
                    let b = random_pl(sweep.seed.wrapping_add(2 * case as u64 + 1), sweep)?;
                    for &p in &sweep.exponents {
                        if !product_lemma_check(&a, &b, p)?.satisfied {
                            product += 1;
                        }
                        if !composition_lemma_check(|v: f64| v.tanh(), 1.0, tanh_d2, &a, &b, p)?
                            .satisfied
                        {
                            composition += 1;
                        }
                    }
                }
                Ok((product, composition))
            })?;
        println!(
            "lemma sweep over {} cases: product violations {}, composition violations {}",
            sweep.cases, product_violations, composition_violations
        );
        outputs.push((
            "lemmas.json".into(),
            serde_json::to_string_pretty(&json!({
                "cases": sweep.cases,
                "exponents": sweep.exponents,
                "product_violations": product_violations,
                "composition_violations": composition_violations,
            }))
            .expect("serializes"),
        ));
    }
    Ok(outputs)
}

fn random_pl(seed: u64, sweep: &LemmaSweepCfg) -> Result<DiscretePath> {
    let spec = EtaSpec {
        signal: EtaKind::RandomPl {
            nodes: sweep.nodes,
            scale: sweep.scale,
            seed,
        },
        dim: 1,
        horizon: 1.0,
    };
    let grid = TimeGrid::uniform(1.0, sweep.nodes - 1)?;
    Ok(generate_eta(&spec, &grid)?.path)
}

fn run_ode(value: &Value, base: &Path, manifest: &mut RunManifest) -> Result<Outputs> {
    let cfg: OdeCfg = from_value(value)?;
    let eta = cfg.eta.resolve(base)?;
    let direction = match cfg.direction.as_str() {
        "forward" => OdeDirection::Forward,
        "backward" => OdeDirection::Backward,
        other => return Err(Error::invalid(format!("unknown direction '{other}'"))),
    };
    let fields = cfg
        .fields
        .iter()
        .map(|f| {
            let built = f.build();
            let g = Arc::clone(&built.g);
            Arc::new(move |y: f64| g(y)) as young_bsde::young::ScalarField
        })
        .collect();
    let spec = OdeSpec {
        initial: cfg.initial,
        fields,
        eta,
        direction,
    };
    let solution = timed(manifest, "ode_solve", || ode_solve(&spec, cfg.substeps))?;
    println!("richardson_gap = {}", solution.richardson_gap);
    manifest
        .notes
        .push(format!("richardson_gap = {}", solution.richardson_gap));
    Ok(vec![("solution.csv".into(), io::path_to_csv(&solution.path))])
}

fn run_gen_eta(value: &Value, manifest: &mut RunManifest) -> Result<Outputs> {
    let cfg: GenEtaCfg = from_value(value)?;
    let grid = cfg.grid.build()?;
    let sample = timed(manifest, "generate_eta", || generate_eta(&cfg.eta, &grid))?;
    if let Some(jitter) = sample.covariance_jitter {
        let note = format!("covariance jitter applied: {jitter:e}");
        println!("{note}");
        manifest.notes.push(note);
    }
    let mut outputs = vec![("eta.csv".into(), io::path_to_csv(&sample.path))];

    if let Some(levels) = cfg.ladder_levels {
        let q = cfg
            .ladder_q
            .ok_or_else(|| Error::invalid("ladder_levels needs ladder_q"))?;
        let ladder = timed(manifest, "approximation_sequence", || {
            approximation_sequence(&sample.path, q, levels)
        })?;
        let mut table = String::from("level,qvar_distance\n");
        for (k, (path, d)) in ladder.paths.iter().zip(&ladder.distances).enumerate() {
            outputs.push((format!("eta_level_{k}.csv"), io::path_to_csv(path)));
            table.push_str(&format!("{k},{d}\n"));
        }
        outputs.push(("ladder.csv".into(), table));
    }
    if let Some(exponents) = &cfg.profile_exponents {
        let rows = timed(manifest, "qvar_profile", || {
            qvar_profile(&sample.path, exponents)
        })?;
        outputs.push(("profile.csv".into(), io::qvar_profile_to_csv(&rows)));
    }
    Ok(outputs)
}

fn run_sde(value: &Value, manifest: &mut RunManifest) -> Result<Outputs> {
    let cfg: SdeCfg = from_value(value)?;
    let grid = cfg.grid.build()?;
    let ensemble = timed(manifest, "sample_brownian", || {
        sample_brownian(&grid, cfg.paths, 1, cfg.seed)
    })?;
    let b = cfg.drift.build();
    let s = cfg.diffusion.build();
    let sde = SdeSpec::scalar(move |x| b(x), move |x| s(x), cfg.x0, cfg.start);
    let states = timed(manifest, "euler_maruyama", || euler_maruyama(&sde, &ensemble))?;

    let n = grid.node_count();
    let m = cfg.paths;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for path in 0..m {
        let x_t = states.scalar_value(path, n - 1);
        sum += x_t;
        sum_sq += x_t * x_t;
    }
    let mean = sum / m as f64;
    let std = ((sum_sq / m as f64 - mean * mean).max(0.0)).sqrt();
    println!("terminal mean = {mean}, std = {std}");

    let mut outputs = vec![(
        "summary.json".into(),
        serde_json::to_string_pretty(&json!({
            "terminal_mean": mean,
            "terminal_std": std,
            "paths": m,
            "steps": grid.cell_count(),
            "seed": cfg.seed,
        }))
        .expect("serializes"),
    )];
    if cfg.export_samples > 0 {
        outputs.push((
            "samples.csv".into(),
            io::ensemble_to_csv(&states, 0, cfg.export_samples.min(m))?,
        ));
    }
    Ok(outputs)
}

fn diagnostics_csv(solution: &BsdeSolution) -> String {
    let mut out =
        String::from("node,condition,residual_rms,ridge_fallback,dropped_columns,kept_columns\n");
    for step in &solution.steps {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            step.node,
            step.condition,
            step.residual_rms,
            step.ridge_fallback,
            step.dropped_columns,
            step.kept_columns
        ));
    }
    out
}

fn run_bsde(value: &Value, base: &Path, manifest: &mut RunManifest) -> Result<Outputs> {
    let cfg: BsdeCfg = from_value(value)?;
    let (problem, grid) = cfg.problem(base)?;
    let ensemble = timed(manifest, "sample_brownian", || {
        sample_brownian(&grid, cfg.paths, cfg.brownian_dim, cfg.seed)
    })?;

    let mut outputs = Vec::new();
    let solution = match cfg.scheme.as_str() {
        "backward" => timed(manifest, "solve_backward", || {
            solve_backward(&problem, &ensemble, &cfg.regression, cfg.inner_iters)
        })?,
        "picard" => {
            let run = timed(manifest, "solve_picard", || {
                solve_picard(&problem, &ensemble, &cfg.regression, cfg.sweeps)
            })?;
            let mut table = String::from("sweep,diff,ratio\n");
            for (k, d) in run.sweep_diffs.iter().enumerate() {
                let ratio = if k == 0 {
                    String::new()
                } else {
                    run.contraction_ratios[k - 1].to_string()
                };
                table.push_str(&format!("{},{d},{ratio}\n", k + 1));
            }
            outputs.push(("sweeps.csv".into(), table));
            run.solution
        }
        other => return Err(Error::invalid(format!("unknown scheme '{other}'"))),
    };

    let bp = timed(manifest, "bp_norm", || {
        bp_norm_estimate(&solution, cfg.bp_exponent, &cfg.regression)
    })?;
    let bmo = timed(manifest, "bmo_norm", || {
        bmo_norm_estimate(&solution, &cfg.regression)
    })?;
    let bdg = timed(manifest, "bdg_diagnostic", || {
        bdg_diagnostic(&solution, &ensemble, cfg.bp_exponent)
    })?;
    manifest.notes.push(format!(
        "bdg fitted constant = {} (lhs {}, rhs {})",
        bdg.fitted_constant, bdg.lhs, bdg.rhs
    ));

    let summary = io::SolutionSummary::new(&solution, bp, bmo);
    println!("y0 = {}", summary.y0);
    outputs.insert(0, ("summary.json".into(), summary.to_json()));
    outputs.push(("diagnostics.csv".into(), diagnostics_csv(&solution)));
    if cfg.export_slices {
        outputs.push(("solution.csv".into(), io::bsde_solution_to_csv(&solution)));
    }
    Ok(outputs)
}

fn run_pde(value: &Value, base: &Path, manifest: &mut RunManifest) -> Result<Outputs> {
    let cfg: PdeCfg = from_value(value)?;
    let problem = cfg.problem(base)?;
    let solution = match cfg.solver.as_str() {
        "fd" => {
            let fd = cfg
                .fd
                .as_ref()
                .ok_or_else(|| Error::invalid("solver 'fd' needs the 'fd' section"))?;
            let tgrid = TimeGrid::uniform(cfg.horizon, fd.time_steps)?;
            let xgrid = fd.xgrid()?;
            timed(manifest, "fd_reference_solve", || {
                fd_reference_solve(&problem, &tgrid, &xgrid, fd.theta)
            })?
        }
        "feynman-kac" => {
            let mc = cfg
                .mc
                .as_ref()
                .ok_or_else(|| Error::invalid("solver 'feynman-kac' needs the 'mc' section"))?;
            timed(manifest, "feynman_kac_solve", || {
                feynman_kac_solve(
                    &problem,
                    &mc.eval_times,
                    &mc.eval_xs,
                    mc.sim_steps,
                    McParams {
                        paths: mc.paths,
                        seed: mc.seed,
                    },
                    &cfg.regression,
                    cfg.inner_iters,
                )
            })?
        }
        other => return Err(Error::invalid(format!("unknown pde solver '{other}'"))),
    };
    for w in &solution.metadata.warnings {
        println!("warning: {w}");
        manifest.notes.push(w.clone());
    }
    Ok(vec![
        ("u.csv".into(), io::pde_solution_to_csv(&solution)),
        ("meta.json".into(), io::pde_metadata_json(&solution)),
    ])
}

fn run_study_stability(value: &Value, base: &Path, manifest: &mut RunManifest) -> Result<Outputs> {
    let cfg: StudyStabilityCfg = from_value(value)?;
    let (problem, grid) = cfg.bsde.problem(base)?;
    let ensemble = timed(manifest, "sample_brownian", || {
        sample_brownian(&grid, cfg.bsde.paths, cfg.bsde.brownian_dim, cfg.bsde.seed)
    })?;
    let ladder = timed(manifest, "approximation_sequence", || {
        approximation_sequence(&problem.eta, cfg.ladder_q, cfg.ladder_levels)
    })?;
    let rows = timed(manifest, "stability_in_eta", || {
        stability_in_eta(
            &problem,
            &ladder.paths,
            cfg.ladder_q,
            cfg.bsde.bp_exponent,
            &ensemble,
            &cfg.bsde.regression,
            cfg.bsde.inner_iters,
        )
    })?;
    let mut outputs = vec![("stability.csv".into(), io::stability_rows_to_csv(&rows))];

    if !cfg.lipschitz_deltas.is_empty() {
        let mut table = String::from("delta,numerator,denominator,ratio\n");
        for &delta in &cfg.lipschitz_deltas {
            let base_terminal = problem.terminal.clone();
            let payoff = Arc::clone(&base_terminal.payoff);
            let bound = base_terminal.bound + delta.abs();
            let perturbed = TerminalCondition::new(
                move |x: &[f64]| payoff(x) + delta * x[0].signum(),
                bound,
            );
            let report = timed(manifest, &format!("lipschitz_delta_{delta}"), || {
                lipschitz_in_xi(
                    &problem,
                    &base_terminal,
                    &perturbed,
                    &ensemble,
                    &cfg.bsde.regression,
                    cfg.bsde.inner_iters,
                )
            })?;
            table.push_str(&format!(
                "{delta},{},{},{}\n",
                report.numerator, report.denominator, report.ratio
            ));
        }
        outputs.push(("lipschitz.csv".into(), table));
    }
    Ok(outputs)
}

fn run_study_convergence(
    value: &Value,
    base: &Path,
    manifest: &mut RunManifest,
) -> Result<Outputs> {
    let cfg: StudyConvergenceCfg = from_value(value)?;
    let problem = cfg.pde.problem(base)?;
    let fd = cfg
        .pde
        .fd
        .as_ref()
        .ok_or_else(|| Error::invalid("study-convergence needs the pde 'fd' section"))?;
    let mc = cfg
        .pde
        .mc
        .as_ref()
        .ok_or_else(|| Error::invalid("study-convergence needs the pde 'mc' section"))?;

    let ladder = timed(manifest, "approximation_sequence", || {
        approximation_sequence(&problem.eta, cfg.ladder_q, cfg.ladder_levels)
    })?;
    let config = ConvergenceStudyConfig {
        fd_tgrid: TimeGrid::uniform(cfg.pde.horizon, fd.time_steps)?,
        fd_xgrid: fd.xgrid()?,
        theta: fd.theta,
        sim_cells: mc.sim_steps,
        mc: McParams {
            paths: mc.paths,
            seed: mc.seed,
        },
        regression: cfg.pde.regression.clone(),
        inner_iters: cfg.pde.inner_iters,
        q: cfg.ladder_q,
    };
    let rows = timed(manifest, "rough_convergence_study", || {
        rough_convergence_study(&problem, &ladder.paths, &cfg.probes, &config)
    })?;
    Ok(vec![(
        "convergence.csv".into(),
        io::convergence_rows_to_csv(&rows),
    )])
}
