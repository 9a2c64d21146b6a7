//! Executes experiment configs, assembles results files, and replays them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::Value;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::drift::{builtin, DriftSpec};
use crate::em::simulate_em;
use crate::error::{LabError, Result};
use crate::error_curve::{estimate_error_curve, ErrorCurveParams};
use crate::pde::{
    discover_t0, drift_pde_solve_1d, verify_kernel_blowup, GridSpec, HeatSolver1, SourceFn,
};
use crate::quadrature::{
    builtin_functional, quadrature_statistic_brownian, quadrature_statistic_em, QuadratureParams,
};
use crate::rate::{fit_rate, FitOptions, FitVariant, RateFit};
use crate::report::{
    binary_version, compare_results, scale_table_csv, write_outputs, ExperimentOutputs,
    ExperimentResult, PdeReport, ReproduceVerdict, ScaleSummary, SeedLedger, SCHEMA_VERSION,
};
use crate::rng::{generate_tableau, PathSeed};
use crate::zvonkin::{
    build_scale_table, transformed_driftlessness_check, verify_derivative_bounds,
    verify_ode_residual,
};

/// Extra by-product tables written next to results.json.
#[derive(Debug, Default)]
pub struct SideTables {
    /// (file name, contents)
    pub files: Vec<(String, String)>,
}

fn drift_from(config: &ExperimentConfig) -> Result<DriftSpec> {
    let d = config
        .drift
        .as_ref()
        .ok_or_else(|| LabError::InvalidConfig(vec!["missing drift section".into()]))?;
    builtin(&d.name, config.dimension, d.param)
}

/// Returns the source and its spatial jump locations (for masking the
/// endpoint-rule cell in gradient suprema).
fn pde_source(name: &str) -> Result<(Box<dyn SourceFn>, Vec<f64>)> {
    match name {
        "one" => Ok((Box::new(|_s: f64, _x: &[f64]| 1.0), vec![])),
        "sign_x" => Ok((
            Box::new(|_s: f64, x: &[f64]| if x[0] > 0.0 { 1.0 } else { -1.0 }),
            vec![0.0],
        )),
        "cos_x" => Ok((Box::new(|_s: f64, x: &[f64]| libm::cos(x[0])), vec![])),
        "gauss_bump" => Ok((
            Box::new(|_s: f64, x: &[f64]| libm::exp(-x[0] * x[0] / (2.0 * 0.25))),
            vec![],
        )),
        other => Err(LabError::InvalidConfig(vec![format!("unknown pde source `{other}`")])),
    }
}

fn run_inner(config: &ExperimentConfig) -> Result<(ExperimentOutputs, Vec<RateFit>, u64, SideTables)> {
    let mut side = SideTables::default();
    match config.kind {
        ExperimentKind::ErrorCurve => {
            let drift = drift_from(config)?;
            let params = ErrorCurveParams {
                levels: config.levels.clone(),
                path_count: config.path_count,
                n_ref: config.n_ref,
                horizon: config.horizon,
                x0: config.x0.clone(),
                checkpoint_count: config.checkpoints,
                epsilon_offset: config.epsilon_offset,
                seed: config.seed,
            };
            let curve = estimate_error_curve(&drift, &params)?;
            let mut fits = Vec::new();
            if !curve.exact {
                if let Ok(fit) = fit_rate(
                    &curve.levels,
                    &curve.mse,
                    Some(&curve.ci_half_width),
                    FitVariant::PlainLogN,
                    FitOptions::default(),
                ) {
                    fits.push(fit);
                }
            }
            if let Some(k) = config.dump_paths {
                let n = *config.levels.iter().max().unwrap();
                for p in 0..(k as u64).min(config.path_count) {
                    let tableau = generate_tableau(
                        PathSeed::new(config.seed, p),
                        config.dimension,
                        config.n_ref,
                        config.horizon,
                    )?;
                    let path = simulate_em(&drift, &tableau, n, &config.x0)?;
                    let mut csv = String::from("t");
                    for c in 1..=config.dimension {
                        csv.push_str(&format!(",X{c}"));
                    }
                    csv.push('\n');
                    for kstep in 0..=path.step_count() {
                        csv.push_str(&format!("{}", kstep as f64 / n as f64));
                        for v in path.state(kstep) {
                            csv.push_str(&format!(",{v}"));
                        }
                        csv.push('\n');
                    }
                    side.files.push((format!("path_{p:04}.csv"), csv));
                }
            }
            Ok((
                ExperimentOutputs::ErrorCurve { curve },
                fits,
                config.path_count,
                side,
            ))
        }
        ExperimentKind::QuadratureW | ExperimentKind::QuadratureEm => {
            let fc = config.functional.as_ref().ok_or_else(|| {
                LabError::InvalidConfig(vec!["missing functional section".into()])
            })?;
            let func = builtin_functional(&fc.name, config.horizon, fc.tau, fc.tau_prime)?;
            let params = QuadratureParams {
                levels: config.levels.clone(),
                finest_n: config.n_ref,
                path_count: config.path_count,
                horizon: config.horizon,
                dimension: config.dimension,
                seed: config.seed,
                x0: config.x0.clone(),
            };
            let report = if config.kind == ExperimentKind::QuadratureW {
                quadrature_statistic_brownian(&func, &params)?
            } else {
                let drift = drift_from(config)?;
                quadrature_statistic_em(&func, &drift, &params)?
            };
            let mut fits = Vec::new();
            fits.extend(report.slope_plain.clone());
            fits.extend(report.slope_log_corrected.clone());
            Ok((
                ExperimentOutputs::Quadrature { report },
                fits,
                config.path_count,
                side,
            ))
        }
        ExperimentKind::Zvonkin => {
            let drift = drift_from(config)?;
            let z = config.zvonkin.clone().unwrap_or_default();
            let table = build_scale_table(&drift, z.center, z.radius, z.step)?;
            let residual = verify_ode_residual(&table, &drift)?;
            let bounds = verify_derivative_bounds(&table, &drift)?;
            let martingale = transformed_driftlessness_check(
                &drift,
                &table,
                z.mc_level,
                z.mc_horizon,
                z.mc_paths,
                config.seed,
            )?;
            side.files.push(("scale_table.csv".into(), scale_table_csv(&table)));
            Ok((
                ExperimentOutputs::Zvonkin {
                    scale: ScaleSummary::from_table(&table),
                    residual,
                    bounds,
                    martingale,
                },
                Vec::new(),
                z.mc_paths,
                side,
            ))
        }
        ExperimentKind::Pde => {
            let drift = drift_from(config)?;
            let p = config.pde.clone().unwrap_or_default();
            let (source, source_jumps) = pde_source(&p.source)?;
            let (t0, factor) = discover_t0(
                &drift,
                source.as_ref(),
                p.nx,
                p.box_radius,
                p.nt,
                p.start_horizon,
                8,
            )?;

            let grid = GridSpec { nx: p.nx, box_radius: p.box_radius, nt: p.nt, horizon: t0 };
            let solver = HeatSolver1::new(grid)?;
            let (field, solve_stats) =
                drift_pde_solve_1d(&solver, &drift, source.as_ref(), p.max_iter, p.tol)?;

            // u = t for the constant source, interior max error.
            let const_field = solver.mild_solve(&|_s: f64, _x: &[f64]| 1.0);
            let mut u_eq_t = 0.0f64;
            for it in 0..=grid.nt {
                let t = grid.time(it);
                for i in 0..grid.nx {
                    if grid.interior(i) {
                        u_eq_t = u_eq_t.max((const_field.slices[it][i] - t).abs());
                    }
                }
            }

            // Discrete est-u bound with constant 1 for the mild solve.
            let sup_g = {
                let mut m = 0.0f64;
                for it in 0..=grid.nt {
                    let s = grid.time(it);
                    for i in 0..grid.nx {
                        m = m.max(source.eval(s, &[grid.point(i)]).abs());
                    }
                }
                m
            };
            let mild = solver.mild_solve(source.as_ref());
            let mut sup_bound_holds = true;
            for it in 1..=grid.nt {
                if mild.max_abs_slice(it) > grid.time(it) * sup_g * (1.0 + 1e-9) {
                    sup_bound_holds = false;
                }
            }

            // Gradient ratios across T0/4, T0/2, T0, masking the
            // endpoint-rule cell at source jumps.
            let mut gradient_ratios = Vec::new();
            for scale in [0.25, 0.5, 1.0] {
                let horizon = t0 * scale;
                let g = GridSpec { nx: p.nx, box_radius: p.box_radius, nt: p.nt, horizon };
                let s = HeatSolver1::new(g)?;
                let (u, _) = drift_pde_solve_1d(&s, &drift, source.as_ref(), p.max_iter, p.tol)?;
                let sup = u.gradient_sup_interior_excluding(&source_jumps, 2.0 * g.hx());
                gradient_ratios.push((horizon, sup / libm::sqrt(horizon)));
            }

            // Kernel blow-up on the solve's own spatial resolution.
            let hx = grid.hx();
            let t_min = (4.0 * hx * hx).max(t0 / 256.0);
            let times: Vec<f64> = (0..8)
                .map(|i| t_min * libm::pow(t0 / t_min, i as f64 / 7.0))
                .collect();
            let kernel_blowup = verify_kernel_blowup(hx, &times, grid.nx - 1)?;

            // Final field to CSV: t, x, u, grad_u.
            let mut csv = String::from("t,x,u,grad_u\n");
            for it in 0..=grid.nt {
                let t = grid.time(it);
                let grad = field.gradient_slice(it);
                for i in 0..grid.nx {
                    csv.push_str(&format!(
                        "{t},{},{},{}\n",
                        grid.point(i),
                        field.slices[it][i],
                        grad[i]
                    ));
                }
            }
            side.files.push(("grid_field.csv".into(), csv));

            let report = PdeReport {
                grid,
                discovered_t0: t0,
                contraction_factor: factor,
                solve_stats,
                u_equals_t_max_err: u_eq_t,
                sup_bound_holds,
                gradient_ratios,
                kernel_blowup,
            };
            Ok((ExperimentOutputs::Pde { report: Box::new(report) }, Vec::new(), 0, side))
        }
        ExperimentKind::KernelBlowup => {
            let k = config.kernel.clone().unwrap_or_default();
            let max_radius = (16.0 / k.hx) as usize;
            let report = verify_kernel_blowup(k.hx, &k.times, max_radius)?;
            Ok((ExperimentOutputs::KernelBlowup { report }, Vec::new(), 0, side))
        }
    }
}

/// Runs a config in memory.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let (result, _) = run_with_side_tables(config)?;
    Ok(result)
}

/// Runs a config and returns the by-product tables as well.
pub fn run_with_side_tables(
    config: &ExperimentConfig,
) -> Result<(ExperimentResult, SideTables)> {
    let config = config.clone().normalized();
    config.validate()?;
    let start = Instant::now();
    let (outputs, rate_fits, paths, side) = if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| LabError::Io(std::io::Error::other(e)))?;
        pool.install(|| run_inner(&config))?
    } else {
        run_inner(&config)?
    };
    let result = ExperimentResult {
        schema_version: SCHEMA_VERSION,
        binary_version: binary_version(),
        kind: config.kind.as_str().to_string(),
        seed_ledger: SeedLedger::new(config.seed, paths),
        config,
        outputs,
        rate_fits,
        wall_clock_ms: start.elapsed().as_millis() as u64,
    };
    Ok((result, side))
}

/// Runs a config and writes results.json plus every table into `dir`.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<(ExperimentResult, Vec<PathBuf>)> {
    let (result, side) = run_with_side_tables(config)?;
    let mut written = write_outputs(&result, dir)?;
    for (name, contents) in &side.files {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
    }
    Ok((result, written))
}

/// Whether every pass/fail check embedded in the outputs passed.
pub fn outputs_pass(outputs: &ExperimentOutputs) -> bool {
    match outputs {
        ExperimentOutputs::ErrorCurve { .. } | ExperimentOutputs::Quadrature { .. } => true,
        ExperimentOutputs::Zvonkin { residual, bounds, martingale, scale } => {
            residual.pass && bounds.pass && martingale.pass && scale.strictly_increasing
        }
        ExperimentOutputs::Pde { report } => {
            let ratios: Vec<f64> = report.gradient_ratios.iter().map(|(_, r)| *r).collect();
            let rmax = ratios.iter().cloned().fold(0.0f64, f64::max);
            let rmin = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            report.sup_bound_holds
                && report.u_equals_t_max_err < 1e-6
                && (report.kernel_blowup.slopes[1] + 0.5).abs() <= 0.1
                && (report.kernel_blowup.slopes[2] + 1.0).abs() <= 0.1
                && rmin > 0.0
                && rmax / rmin < 2.0
        }
        ExperimentOutputs::KernelBlowup { report } => {
            (report.slopes[1] + 0.5).abs() <= 0.1 && (report.slopes[2] + 1.0).abs() <= 0.1
        }
    }
}

/// Re-executes the config embedded in a results file and compares field by
/// field (wall clock and worker count excepted).
pub fn reproduce_json(original: &str) -> Result<ReproduceVerdict> {
    let value: Value = serde_json::from_str(original)?;
    let schema = value.get("schema_version").and_then(Value::as_u64).unwrap_or(0);
    if schema != SCHEMA_VERSION as u64 {
        return Err(LabError::VersionMismatch(format!(
            "results file has schema_version {schema}, this binary expects {SCHEMA_VERSION}"
        )));
    }
    let file_version = value.get("binary_version").and_then(Value::as_str).unwrap_or("?");
    if file_version != binary_version() {
        return Err(LabError::VersionMismatch(format!(
            "results file was produced by binary version {file_version}, this is {}",
            binary_version()
        )));
    }
    let config: ExperimentConfig = serde_json::from_value(
        value
            .get("config")
            .cloned()
            .ok_or_else(|| LabError::InvalidConfig(vec!["results file has no config".into()]))?,
    )?;
    let fresh = run(&config)?;
    let fresh_value = serde_json::to_value(&fresh)?;
    Ok(compare_results(&value, &fresh_value))
}

pub fn reproduce_file(path: &Path) -> Result<ReproduceVerdict> {
    let contents = std::fs::read_to_string(path)?;
    reproduce_json(&contents)
}
