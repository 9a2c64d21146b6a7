//! Result schema, canonical serialization, and CSV tables.
//!
//! A results file is self-describing: schema version, binary version, the
//! fully normalized config, the seed ledger, the outputs, and the wall
//! clock. Only the wall clock may differ between identical runs; canonical
//! serialization zeroes it so byte comparison is meaningful.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::error_curve::ErrorCurve;
use crate::pde::{DriftSolveStats, GridSpec, KernelBlowupReport};
use crate::quadrature::ScalingReport;
use crate::rate::RateFit;
use crate::zvonkin::{DerivativeBoundReport, MartingaleReport, ResidualReport, ScaleTable};

pub const SCHEMA_VERSION: u32 = 1;

pub fn binary_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// How every random number of the run was derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedLedger {
    pub experiment_seed: u64,
    /// Path indices consumed, half-open.
    pub path_index_range: [u64; 2],
    pub generator: String,
}

impl SeedLedger {
    pub fn new(seed: u64, paths: u64) -> SeedLedger {
        SeedLedger {
            experiment_seed: seed,
            path_index_range: [0, paths],
            generator: "chacha8(seed)/stream=path_index/counter=step_index, box-muller via libm"
                .into(),
        }
    }
}

/// Summary of a scale table kept in the JSON (the full table goes to CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub center: f64,
    pub radius: f64,
    pub step: f64,
    pub points: usize,
    pub strictly_increasing: bool,
    pub min_phi_gap: f64,
    pub max_inverse_roundtrip_error: f64,
}

impl ScaleSummary {
    pub fn from_table(table: &ScaleTable) -> ScaleSummary {
        let mut worst = 0.0f64;
        for (i, &x) in table.points().iter().enumerate() {
            if let Ok(back) = table.invert(table.phi()[i]) {
                worst = worst.max((back - x).abs());
            }
        }
        ScaleSummary {
            center: table.center(),
            radius: table.radius(),
            step: table.step(),
            points: table.points().len(),
            strictly_increasing: table.min_phi_gap() > 0.0,
            min_phi_gap: table.min_phi_gap(),
            max_inverse_roundtrip_error: worst,
        }
    }
}

/// Everything the pde kind verifies in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeReport {
    pub grid: GridSpec,
    pub discovered_t0: f64,
    pub contraction_factor: f64,
    pub solve_stats: DriftSolveStats,
    /// max |u - t| over the interior for the constant source.
    pub u_equals_t_max_err: f64,
    /// Whether ||u(t)|| <= t ||g|| held on every slice.
    pub sup_bound_holds: bool,
    /// (horizon, sup |grad u| / sqrt(horizon)) at T0/4, T0/2, T0.
    pub gradient_ratios: Vec<(f64, f64)>,
    pub kernel_blowup: KernelBlowupReport,
}

/// Outputs per experiment kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExperimentOutputs {
    ErrorCurve {
        curve: ErrorCurve,
    },
    Quadrature {
        report: ScalingReport,
    },
    Zvonkin {
        scale: ScaleSummary,
        residual: ResidualReport,
        bounds: DerivativeBoundReport,
        martingale: MartingaleReport,
    },
    Pde {
        report: Box<PdeReport>,
    },
    KernelBlowup {
        report: KernelBlowupReport,
    },
}

/// One self-describing results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub binary_version: String,
    pub kind: String,
    pub config: ExperimentConfig,
    pub seed_ledger: SeedLedger,
    pub outputs: ExperimentOutputs,
    pub rate_fits: Vec<RateFit>,
    pub wall_clock_ms: u64,
}

impl ExperimentResult {
    /// Pretty JSON with the execution-only fields (wall clock, worker
    /// count) pinned: byte-identical across identical runs regardless of
    /// timing or pool size.
    pub fn canonical_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.insert("wall_clock_ms".into(), Value::from(0u64));
            if let Some(config) = obj.get_mut("config").and_then(Value::as_object_mut) {
                config.insert("workers".into(), Value::from(0u64));
            }
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Field-by-field comparison of two result files, ignoring the wall clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceVerdict {
    pub identical: bool,
    pub mismatched_fields: Vec<String>,
}

impl ReproduceVerdict {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn compare_results(a: &Value, b: &Value) -> ReproduceVerdict {
    let mut mismatches = Vec::new();
    diff_values("", a, b, &mut mismatches);
    // Execution-only fields: timing and pool size never count as content.
    mismatches.retain(|p| p != "/wall_clock_ms" && p != "/config/workers");
    ReproduceVerdict { identical: mismatches.is_empty(), mismatched_fields: mismatches }
}

fn diff_values(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            let extra = mb.keys().filter(|k| !ma.contains_key(*k));
            for key in ma.keys().chain(extra) {
                let sub = format!("{path}/{key}");
                match (ma.get(key), mb.get(key)) {
                    (Some(x), Some(y)) => diff_values(&sub, x, y, out),
                    _ => out.push(sub),
                }
            }
        }
        (Value::Array(xa), Value::Array(xb)) => {
            if xa.len() != xb.len() {
                out.push(format!("{path}/length"));
                return;
            }
            for (i, (x, y)) in xa.iter().zip(xb).enumerate() {
                diff_values(&format!("{path}/{i}"), x, y, out);
            }
        }
        _ => {
            if a != b {
                out.push(if path.is_empty() { "/".into() } else { path.to_string() });
            }
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path)?;
    f.write_all(contents.as_bytes())?;
    Ok(path)
}

/// Writes results.json plus the kind-specific CSV tables; returns the paths.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = vec![write_file(dir, "results.json", &result.to_json()?)?];
    match &result.outputs {
        ExperimentOutputs::ErrorCurve { curve } => {
            let mut csv = String::from("n,mse,ci,estimator_variant\n");
            for (i, &n) in curve.levels.iter().enumerate() {
                csv.push_str(&format!(
                    "{n},{},{},mean_of_max\n",
                    curve.mse[i], curve.ci_half_width[i]
                ));
            }
            for (i, &n) in curve.levels.iter().enumerate() {
                csv.push_str(&format!(
                    "{n},{},{},max_of_means\n",
                    curve.mse_max_of_means[i], curve.ci_max_of_means[i]
                ));
            }
            written.push(write_file(dir, "error_curve.csv", &csv)?);
        }
        ExperimentOutputs::Quadrature { report } => {
            let mut csv = String::from("n,q,ci\n");
            for (i, &n) in report.levels.iter().enumerate() {
                csv.push_str(&format!("{n},{},{}\n", report.q[i], report.ci_half_width[i]));
            }
            written.push(write_file(dir, "scaling.csv", &csv)?);
        }
        ExperimentOutputs::KernelBlowup { report } => {
            let mut csv = String::from("t,l1_k0,l1_k1,l1_k2\n");
            for (i, &t) in report.times.iter().enumerate() {
                csv.push_str(&format!(
                    "{t},{},{},{}\n",
                    report.l1_norms[0][i], report.l1_norms[1][i], report.l1_norms[2][i]
                ));
            }
            written.push(write_file(dir, "kernel_norms.csv", &csv)?);
        }
        // Zvonkin and Pde write their tables at run time (the full field
        // and table live outside the JSON); see runner::run_to_dir.
        _ => {}
    }
    Ok(written)
}

/// CSV of a scale table: x, phi, phi', and the inverse tabulated on its
/// uniform y grid.
pub fn scale_table_csv(table: &ScaleTable) -> String {
    let mut csv = String::from("x,phi,phi_prime,psi\n");
    for i in 0..table.points().len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            table.points()[i],
            table.phi()[i],
            table.phi_prime()[i],
            table.psi()[i]
        ));
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_flags_single_field() {
        let a: Value = serde_json::json!({"x": 1.0, "nested": {"y": [1, 2, 3]}, "wall_clock_ms": 5});
        let mut b = a.clone();
        b["nested"]["y"][1] = Value::from(99);
        b["wall_clock_ms"] = Value::from(999);
        let verdict = compare_results(&a, &b);
        assert!(!verdict.identical);
        assert_eq!(verdict.mismatched_fields, vec!["/nested/y/1".to_string()]);
        let same = compare_results(&a, &a);
        assert!(same.identical);
    }

    #[test]
    fn compare_ignores_only_wall_clock() {
        let a: Value = serde_json::json!({"wall_clock_ms": 1});
        let b: Value = serde_json::json!({"wall_clock_ms": 2});
        assert!(compare_results(&a, &b).identical);
    }
}
