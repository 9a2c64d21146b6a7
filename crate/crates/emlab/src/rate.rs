//! Least-squares convergence-rate fits on log-log points.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Which abscissa the slope is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitVariant {
    /// log(value) against log(n).
    PlainLogN,
    /// log(value) against log(n^-1 log(n+1)); a statistic scaling exactly
    /// like n^-1 log(n+1) fits slope 1 here.
    LogCorrected,
}

/// An ordinary least-squares fit of a scaling law.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RateFit {
    pub variant: FitVariant,
    pub slope: f64,
    pub intercept: f64,
    pub slope_standard_error: f64,
    pub r_squared: f64,
    pub levels_used: Vec<u64>,
}

/// Options for [`fit_rate`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Drop the smallest level (pre-asymptotic transient). Default true.
    pub exclude_smallest: bool,
    /// Weight points by 1/ci^2 where a positive `ci` is available.
    pub weight_by_ci: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { exclude_smallest: true, weight_by_ci: false }
    }
}

/// Fits `log(value)` against the variant abscissa over `(level, value)`
/// points.
///
/// All fitted values must be strictly positive (exactly-zero curves are
/// reported as exact upstream and never fitted) and at least three levels
/// must remain after exclusions.
pub fn fit_rate(
    levels: &[u64],
    values: &[f64],
    ci: Option<&[f64]>,
    variant: FitVariant,
    options: FitOptions,
) -> Result<RateFit> {
    if levels.len() != values.len() {
        return Err(LabError::InvalidGrid(format!(
            "levels ({}) and values ({}) differ in length",
            levels.len(),
            values.len()
        )));
    }
    let skip = usize::from(options.exclude_smallest && levels.len() > 3);
    let levels = &levels[skip..];
    let values = &values[skip..];
    let ci = ci.map(|c| &c[skip..]);
    if levels.len() < 3 {
        return Err(LabError::Numerical(format!(
            "rate fit needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    if let Some(bad) = values.iter().find(|v| **v <= 0.0 || !v.is_finite()) {
        return Err(LabError::Numerical(format!(
            "nonpositive value {bad} in rate-fit set"
        )));
    }

    let xs: Vec<f64> = levels
        .iter()
        .map(|&n| {
            let n = n as f64;
            match variant {
                FitVariant::PlainLogN => libm::log(n),
                FitVariant::LogCorrected => libm::log(libm::log(n + 1.0) / n),
            }
        })
        .collect();
    let ys: Vec<f64> = values.iter().map(|v| libm::log(*v)).collect();
    let ws: Vec<f64> = match (options.weight_by_ci, ci) {
        (true, Some(ci)) => ys
            .iter()
            .zip(values.iter().zip(ci.iter()))
            .map(|(_, (v, c))| {
                // ci on the value translates to sd ~ ci/value on log(value)
                let rel = c / v;
                if rel > 0.0 && rel.is_finite() {
                    1.0 / (rel * rel)
                } else {
                    1.0
                }
            })
            .collect(),
        _ => vec![1.0; ys.len()],
    };

    let wsum: f64 = ws.iter().sum();
    let xbar: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x).sum::<f64>() / wsum;
    let ybar: f64 = ys.iter().zip(&ws).map(|(y, w)| w * y).sum::<f64>() / wsum;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter().zip(&ws))
        .map(|(x, (y, w))| w * (x - xbar) * (y - ybar))
        .sum();
    if sxx <= 0.0 {
        return Err(LabError::Numerical("degenerate abscissa in rate fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;

    let m = xs.len() as f64;
    let ss_res: f64 = xs
        .iter()
        .zip(ys.iter().zip(&ws))
        .map(|(x, (y, w))| {
            let r = y - (intercept + slope * x);
            w * r * r
        })
        .sum();
    let ss_tot: f64 = ys.iter().zip(&ws).map(|(y, w)| w * (y - ybar) * (y - ybar)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    // Unweighted residual dof; with only a handful of levels this is the
    // usual (m - 2) OLS estimate.
    let slope_standard_error = if m > 2.0 {
        (ss_res / (m - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };

    Ok(RateFit {
        variant,
        slope,
        intercept,
        slope_standard_error,
        r_squared,
        levels_used: levels.to_vec(),
    })
}
