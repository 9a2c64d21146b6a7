//! Monte Carlo estimation of the strong error across a ladder of levels,
//! all coupled through one Brownian tableau per path.
//!
//! The per-path statistic is the max over checkpoint times of the squared
//! distance to the reference, then averaged over paths: an estimate of
//! E[max_t |X^n_t - X_t|^2] >= max_t E[...]. The other bracket, the max over
//! checkpoints of per-time averages, is emitted alongside for comparison.

use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::em::{default_reference_kind, simulate_em, simulate_reference, ReferenceKind};
use crate::error::{LabError, Result};
use crate::rng::{generate_tableau, PathSeed};
use crate::stats::{reduce_paths, Welford};

/// Parameters of one error-curve experiment.
#[derive(Debug, Clone)]
pub struct ErrorCurveParams {
    pub levels: Vec<u64>,
    pub path_count: u64,
    pub n_ref: u64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub checkpoint_count: usize,
    /// When set, the scheme starts from a perturbed x0n with
    /// |x0n - x0|^2 = n^(-1+eps) instead of x0 itself.
    pub epsilon_offset: Option<f64>,
    pub seed: u64,
}

/// Estimated mean-square error per level with confidence intervals.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ErrorCurve {
    pub drift_name: String,
    pub dimension: usize,
    pub horizon: f64,
    pub epsilon_offset: Option<f64>,
    pub levels: Vec<u64>,
    /// Mean over paths of the per-path checkpoint maximum.
    pub mse: Vec<f64>,
    /// 95% normal CI half widths for `mse`.
    pub ci_half_width: Vec<f64>,
    /// Max over checkpoints of the per-checkpoint mean (the other bracket).
    pub mse_max_of_means: Vec<f64>,
    /// CI half width of the mean at the maximizing checkpoint.
    pub ci_max_of_means: Vec<f64>,
    pub path_count: u64,
    pub n_ref: u64,
    pub checkpoints: Vec<f64>,
    /// True when every level came out exactly zero (exact schemes).
    pub exact: bool,
}

#[derive(Default)]
struct CurveAccum {
    /// Per level: statistics of the per-path checkpoint max.
    max_sq: Vec<Welford>,
    /// Per level x checkpoint: statistics of the squared error.
    per_cp: Vec<Vec<Welford>>,
}

impl CurveAccum {
    fn sized(levels: usize, cps: usize) -> Self {
        Self {
            max_sq: vec![Welford::new(); levels],
            per_cp: vec![vec![Welford::new(); cps]; levels],
        }
    }

    fn merge(mut a: Self, b: Self) -> Self {
        if a.max_sq.is_empty() {
            return b;
        }
        if b.max_sq.is_empty() {
            return a;
        }
        for (x, y) in a.max_sq.iter_mut().zip(b.max_sq) {
            *x = Welford::merge(*x, y);
        }
        for (row_a, row_b) in a.per_cp.iter_mut().zip(b.per_cp) {
            for (x, y) in row_a.iter_mut().zip(row_b) {
                *x = Welford::merge(*x, y);
            }
        }
        a
    }
}

fn validate(drift: &DriftSpec, params: &ErrorCurveParams) -> Result<ReferenceKind> {
    let mut violations = Vec::new();
    if params.path_count < 100 {
        violations.push(format!("path_count {} < 100", params.path_count));
    }
    if params.levels.is_empty() {
        violations.push("levels must be non-empty".into());
    }
    if !params.levels.windows(2).all(|w| w[0] < w[1]) {
        violations.push("levels must be strictly increasing".into());
    }
    for &n in &params.levels {
        if n == 0 || params.n_ref % n != 0 {
            violations.push(format!("level {n} does not divide n_ref {}", params.n_ref));
        }
    }
    if !params.n_ref.is_power_of_two() {
        violations.push(format!("n_ref {} is not a power of two", params.n_ref));
    }
    if !drift.admissible_for_rate(drift.dimension()) {
        violations.push(format!(
            "drift `{}` is bounded-measurable; rate experiments require dimension 1, got {}",
            drift.name(),
            drift.dimension()
        ));
    }
    if params.x0.len() != drift.dimension() {
        violations.push(format!(
            "x0 has {} coordinates, drift dimension is {}",
            params.x0.len(),
            drift.dimension()
        ));
    }
    if params.checkpoint_count < 2 {
        violations.push("need at least 2 checkpoints".into());
    }
    if let Some(eps) = params.epsilon_offset {
        if !(0.0..1.0).contains(&eps) {
            violations.push(format!("epsilon_offset {eps} outside (0, 1)"));
        }
    }
    let kind = default_reference_kind(drift);
    if kind == ReferenceKind::FineEm {
        if let Some(&max) = params.levels.iter().max() {
            if params.n_ref < 16 * max {
                violations.push(format!(
                    "fine-grid reference needs n_ref >= 16 x largest level ({} < {})",
                    params.n_ref,
                    16 * max
                ));
            }
        }
    }
    if violations.is_empty() {
        Ok(kind)
    } else {
        Err(LabError::InvalidConfig(violations))
    }
}

/// Equispaced checkpoint times from 0 to the horizon inclusive; with the
/// default count of 9 and dyadic levels >= 8 every time lands on every
/// level grid.
pub fn checkpoint_times(count: usize, horizon: f64) -> Vec<f64> {
    (0..count).map(|j| j as f64 * horizon / (count - 1) as f64).collect()
}

/// Runs the coupled Monte Carlo estimate of `e^2(n)` over the level ladder.
pub fn estimate_error_curve(drift: &DriftSpec, params: &ErrorCurveParams) -> Result<ErrorCurve> {
    let ref_kind = validate(drift, params)?;
    let d = drift.dimension();
    let checkpoints = checkpoint_times(params.checkpoint_count, params.horizon);
    // Checkpoints must lie on every level grid.
    for &n in params.levels.iter().chain(std::iter::once(&params.n_ref)) {
        for &t in &checkpoints {
            crate::rng::grid_index(t, n, params.horizon).map_err(|_| {
                LabError::InvalidConfig(vec![format!(
                    "checkpoint {t} is off the level-{n} grid; adjust checkpoint count"
                )])
            })?;
        }
    }

    let levels = params.levels.clone();
    let acc = reduce_paths(
        params.path_count,
        |range| -> Result<CurveAccum> {
            let mut acc = CurveAccum::sized(levels.len(), checkpoints.len());
            let mut x0n = vec![0.0; d];
            for p in range {
                let tableau = generate_tableau(
                    PathSeed::new(params.seed, p),
                    d,
                    params.n_ref,
                    params.horizon,
                )?;
                let reference = simulate_reference(
                    drift,
                    &tableau,
                    ref_kind,
                    params.n_ref,
                    &params.x0,
                    &checkpoints,
                )?;
                for (li, &n) in levels.iter().enumerate() {
                    match params.epsilon_offset {
                        Some(eps) => {
                            let delta = libm::pow(n as f64, (-1.0 + eps) / 2.0)
                                / (d as f64).sqrt();
                            for c in 0..d {
                                x0n[c] = params.x0[c] + delta;
                            }
                        }
                        None => x0n.copy_from_slice(&params.x0),
                    }
                    let path = simulate_em(drift, &tableau, n, &x0n)?;
                    let mut max_sq = 0.0f64;
                    for (ci, &t) in checkpoints.iter().enumerate() {
                        let xs = path.state_at_time(t, params.horizon)?;
                        let rs = reference.state(ci);
                        let mut sq = 0.0;
                        for c in 0..d {
                            let diff = xs[c] - rs[c];
                            sq += diff * diff;
                        }
                        acc.per_cp[li][ci].push(sq);
                        if sq > max_sq {
                            max_sq = sq;
                        }
                    }
                    acc.max_sq[li].push(max_sq);
                }
            }
            Ok(acc)
        },
        CurveAccum::merge,
    )?;

    let mse: Vec<f64> = acc.max_sq.iter().map(|w| w.mean()).collect();
    let ci_half_width: Vec<f64> = acc.max_sq.iter().map(|w| w.ci_half_width()).collect();
    let mut mse_max_of_means = Vec::with_capacity(levels.len());
    let mut ci_max_of_means = Vec::with_capacity(levels.len());
    for row in &acc.per_cp {
        let (mut best, mut best_ci) = (0.0f64, 0.0f64);
        for w in row {
            if w.mean() >= best {
                best = w.mean();
                best_ci = w.ci_half_width();
            }
        }
        mse_max_of_means.push(best);
        ci_max_of_means.push(best_ci);
    }
    let exact = mse.iter().all(|&v| v == 0.0);

    Ok(ErrorCurve {
        drift_name: drift.name().to_string(),
        dimension: d,
        horizon: params.horizon,
        epsilon_offset: params.epsilon_offset,
        levels,
        mse,
        ci_half_width,
        mse_max_of_means,
        ci_max_of_means,
        path_count: params.path_count,
        n_ref: params.n_ref,
        checkpoints,
        exact,
    })
}
