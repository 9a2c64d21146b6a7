//! One-dimensional scale transform and its verification suite.
//!
//! For a bounded measurable drift b and a center z, the scale function
//!
//! ```text
//! phi_z(x) = int_0^x exp( -2 int_z^r 1_{|z-s|<=2} b(s) ds ) dr
//! ```
//!
//! satisfies `phi' > 0`, `phi'' = -2 1_{|z-x|<=2} b(x) phi'(x)` a.e., hence
//! `phi''/2 + b phi' = 0` inside the window `[z-2, z+2]`: composing the
//! diffusion with `phi_z` removes the drift locally. The module tabulates
//! `phi`, `phi'`, the inverse `psi`, and checks the ODE residual, the
//! uniform derivative bounds, and the martingale property of the
//! transformed process by Monte Carlo.
//!
//! Numerics: the inner integral uses the composite midpoint rule on step
//! h/4, whose sample points (odd multiples of h/8 from z) avoid the jump
//! points of every documented builtin; the outer integral uses the
//! trapezoid rule on step h. Since the inner integrand vanishes outside the
//! window, `phi'` saturates exactly beyond `z +- 2`.

use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::em::simulate_em;
use crate::error::{LabError, Result};
use crate::rng::{generate_tableau, PathSeed};
use crate::stats::{reduce_paths, Welford};

/// Tabulated scale function on `[z - radius, z + radius]` with inverse.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    z: f64,
    radius: f64,
    step: f64,
    xs: Vec<f64>,
    phi: Vec<f64>,
    phi_prime: Vec<f64>,
    /// Uniform grid on the range of phi.
    ys: Vec<f64>,
    psi: Vec<f64>,
    min_phi_gap: f64,
}

impl ScaleTable {
    pub fn center(&self) -> f64 {
        self.z
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn points(&self) -> &[f64] {
        &self.xs
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_prime(&self) -> &[f64] {
        &self.phi_prime
    }

    pub fn inverse_points(&self) -> &[f64] {
        &self.ys
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// Strict monotonicity certificate: smallest gap between consecutive
    /// tabulated phi values (positive iff strictly increasing).
    pub fn min_phi_gap(&self) -> f64 {
        self.min_phi_gap
    }

    fn cell_of(&self, x: f64) -> Result<usize> {
        if x < self.xs[0] - 1e-12 || x > self.xs[self.xs.len() - 1] + 1e-12 {
            return Err(LabError::Numerical(format!(
                "x = {x} outside the scale table [{}, {}]",
                self.xs[0],
                self.xs[self.xs.len() - 1]
            )));
        }
        let i = ((x - self.xs[0]) / self.step).floor() as usize;
        Ok(i.min(self.xs.len() - 2))
    }

    /// phi at an arbitrary in-range point via the trapezoid-consistent
    /// quadratic cell model.
    pub fn phi_at(&self, x: f64) -> Result<f64> {
        let i = self.cell_of(x)?;
        let t = x - self.xs[i];
        let slope = self.phi_prime[i];
        let curve = (self.phi_prime[i + 1] - self.phi_prime[i]) / (2.0 * self.step);
        Ok(self.phi[i] + t * (slope + curve * t))
    }

    /// phi' at an arbitrary in-range point (linear interpolation).
    pub fn phi_prime_at(&self, x: f64) -> Result<f64> {
        let i = self.cell_of(x)?;
        let t = (x - self.xs[i]) / self.step;
        Ok(self.phi_prime[i] * (1.0 - t) + self.phi_prime[i + 1] * t)
    }

    /// Solves `phi(x) = y` by bisection on the monotone table refined with
    /// Newton steps on the cell model.
    pub fn invert(&self, y: f64) -> Result<f64> {
        let last = self.phi.len() - 1;
        if y < self.phi[0] - 1e-12 || y > self.phi[last] + 1e-12 {
            return Err(LabError::Numerical(format!(
                "y = {y} outside the range of phi [{}, {}]",
                self.phi[0], self.phi[last]
            )));
        }
        // Bisection to the bracketing cell.
        let mut lo = 0usize;
        let mut hi = last;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.phi[mid] <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Newton polish on the quadratic cell model; phi' > 0 guarantees
        // convergence from the linear initial guess.
        let gap = self.phi[hi] - self.phi[lo];
        let mut t = if gap > 0.0 { (y - self.phi[lo]) / gap * self.step } else { 0.0 };
        let slope0 = self.phi_prime[lo];
        let curve = (self.phi_prime[hi] - slope0) / (2.0 * self.step);
        for _ in 0..4 {
            let f = self.phi[lo] + t * (slope0 + curve * t) - y;
            let df = slope0 + 2.0 * curve * t;
            if df <= 0.0 {
                break;
            }
            t -= f / df;
        }
        Ok(self.xs[lo] + t.clamp(0.0, self.step))
    }
}

fn near_any(x: f64, points: &[f64], tol: f64) -> bool {
    points.iter().any(|p| (x - p).abs() < tol)
}

/// Builds the scale table for a scalar drift.
///
/// `z` must lie on the step grid (the outer integral is anchored at 0, so
/// the marching grid has to pass through both 0 and z) and `radius` must be
/// a multiple of `step`.
pub fn build_scale_table(
    drift: &DriftSpec,
    z: f64,
    radius: f64,
    step: f64,
) -> Result<ScaleTable> {
    if drift.dimension() != 1 {
        return Err(LabError::Inadmissible(format!(
            "scale transform is one-dimensional; drift `{}` has d = {}",
            drift.name(),
            drift.dimension()
        )));
    }
    if !(step > 0.0) || !(radius > 0.0) {
        return Err(LabError::InvalidGrid("need step > 0 and radius > 0".into()));
    }
    let ratio = z / step;
    if (ratio - ratio.round()).abs() > 1e-9 {
        return Err(LabError::InvalidGrid(format!(
            "center z = {z} must be a multiple of the step {step}"
        )));
    }
    let rsteps = radius / step;
    if (rsteps - rsteps.round()).abs() > 1e-9 {
        return Err(LabError::InvalidGrid(format!(
            "radius {radius} must be a multiple of the step {step}"
        )));
    }

    // Extended marching grid through both 0 and z.
    let x_lo = (z - radius).min(0.0);
    let x_hi = (z + radius).max(0.0);
    let n_ext = ((x_hi - x_lo) / step).round() as usize;
    let xs_ext: Vec<f64> = (0..=n_ext).map(|k| x_lo + k as f64 * step).collect();
    let iz = ((z - x_lo) / step).round() as usize;
    let i0 = ((0.0 - x_lo) / step).round() as usize;

    // Inner integral A(x) = int_z^x 1_{|z-s|<=2} b(s) ds by composite
    // midpoint on step/4 cells, marching out from z in both directions.
    let quarter = step / 4.0;
    let windowed = |s: f64| {
        if (s - z).abs() <= 2.0 {
            drift.evaluate_scalar(s)
        } else {
            0.0
        }
    };
    let mut inner = vec![0.0; n_ext + 1];
    for i in iz..n_ext {
        let mut cell_sum = 0.0;
        for l in 0..4 {
            cell_sum += windowed(xs_ext[i] + (l as f64 + 0.5) * quarter);
        }
        inner[i + 1] = inner[i] + quarter * cell_sum;
    }
    for i in (0..iz).rev() {
        let mut cell_sum = 0.0;
        for l in 0..4 {
            cell_sum += windowed(xs_ext[i] + (l as f64 + 0.5) * quarter);
        }
        inner[i] = inner[i + 1] - quarter * cell_sum;
    }

    let phi_prime_ext: Vec<f64> = inner.iter().map(|a| libm::exp(-2.0 * a)).collect();

    // Outer cumulative trapezoid, then shift so phi(0) = 0.
    let mut cumulative = vec![0.0; n_ext + 1];
    for i in 0..n_ext {
        cumulative[i + 1] =
            cumulative[i] + 0.5 * step * (phi_prime_ext[i] + phi_prime_ext[i + 1]);
    }
    let at_zero = cumulative[i0];

    // Restrict to the requested range.
    let lo = ((z - radius - x_lo) / step).round() as usize;
    let hi = ((z + radius - x_lo) / step).round() as usize;
    let xs: Vec<f64> = xs_ext[lo..=hi].to_vec();
    let phi: Vec<f64> = cumulative[lo..=hi].iter().map(|v| v - at_zero).collect();
    let phi_prime: Vec<f64> = phi_prime_ext[lo..=hi].to_vec();

    let min_phi_gap = phi
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if !(min_phi_gap > 0.0) {
        return Err(LabError::Numerical(
            "tabulated phi is not strictly increasing".into(),
        ));
    }

    // Inverse on a uniform grid over the range of phi.
    let count = xs.len();
    let y_lo = phi[0];
    let y_hi = phi[count - 1];
    let y_step = (y_hi - y_lo) / (count - 1) as f64;
    let ys: Vec<f64> = (0..count).map(|j| y_lo + j as f64 * y_step).collect();

    let mut table = ScaleTable {
        z,
        radius,
        step,

        xs,
        phi,
        phi_prime,
        ys: ys.clone(),
        psi: Vec::new(),
        min_phi_gap,
    };
    table.psi = ys
        .iter()
        .map(|&y| table.invert(y.clamp(y_lo, y_hi)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(table)
}

/// Residual of `phi''/2 + b phi' = 0` inside the window, with `phi''` from a
/// centered difference of the tabulated `phi'`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub tolerance: f64,
    pub points_checked: usize,
    pub points_excluded: usize,
    pub pass: bool,
}

/// Checks the ODE residual at interior grid points where the windowed drift
/// is continuous.
///
/// Excluded: points within `2 step` of a drift discontinuity, of the window
/// edges `z +- 2` (where the indicator kicks in), and the outermost grid
/// cells. Tolerance: `10 h^2 (1 + sup|b|)^3`, the Taylor bound for the
/// builtins this suite runs with.
pub fn verify_ode_residual(table: &ScaleTable, drift: &DriftSpec) -> Result<ResidualReport> {
    let h = table.step;
    let z = table.z;
    let tolerance = 10.0 * h * h * (1.0 + drift.sup_bound()).powi(3);
    let mut exclusions = drift.discontinuities_in(table.xs[0], *table.xs.last().unwrap());
    exclusions.push(z - 2.0);
    exclusions.push(z + 2.0);

    let mut max_residual = 0.0f64;
    let mut checked = 0usize;
    let mut excluded = 0usize;
    for i in 1..table.xs.len() - 1 {
        let x = table.xs[i];
        if (x - z).abs() >= 2.0 {
            continue; // the identity only holds inside the window
        }
        if near_any(x, &exclusions, 2.0 * h) {
            excluded += 1;
            continue;
        }
        let second = (table.phi_prime[i + 1] - table.phi_prime[i - 1]) / (2.0 * h);
        let residual = (0.5 * second
            + drift.evaluate_scalar(x) * table.phi_prime[i])
            .abs();
        max_residual = max_residual.max(residual);
        checked += 1;
    }
    if checked == 0 {
        return Err(LabError::Numerical("no residual points inside the window".into()));
    }
    Ok(ResidualReport {
        max_residual,
        tolerance,
        points_checked: checked,
        points_excluded: excluded,
        pass: max_residual <= tolerance,
    })
}

/// Grid suprema of `|phi'|, |phi''|, |psi'|, |(phi' o psi)'|` against the
/// crude uniform bound.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DerivativeBoundReport {
    pub sup_phi_prime: f64,
    pub sup_phi_second: f64,
    pub sup_psi_prime: f64,
    pub sup_composed_prime: f64,
    /// `e^{8 sup|b|} (1 + 2 sup|b|)^2`: from `|inner integral| <= 4 sup|b|`
    /// one gets `phi' <= e^{8K}`, `|phi''| = |2 b phi'| <= 2K e^{8K}`,
    /// `psi' = 1/(phi' o psi) <= e^{8K}`, `|(phi' o psi)'| = |2 b o psi| <=
    /// 2K`; each is below the product bound.
    pub bound: f64,
    pub pass: bool,
}

/// Evaluates the four suprema of the uniform-Lipschitz estimate on the grid.
pub fn verify_derivative_bounds(
    table: &ScaleTable,
    drift: &DriftSpec,
) -> Result<DerivativeBoundReport> {
    let k = drift.sup_bound();
    let bound = libm::exp(8.0 * k) * (1.0 + 2.0 * k) * (1.0 + 2.0 * k);

    let sup_phi_prime = table.phi_prime.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // phi'' from the analytic identity -2 1_w b phi'.
    let mut sup_phi_second = 0.0f64;
    for (i, &x) in table.xs.iter().enumerate() {
        if (x - table.z).abs() <= 2.0 {
            let v = 2.0 * drift.evaluate_scalar(x).abs() * table.phi_prime[i];
            sup_phi_second = sup_phi_second.max(v);
        }
    }

    // psi' = 1 / (phi' o psi) on the inverse grid.
    let mut sup_psi_prime = 0.0f64;
    let mut composed: Vec<f64> = Vec::with_capacity(table.ys.len());
    for &xpsi in &table.psi {
        let p = table.phi_prime_at(xpsi.clamp(table.xs[0], *table.xs.last().unwrap()))?;
        composed.push(p);
        if p > 0.0 {
            sup_psi_prime = sup_psi_prime.max(1.0 / p);
        }
    }

    // (phi' o psi)' by centered difference on the uniform y grid. The
    // composition is Lipschitz with constant 2 sup|b|, so difference
    // quotients are valid even across drift jumps.
    let y_step = table.ys[1] - table.ys[0];
    let mut sup_composed_prime = 0.0f64;
    for i in 1..composed.len() - 1 {
        let d = (composed[i + 1] - composed[i - 1]) / (2.0 * y_step);
        sup_composed_prime = sup_composed_prime.max(d.abs());
    }

    let slack = 1.0 + 1e-9;
    let pass = sup_phi_prime <= bound * slack
        && sup_phi_second <= bound * slack
        && sup_psi_prime <= bound * slack
        && sup_composed_prime <= bound * slack;
    Ok(DerivativeBoundReport {
        sup_phi_prime,
        sup_phi_second,
        sup_psi_prime,
        sup_composed_prime,
        bound,
        pass,
    })
}

/// Monte Carlo check that the transformed process is driftless while the
/// path stays inside the unit window around the start.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MartingaleReport {
    pub mean_increment: f64,
    pub standard_error: f64,
    /// |mean| / standard error.
    pub sigma_ratio: f64,
    pub path_count: u64,
    pub pass: bool,
}

/// Simulates fine-grid EM from `z`, stops at the exit of `[z-1, z+1]` (or
/// the horizon), transforms by `phi_z` and checks that the stopped increment
/// has mean zero within five standard errors.
pub fn transformed_driftlessness_check(
    drift: &DriftSpec,
    table: &ScaleTable,
    level_n: u64,
    horizon: f64,
    path_count: u64,
    seed: u64,
) -> Result<MartingaleReport> {
    if drift.dimension() != 1 {
        return Err(LabError::Inadmissible("driftlessness check is scalar".into()));
    }
    let z = table.z;
    let y0 = table.phi_at(z)?;
    let acc = reduce_paths(
        path_count,
        |range| -> Result<Welford> {
            let mut acc = Welford::new();
            for p in range {
                let tableau =
                    generate_tableau(PathSeed::new(seed, p), 1, level_n, horizon)?;
                let path = simulate_em(drift, &tableau, level_n, &[z])?;
                let mut stopped = path.state(path.step_count())[0];
                for k in 1..=path.step_count() {
                    let x = path.state(k)[0];
                    if (x - z).abs() > 1.0 {
                        stopped = x;
                        break;
                    }
                }
                acc.push(table.phi_at(stopped)? - y0);
            }
            Ok(acc)
        },
        Welford::merge,
    )?;
    let mean = acc.mean();
    let se = acc.standard_error();
    let ratio = if se > 0.0 { mean.abs() / se } else { f64::INFINITY };
    Ok(MartingaleReport {
        mean_increment: mean,
        standard_error: se,
        sigma_ratio: ratio,
        path_count,
        pass: ratio <= 5.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::builtin;
    use proptest::prelude::*;

    fn table_for(name: &str, param: Option<f64>, z: f64, r: f64, h: f64) -> ScaleTable {
        let drift = builtin(name, 1, param).unwrap();
        build_scale_table(&drift, z, r, h).unwrap()
    }

    #[test]
    fn zero_drift_scale_is_identity() {
        let t = table_for("zero", None, 0.0, 3.0, 1e-3);
        for (i, &x) in t.points().iter().enumerate() {
            assert!((t.phi()[i] - x).abs() < 1e-12, "phi({x}) = {}", t.phi()[i]);
            assert_eq!(t.phi_prime()[i], 1.0);
        }
        for (j, &y) in t.inverse_points().iter().enumerate() {
            assert!((t.psi()[j] - y).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_drift_matches_closed_form_within_trapezoid_bound() {
        // Closed form phi(x) = (1 - e^{-2cx}) / (2c) on |x| <= 2. The
        // composite trapezoid on step h carries the Taylor error
        // (h^2/12) |g'(x) - g'(0)| = (h^2/12) 2c (1 - e^{-2cx}) for
        // g = e^{-2cr}; the inner midpoint rule is exact for constant b.
        let c = 1.0;
        let h = 1e-3;
        let t = table_for("constant", Some(c), 0.0, 2.0, h);
        for (i, &x) in t.points().iter().enumerate() {
            let exact = (1.0 - libm::exp(-2.0 * c * x)) / (2.0 * c);
            let bound = (h * h / 12.0) * 2.0 * c * (1.0 - libm::exp(-2.0 * c * x)).abs();
            let err = (t.phi()[i] - exact).abs();
            assert!(
                err <= bound * 1.5 + 1e-13,
                "x = {x}: err {err} vs trapezoid bound {bound}"
            );
        }
    }

    #[test]
    fn sign_drift_phi_prime_closed_form() {
        // A(x) = |x| for |x| <= 2, so phi'(x) = e^{-2 min(|x|, 2)}.
        let t = table_for("sign", None, 0.0, 3.0, 1e-3);
        for (i, &x) in t.points().iter().enumerate() {
            let exact = libm::exp(-2.0 * x.abs().min(2.0));
            assert!(
                (t.phi_prime()[i] - exact).abs() < 1e-10,
                "phi'({x}) = {} vs {exact}",
                t.phi_prime()[i]
            );
        }
        assert!(t.min_phi_gap() > 0.0);
    }

    #[test]
    fn phi_prime_saturates_outside_window_bitwise() {
        let t = table_for("sign", None, 0.0, 3.0, 1e-3);
        let right_edge = t.phi_prime_at(2.0).unwrap();
        for (i, &x) in t.points().iter().enumerate() {
            if x > 2.0 {
                assert_eq!(t.phi_prime()[i], right_edge);
            }
        }
    }

    #[test]
    fn inverse_identity_on_grid() {
        for (name, param) in [("sign", None), ("constant", Some(1.0)), ("sin", None)] {
            let t = table_for(name, param, 0.0, 2.0, 1e-3);
            let mut worst = 0.0f64;
            for (i, &x) in t.points().iter().enumerate() {
                let back = t.invert(t.phi()[i]).unwrap();
                worst = worst.max((back - x).abs());
            }
            assert!(worst <= 1e-10, "{name}: psi(phi(x)) off by {worst}");
            // phi(psi(y)) = y on the inverse grid.
            let mut worst_y = 0.0f64;
            for (j, &y) in t.inverse_points().iter().enumerate() {
                let fwd = t.phi_at(t.psi()[j]).unwrap();
                worst_y = worst_y.max((fwd - y).abs());
            }
            assert!(worst_y <= 1e-10, "{name}: phi(psi(y)) off by {worst_y}");
        }
    }

    proptest! {
        #[test]
        fn inverse_roundtrip_at_random_points(u in 0.0f64..1.0) {
            let t = table_for("sign", None, 0.0, 2.0, 1e-3);
            let x = -2.0 + 4.0 * u;
            let y = t.phi_at(x).unwrap();
            let back = t.invert(y).unwrap();
            prop_assert!((back - x).abs() <= 1e-9, "{x} -> {y} -> {back}");
        }
    }

    #[test]
    fn ode_residual_zero_drift_is_zero() {
        let drift = builtin("zero", 1, None).unwrap();
        let t = build_scale_table(&drift, 0.0, 2.0, 1e-3).unwrap();
        let report = verify_ode_residual(&t, &drift).unwrap();
        assert_eq!(report.max_residual, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn ode_residual_constant_and_sign_within_taylor_bound() {
        for (name, param) in [("constant", Some(1.0)), ("sign", None), ("sin", None)] {
            let drift = builtin(name, 1, param).unwrap();
            let t = build_scale_table(&drift, 0.0, 3.0, 1e-3).unwrap();
            let report = verify_ode_residual(&t, &drift).unwrap();
            assert!(
                report.pass,
                "{name}: residual {} vs tol {}",
                report.max_residual, report.tolerance
            );
        }
    }

    #[test]
    fn ode_residual_one_sided_at_the_jump() {
        // At the sign discontinuity the centered difference is excluded;
        // second-order one-sided differences against the one-sided limits
        // b(0+) = 1, b(0-) = -1 are each O(h^2).
        let drift = builtin("sign", 1, None).unwrap();
        let h = 1e-3;
        let t = build_scale_table(&drift, 0.0, 2.0, h).unwrap();
        let i0 = t.points().iter().position(|&x| x.abs() < h / 2.0).unwrap();
        let pp = t.phi_prime();
        let right = (-3.0 * pp[i0] + 4.0 * pp[i0 + 1] - pp[i0 + 2]) / (2.0 * h);
        let left = (3.0 * pp[i0] - 4.0 * pp[i0 - 1] + pp[i0 - 2]) / (2.0 * h);
        let r_right = (0.5 * right + 1.0 * pp[i0]).abs();
        let r_left = (0.5 * left + (-1.0) * pp[i0]).abs();
        let tol = 50.0 * h * h;
        assert!(r_right <= tol, "right residual {r_right}");
        assert!(r_left <= tol, "left residual {r_left}");
    }

    #[test]
    fn derivative_bounds_zero_drift_all_one() {
        let drift = builtin("zero", 1, None).unwrap();
        let t = build_scale_table(&drift, 0.0, 2.0, 1e-3).unwrap();
        let r = verify_derivative_bounds(&t, &drift).unwrap();
        assert!((r.sup_phi_prime - 1.0).abs() < 1e-12);
        assert_eq!(r.sup_phi_second, 0.0);
        assert!((r.sup_psi_prime - 1.0).abs() < 1e-9);
        assert!(r.sup_composed_prime < 1e-9);
        assert!(r.pass);
    }

    #[test]
    fn derivative_bounds_constant_one_hits_e4() {
        let drift = builtin("constant", 1, Some(1.0)).unwrap();
        let t = build_scale_table(&drift, 0.0, 3.0, 1e-3).unwrap();
        let r = verify_derivative_bounds(&t, &drift).unwrap();
        let e4 = libm::exp(4.0);
        assert!((r.sup_phi_prime - e4).abs() < 1e-6 * e4, "sup phi' = {}", r.sup_phi_prime);
        assert!(r.pass);
    }

    #[test]
    fn derivative_bounds_sign_psi_prime_hits_e4() {
        let drift = builtin("sign", 1, None).unwrap();
        let t = build_scale_table(&drift, 0.0, 3.0, 1e-3).unwrap();
        let r = verify_derivative_bounds(&t, &drift).unwrap();
        let e4 = libm::exp(4.0);
        assert!(
            (r.sup_psi_prime - e4).abs() < 1e-6 * e4,
            "sup psi' = {} vs e^4 = {e4}",
            r.sup_psi_prime
        );
        assert!(r.pass);
    }

    #[test]
    fn martingale_check_zero_drift() {
        let drift = builtin("zero", 1, None).unwrap();
        let t = build_scale_table(&drift, 0.0, 2.0, 1e-3).unwrap();
        let report =
            transformed_driftlessness_check(&drift, &t, 1 << 10, 0.25, 20_000, 91).unwrap();
        assert!(report.pass, "sigma ratio {}", report.sigma_ratio);
    }

    #[test]
    fn martingale_check_removes_constant_drift() {
        let drift = builtin("constant", 1, Some(1.0)).unwrap();
        let t = build_scale_table(&drift, 0.0, 2.0, 1e-3).unwrap();
        let report =
            transformed_driftlessness_check(&drift, &t, 1 << 12, 0.25, 20_000, 92).unwrap();
        assert!(report.pass, "sigma ratio {}", report.sigma_ratio);
        // Untransformed process drifts with rate c = 1; make sure the test
        // has the power to see that.
        let raw = {
            let mut acc = Welford::new();
            for p in 0..5000u64 {
                let tab = generate_tableau(PathSeed::new(92, p), 1, 1 << 12, 0.25).unwrap();
                let path = simulate_em(&drift, &tab, 1 << 12, &[0.0]).unwrap();
                acc.push(path.state(path.step_count())[0]);
            }
            acc
        };
        assert!(
            raw.mean() / raw.standard_error() > 5.0,
            "raw process should visibly drift"
        );
    }

    #[test]
    fn build_rejects_bad_parameters() {
        let drift = builtin("sign", 1, None).unwrap();
        assert!(build_scale_table(&drift, 0.005, 2.0, 1e-3).is_ok());
        assert!(build_scale_table(&drift, 0.00037, 2.0, 1e-3).is_err());
        assert!(build_scale_table(&drift, 0.0, 2.0005, 1e-3).is_err());
        assert!(build_scale_table(&drift, 0.0, -1.0, 1e-3).is_err());
        let d2 = builtin("sign", 2, None).unwrap();
        assert!(build_scale_table(&d2, 0.0, 2.0, 1e-3).is_err());
    }

    #[test]
    fn off_center_table_keeps_base_point_at_zero() {
        // z = 3, window [1, 5], sign(s) = 1 there, so A(r) = r - 3 on the
        // window and A saturates at -2 below r = 1. The base point stays at
        // 0 even though it is outside the table, giving the closed form
        // phi(2) = int_0^1 e^4 dr + int_1^2 e^{-2(r-3)} dr
        //        = e^4 + (e^4 - e^2) / 2.
        let drift = builtin("sign", 1, None).unwrap();
        let t = build_scale_table(&drift, 3.0, 1.0, 1e-3).unwrap();
        assert_eq!(t.points()[0], 2.0);
        let phi2 = t.phi()[0];
        let exact = libm::exp(4.0) + (libm::exp(4.0) - libm::exp(2.0)) / 2.0;
        assert!(
            (phi2 - exact).abs() < 1e-4 * exact,
            "phi(2) = {phi2} vs closed form {exact}"
        );
    }
}
