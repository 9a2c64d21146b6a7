//! Mild-solution solver for `d_t u = (1/2) Laplace u + f . grad u + g`,
//! `u(0, .) = 0`, on a truncated box.
//!
//! The driftless problem is summed directly from the semigroup
//! representation: `u(t) = sum_s ht p(t - s) (*) g(s)` with trapezoid
//! weights in s and the zero-offset kernel replaced by the identity. The
//! drift term enters through the fixed point `u_{k+1} = mild(g + f . grad
//! u_k)`, which contracts for small enough horizons; the solver measures
//! the contraction factor and refuses horizons where it fails.
//!
//! Wide convolutions in d = 1 run through the zero-padded FFT (the direct
//! truncated convolution is kept as the test oracle); d = 2 uses direct
//! separable convolution at desk-scale grids.

use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{LabError, Result};
use crate::pde::fft::{conv_direct, fft_inplace, Spectrum};
use crate::pde::kernel::HeatKernel;

/// Uniform space-time grid of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per axis.
    pub nx: usize,
    /// Box half-width; points sit at -l + i * hx with hx = 2 l / (nx - 1).
    pub box_radius: f64,
    /// Time steps up to the horizon.
    pub nt: usize,
    pub horizon: f64,
}

impl GridSpec {
    pub fn hx(&self) -> f64 {
        2.0 * self.box_radius / (self.nx - 1) as f64
    }

    pub fn ht(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.box_radius + i as f64 * self.hx()
    }

    pub fn time(&self, it: usize) -> f64 {
        it as f64 * self.ht()
    }

    /// Margin eaten by Gaussian tails; assertions apply inside
    /// `[-l + margin, l - margin]`.
    pub fn interior_margin(&self) -> f64 {
        6.0 * libm::sqrt(self.horizon)
    }

    pub fn interior(&self, i: usize) -> bool {
        self.point(i).abs() <= self.box_radius - self.interior_margin()
    }

    fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.nx < 16 {
            violations.push(format!("nx = {} too small", self.nx));
        }
        if !(self.horizon > 0.0 && self.horizon <= 1.0) {
            violations.push(format!("horizon {} outside (0, 1]", self.horizon));
        }
        if self.nt < 4 {
            violations.push(format!("nt = {} too small", self.nt));
        }
        if self.box_radius < self.interior_margin() {
            violations.push(format!(
                "box radius {} smaller than the 6 sqrt(T) = {} padding; kernel mass would leak",
                self.box_radius,
                self.interior_margin()
            ));
        }
        if self.ht() < 4.0 * self.hx() * self.hx() {
            violations.push(format!(
                "time step {} under-resolves the kernel (need ht >= 4 hx^2 = {})",
                self.ht(),
                4.0 * self.hx() * self.hx()
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(LabError::InvalidConfig(violations))
        }
    }
}

/// Space-time field on the grid: `u`, with derivatives on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: GridSpec,
    /// nt + 1 slices of nx values; slice 0 is identically zero.
    pub slices: Vec<Vec<f64>>,
}

impl GridField {
    fn zeroed(grid: GridSpec) -> GridField {
        GridField { grid, slices: vec![vec![0.0; grid.nx]; grid.nt + 1] }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_slice(&self, it: usize) -> f64 {
        self.slices[it].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Centered first difference of one slice (one-sided at the edges).
    pub fn gradient_slice(&self, it: usize) -> Vec<f64> {
        let u = &self.slices[it];
        let hx = self.grid.hx();
        let n = u.len();
        let mut g = vec![0.0; n];
        for i in 1..n - 1 {
            g[i] = (u[i + 1] - u[i - 1]) / (2.0 * hx);
        }
        g[0] = (u[1] - u[0]) / hx;
        g[n - 1] = (u[n - 1] - u[n - 2]) / hx;
        g
    }

    /// Centered second difference of one slice.
    pub fn hessian_slice(&self, it: usize) -> Vec<f64> {
        let u = &self.slices[it];
        let hx = self.grid.hx();
        let n = u.len();
        let mut h = vec![0.0; n];
        for i in 1..n - 1 {
            h[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (hx * hx);
        }
        h
    }

    /// Sup over interior points and all times of |grad u|.
    pub fn gradient_sup_interior(&self) -> f64 {
        self.gradient_sup_interior_excluding(&[], 0.0)
    }

    /// Gradient sup skipping a margin around given points. The trapezoid
    /// rule's s = t endpoint carries the raw source with weight ht/2, so a
    /// jump in g puts a one-cell kink of height ~ht into u; differencing
    /// across that cell measures the endpoint rule, not grad u. Passing the
    /// source's jump locations with a margin of ~2 hx masks exactly that
    /// cell.
    pub fn gradient_sup_interior_excluding(&self, jumps: &[f64], margin: f64) -> f64 {
        let mut sup = 0.0f64;
        for it in 0..=self.grid.nt {
            let g = self.gradient_slice(it);
            for (i, v) in g.iter().enumerate() {
                let x = self.grid.point(i);
                if self.grid.interior(i) && jumps.iter().all(|j| (x - j).abs() > margin) {
                    sup = sup.max(v.abs());
                }
            }
        }
        sup
    }

    /// Discrete Hölder-1/2 seminorm of the gradient over interior pairs
    /// within unit distance, maximised over time slices.
    pub fn gradient_holder_half_sup(&self) -> f64 {
        let hx = self.grid.hx();
        let max_sep = (1.0 / hx).floor() as usize;
        let mut sup = 0.0f64;
        for it in 1..=self.grid.nt {
            let g = self.gradient_slice(it);
            for i in 0..g.len() {
                if !self.grid.interior(i) {
                    continue;
                }
                // Geometric stride keeps the pair set dense at short range.
                let mut k = 1usize;
                while k <= max_sep && i + k < g.len() {
                    if self.grid.interior(i + k) {
                        let dist = k as f64 * hx;
                        sup = sup.max((g[i + k] - g[i]).abs() / libm::sqrt(dist));
                    }
                    k = (k * 2).max(k + 1);
                }
            }
        }
        sup
    }
}

/// A bounded space-time source g(s, x).
pub trait SourceFn: Sync {
    fn eval(&self, s: f64, x: &[f64]) -> f64;
}

impl<F: Fn(f64, &[f64]) -> f64 + Sync> SourceFn for F {
    fn eval(&self, s: f64, x: &[f64]) -> f64 {
        self(s, x)
    }
}

fn sample_source_1d(grid: &GridSpec, g: &dyn SourceFn) -> Vec<Vec<f64>> {
    (0..=grid.nt)
        .map(|it| {
            let s = grid.time(it);
            (0..grid.nx).map(|i| g.eval(s, &[grid.point(i)])).collect()
        })
        .collect()
}

/// Precomputed kernels and spectra for one grid.
pub struct HeatSolver1 {
    grid: GridSpec,
    kernels: Vec<HeatKernel>,
    spectra: Vec<Spectrum>,
    nfft: usize,
}

impl HeatSolver1 {
    pub fn new(grid: GridSpec) -> Result<HeatSolver1> {
        grid.validate()?;
        let hx = grid.hx();
        let max_radius = grid.nx - 1;
        let mut kernels = Vec::with_capacity(grid.nt);
        let mut max_r = 0usize;
        for j in 1..=grid.nt {
            let k = HeatKernel::new(j as f64 * grid.ht(), hx, max_radius);
            if k.mass < 1.0 - 1e-6 {
                return Err(LabError::Numerical(format!(
                    "kernel at offset {j} leaks mass {}; box too small for the horizon",
                    k.leakage()
                )));
            }
            max_r = max_r.max(k.radius);
            kernels.push(k);
        }
        let nfft = (grid.nx + 2 * max_r + 1).next_power_of_two();
        let spectra =
            kernels.iter().map(|k| Spectrum::of_kernel(&k.taps, k.radius, nfft)).collect();
        Ok(HeatSolver1 { grid, kernels, spectra, nfft })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn kernels(&self) -> &[HeatKernel] {
        &self.kernels
    }

    /// Mild solve of the driftless problem from sampled source slices.
    pub fn mild_solve_slices(&self, g: &[Vec<f64>]) -> GridField {
        let grid = self.grid;
        let ht = grid.ht();
        let mut field = GridField::zeroed(grid);

        // FFT each source slice once.
        let g_spectra: Vec<Spectrum> =
            g.iter().map(|slice| Spectrum::of_signal(slice, self.nfft)).collect();

        let mut acc_re = vec![0.0; self.nfft];
        let mut acc_im = vec![0.0; self.nfft];
        for it in 1..=grid.nt {
            acc_re.fill(0.0);
            acc_im.fill(0.0);
            // Half weight at s = 0, full weights inside, the s = t endpoint
            // (kernel at offset zero = identity) added in physical space.
            self.spectra[it - 1].mul_add_into(&g_spectra[0], 0.5, &mut acc_re, &mut acc_im);
            for is in 1..it {
                self.spectra[it - is - 1].mul_add_into(
                    &g_spectra[is],
                    1.0,
                    &mut acc_re,
                    &mut acc_im,
                );
            }
            fft_inplace(&mut acc_re, &mut acc_im, true);
            let out = &mut field.slices[it];
            for i in 0..grid.nx {
                out[i] = ht * (acc_re[i] + 0.5 * g[it][i]);
            }
        }
        field
    }

    /// Same sum evaluated with direct convolutions; the oracle for the FFT
    /// path.
    pub fn mild_solve_slices_direct(&self, g: &[Vec<f64>]) -> GridField {
        let grid = self.grid;
        let ht = grid.ht();
        let mut field = GridField::zeroed(grid);
        for it in 1..=grid.nt {
            let mut acc = vec![0.0; grid.nx];
            let k0 = &self.kernels[it - 1];
            for (i, v) in conv_direct(&k0.taps, k0.radius, &g[0]).into_iter().enumerate() {
                acc[i] += 0.5 * v;
            }
            for is in 1..it {
                let k = &self.kernels[it - is - 1];
                for (i, v) in conv_direct(&k.taps, k.radius, &g[is]).into_iter().enumerate() {
                    acc[i] += v;
                }
            }
            let out = &mut field.slices[it];
            for i in 0..grid.nx {
                out[i] = ht * (acc[i] + 0.5 * g[it][i]);
            }
        }
        field
    }

    pub fn mild_solve(&self, g: &dyn SourceFn) -> GridField {
        self.mild_solve_slices(&sample_source_1d(&self.grid, g))
    }
}

/// Outcome of the drift fixed point.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DriftSolveStats {
    pub iterations: usize,
    /// Geometric-mean ratio of successive iterate gaps.
    pub contraction_factor: f64,
    pub final_gap: f64,
}

/// Solves the drifted problem by fixed-point iteration
/// `u_{k+1} = mild(g + f . grad u_k)`.
///
/// Errors with the measured contraction factor when `max_iter` iterations
/// do not reach `tol` (the horizon is too large for this drift bound).
pub fn drift_pde_solve_1d(
    solver: &HeatSolver1,
    drift: &DriftSpec,
    g: &dyn SourceFn,
    max_iter: usize,
    tol: f64,
) -> Result<(GridField, DriftSolveStats)> {
    if drift.dimension() != 1 {
        return Err(LabError::Inadmissible("drift_pde_solve_1d needs a scalar drift".into()));
    }
    let grid = solver.grid();
    let g_slices = sample_source_1d(&grid, g);
    let f_vals: Vec<f64> = (0..grid.nx).map(|i| drift.evaluate_scalar(grid.point(i))).collect();

    let mut u = solver.mild_solve_slices(&g_slices);
    if drift.is_zero() {
        // One iteration is exact: f . grad u = 0.
        return Ok((u, DriftSolveStats { iterations: 1, contraction_factor: 0.0, final_gap: 0.0 }));
    }
    let mut rhs = g_slices.clone();
    let mut gaps: Vec<f64> = Vec::new();
    for iter in 1..=max_iter {
        for it in 0..=grid.nt {
            let grad = u.gradient_slice(it);
            let rhs_slice = &mut rhs[it];
            for i in 0..grid.nx {
                rhs_slice[i] = g_slices[it][i] + f_vals[i] * grad[i];
            }
        }
        let next = solver.mild_solve_slices(&rhs);
        let gap = max_gap(&u, &next);
        u = next;
        gaps.push(gap);
        let scale = u.max_abs().max(1.0);
        if gap <= tol * scale {
            let factor = contraction_factor(&gaps);
            return Ok((
                u,
                DriftSolveStats { iterations: iter, contraction_factor: factor, final_gap: gap },
            ));
        }
    }
    let factor = contraction_factor(&gaps);
    Err(LabError::Numerical(format!(
        "fixed point did not contract within {max_iter} iterations \
         (measured contraction factor {factor:.3}); shrink the horizon"
    )))
}

fn max_gap(a: &GridField, b: &GridField) -> f64 {
    a.slices
        .iter()
        .zip(&b.slices)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn contraction_factor(gaps: &[f64]) -> f64 {
    let ratios: Vec<f64> = gaps
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return 0.0;
    }
    let log_sum: f64 = ratios.iter().map(|r| libm::log(r.max(1e-300))).sum();
    libm::exp(log_sum / ratios.len() as f64)
}

/// Empirically discovers a horizon on which the fixed point contracts
/// decisively (factor <= 0.5), halving from `start` at most `attempts`
/// times. Returns the horizon and the measured factor.
pub fn discover_t0(
    drift: &DriftSpec,
    g: &dyn SourceFn,
    nx: usize,
    box_radius: f64,
    nt: usize,
    start: f64,
    attempts: usize,
) -> Result<(f64, f64)> {
    let mut horizon = start;
    for _ in 0..attempts {
        let grid = GridSpec { nx, box_radius, nt, horizon };
        match HeatSolver1::new(grid)
            .and_then(|solver| drift_pde_solve_1d(&solver, drift, g, 40, 1e-10))
        {
            Ok((_, stats)) if stats.contraction_factor <= 0.5 => {
                return Ok((horizon, stats.contraction_factor));
            }
            _ => horizon /= 2.0,
        }
    }
    Err(LabError::Numerical(format!(
        "no contracting horizon found down to T = {horizon} for drift `{}`",
        drift.name()
    )))
}

/// Solves the terminal-value problem
/// `d_t v + (1/2) Laplace v + b . grad v = -q`, `v(T, .) = 0`
/// via the substitution `v(t, x) = u(T - t, x)`, which turns it into the
/// forward problem with source q. Returns v on the same grid (time index
/// `it` holds `v(t_it)`).
pub fn backward_drift_solve_1d(
    solver: &HeatSolver1,
    drift: &DriftSpec,
    q: &dyn SourceFn,
    max_iter: usize,
    tol: f64,
) -> Result<(GridField, DriftSolveStats)> {
    let horizon = solver.grid().horizon;
    let reflected = |s: f64, x: &[f64]| q.eval(horizon - s, x);
    let (mut u, stats) = drift_pde_solve_1d(solver, drift, &reflected, max_iter, tol)?;
    u.slices.reverse();
    Ok((u, stats))
}

// ---- d = 2, separable direct convolution at desk scale ----

/// Field on a square grid, one flat `nx * nx` vector per time slice
/// (row-major; column index is the first coordinate).
#[derive(Debug, Clone)]
pub struct GridField2 {
    pub grid: GridSpec,
    pub slices: Vec<Vec<f64>>,
}

impl GridField2 {
    pub fn max_abs_slice(&self, it: usize) -> f64 {
        self.slices[it].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Centered differences of one slice along both axes (one-sided at the
    /// edges); returns (d/dx1, d/dx2).
    pub fn gradient_slice(&self, it: usize) -> (Vec<f64>, Vec<f64>) {
        let nx = self.grid.nx;
        let hx = self.grid.hx();
        let u = &self.slices[it];
        let mut gx = vec![0.0; nx * nx];
        let mut gy = vec![0.0; nx * nx];
        for r in 0..nx {
            for c in 0..nx {
                let i = r * nx + c;
                gx[i] = if c == 0 {
                    (u[i + 1] - u[i]) / hx
                } else if c == nx - 1 {
                    (u[i] - u[i - 1]) / hx
                } else {
                    (u[i + 1] - u[i - 1]) / (2.0 * hx)
                };
                gy[i] = if r == 0 {
                    (u[i + nx] - u[i]) / hx
                } else if r == nx - 1 {
                    (u[i] - u[i - nx]) / hx
                } else {
                    (u[i + nx] - u[i - nx]) / (2.0 * hx)
                };
            }
        }
        (gx, gy)
    }
}

fn conv2_separable(kernel: &HeatKernel, g: &[f64], nx: usize) -> Vec<f64> {
    // Rows, then columns; the Gaussian kernel factorizes.
    let mut rows = vec![0.0; nx * nx];
    for r in 0..nx {
        let row = conv_direct(&kernel.taps, kernel.radius, &g[r * nx..(r + 1) * nx]);
        rows[r * nx..(r + 1) * nx].copy_from_slice(&row);
    }
    let mut cols = vec![0.0; nx * nx];
    let mut scratch = vec![0.0; nx];
    for c in 0..nx {
        for r in 0..nx {
            scratch[r] = rows[r * nx + c];
        }
        let col = conv_direct(&kernel.taps, kernel.radius, &scratch);
        for r in 0..nx {
            cols[r * nx + c] = col[r];
        }
    }
    cols
}

fn kernels_2d(grid: GridSpec) -> Result<Vec<HeatKernel>> {
    grid.validate()?;
    let kernels: Vec<HeatKernel> =
        (1..=grid.nt).map(|j| HeatKernel::new(j as f64 * grid.ht(), grid.hx(), grid.nx - 1)).collect();
    for k in &kernels {
        if k.mass < 1.0 - 1e-6 {
            return Err(LabError::Numerical(format!(
                "2-d kernel at t = {} leaks mass {}",
                k.t,
                k.leakage()
            )));
        }
    }
    Ok(kernels)
}

fn sample_source_2d(grid: &GridSpec, g: &dyn SourceFn) -> Vec<Vec<f64>> {
    (0..=grid.nt)
        .map(|it| {
            let s = grid.time(it);
            let mut slice = vec![0.0; grid.nx * grid.nx];
            for r in 0..grid.nx {
                for c in 0..grid.nx {
                    slice[r * grid.nx + c] = g.eval(s, &[grid.point(c), grid.point(r)]);
                }
            }
            slice
        })
        .collect()
}

fn mild_solve_2d_slices(grid: GridSpec, kernels: &[HeatKernel], g_slices: &[Vec<f64>]) -> GridField2 {
    let ht = grid.ht();
    let mut slices = vec![vec![0.0; grid.nx * grid.nx]; grid.nt + 1];
    for it in 1..=grid.nt {
        let mut acc = vec![0.0; grid.nx * grid.nx];
        let add = |acc: &mut Vec<f64>, v: Vec<f64>, w: f64| {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * x;
            }
        };
        add(&mut acc, conv2_separable(&kernels[it - 1], &g_slices[0], grid.nx), 0.5);
        for is in 1..it {
            add(&mut acc, conv2_separable(&kernels[it - is - 1], &g_slices[is], grid.nx), 1.0);
        }
        for i in 0..grid.nx * grid.nx {
            slices[it][i] = ht * (acc[i] + 0.5 * g_slices[it][i]);
        }
    }
    GridField2 { grid, slices }
}

/// Mild solve of the driftless problem on a square grid.
pub fn heat_mild_solve_2d(grid: GridSpec, g: &dyn SourceFn) -> Result<GridField2> {
    let kernels = kernels_2d(grid)?;
    Ok(mild_solve_2d_slices(grid, &kernels, &sample_source_2d(&grid, g)))
}

/// Fixed-point solve of the drifted problem on a square grid, same
/// contraction scheme as the 1-d solver.
pub fn drift_pde_solve_2d(
    grid: GridSpec,
    drift: &DriftSpec,
    g: &dyn SourceFn,
    max_iter: usize,
    tol: f64,
) -> Result<(GridField2, DriftSolveStats)> {
    if drift.dimension() != 2 {
        return Err(LabError::Inadmissible("drift_pde_solve_2d needs a 2-d drift".into()));
    }
    let kernels = kernels_2d(grid)?;
    let g_slices = sample_source_2d(&grid, g);
    let nx = grid.nx;
    let mut f1 = vec![0.0; nx * nx];
    let mut f2 = vec![0.0; nx * nx];
    let mut b = [0.0; 2];
    for r in 0..nx {
        for c in 0..nx {
            drift.evaluate(&[grid.point(c), grid.point(r)], &mut b);
            f1[r * nx + c] = b[0];
            f2[r * nx + c] = b[1];
        }
    }

    let mut u = mild_solve_2d_slices(grid, &kernels, &g_slices);
    if drift.is_zero() {
        return Ok((u, DriftSolveStats { iterations: 1, contraction_factor: 0.0, final_gap: 0.0 }));
    }
    let mut rhs = g_slices.clone();
    let mut gaps: Vec<f64> = Vec::new();
    for iter in 1..=max_iter {
        for it in 0..=grid.nt {
            let (gx, gy) = u.gradient_slice(it);
            let rhs_slice = &mut rhs[it];
            for i in 0..nx * nx {
                rhs_slice[i] = g_slices[it][i] + f1[i] * gx[i] + f2[i] * gy[i];
            }
        }
        let next = mild_solve_2d_slices(grid, &kernels, &rhs);
        let gap = u
            .slices
            .iter()
            .zip(&next.slices)
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        u = next;
        gaps.push(gap);
        let scale = u.slices.iter().map(|s| s.iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0f64, f64::max).max(1.0);
        if gap <= tol * scale {
            let factor = contraction_factor(&gaps);
            return Ok((
                u,
                DriftSolveStats { iterations: iter, contraction_factor: factor, final_gap: gap },
            ));
        }
    }
    let factor = contraction_factor(&gaps);
    Err(LabError::Numerical(format!(
        "2-d fixed point did not contract within {max_iter} iterations \
         (measured contraction factor {factor:.3}); shrink the horizon"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::builtin;

    fn grid(nx: usize, l: f64, nt: usize, t: f64) -> GridSpec {
        GridSpec { nx, box_radius: l, nt, horizon: t }
    }

    #[test]
    fn constant_source_gives_u_equals_t() {
        let solver = HeatSolver1::new(grid(512, 4.0, 16, 0.25)).unwrap();
        let field = solver.mild_solve(&|_s: f64, _x: &[f64]| 1.0);
        for it in 0..=16usize {
            let t = field.grid.time(it);
            for i in 0..field.grid.nx {
                if field.grid.interior(i) {
                    let u = field.slices[it][i];
                    assert!(
                        (u - t).abs() < 1e-6,
                        "u({t}, {}) = {u}",
                        field.grid.point(i)
                    );
                }
            }
        }
    }

    #[test]
    fn fft_and_direct_mild_solves_agree() {
        let solver = HeatSolver1::new(grid(128, 4.0, 8, 0.25)).unwrap();
        let src = |s: f64, x: &[f64]| libm::sin(3.0 * x[0]) + s;
        let slices = sample_source_1d(&solver.grid(), &src);
        let a = solver.mild_solve_slices(&slices);
        let b = solver.mild_solve_slices_direct(&slices);
        for it in 0..=8usize {
            for i in 0..128 {
                assert!(
                    (a.slices[it][i] - b.slices[it][i]).abs() < 1e-11,
                    "it={it} i={i}: {} vs {}",
                    a.slices[it][i],
                    b.slices[it][i]
                );
            }
        }
    }

    #[test]
    fn gaussian_bump_matches_convolution_closed_form() {
        // For g(x) = exp(-x^2 / (2 s0^2)), P_tau g has the closed form
        // sqrt(s0^2/(s0^2+tau)) exp(-x^2/(2 (s0^2+tau))), so
        // u(t, x) = int_0^t P_tau g dtau; the oracle integrates that
        // profile in tau by fine Simpson, independent of the solver.
        let s0 = 0.5f64;
        let bump = move |_s: f64, x: &[f64]| libm::exp(-x[0] * x[0] / (2.0 * s0 * s0));
        let solver = HeatSolver1::new(grid(1024, 4.0, 32, 0.25)).unwrap();
        let field = solver.mild_solve(&bump);

        let oracle = |t: f64, x: f64| {
            let f = |tau: f64| {
                let v = s0 * s0 + tau;
                libm::sqrt(s0 * s0 / v) * libm::exp(-x * x / (2.0 * v))
            };
            let panels = 2000;
            let h = t / panels as f64;
            let mut acc = 0.0;
            for p in 0..panels {
                let a = p as f64 * h;
                acc += (h / 6.0) * (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h));
            }
            acc
        };

        let itf = 32usize;
        let t = field.grid.time(itf);
        for i in (0..field.grid.nx).step_by(37) {
            if field.grid.interior(i) {
                let x = field.grid.point(i);
                let expect = oracle(t, x);
                let got = field.slices[itf][i];
                // Trapezoid-in-time discretisation error is O(ht^2).
                assert!(
                    (got - expect).abs() < 2e-4,
                    "u({t}, {x}) = {got} vs oracle {expect}"
                );
            }
        }
    }

    #[test]
    fn sup_bound_with_unit_constant() {
        // Discrete est-u bound with N1 = 1: ||u(t)|| <= t ||g|| since the
        // kernel mass stays <= 1.
        let solver = HeatSolver1::new(grid(512, 4.0, 16, 0.25)).unwrap();
        let src = |s: f64, x: &[f64]| libm::sin(5.0 * x[0] + s) * 0.7;
        let field = solver.mild_solve(&src);
        for it in 1..=16usize {
            let t = field.grid.time(it);
            assert!(
                field.max_abs_slice(it) <= t * 0.7 * (1.0 + 1e-9),
                "slice {it}: {} > {}",
                field.max_abs_slice(it),
                t * 0.7
            );
        }
    }

    #[test]
    fn linearity_of_mild_solve() {
        let solver = HeatSolver1::new(grid(128, 4.0, 8, 0.25)).unwrap();
        let g1 = |s: f64, x: &[f64]| libm::sin(2.0 * x[0]) * (1.0 + s);
        let g2 = |_s: f64, x: &[f64]| libm::cos(x[0]);
        let sum = |s: f64, x: &[f64]| g1(s, x) + g2(s, x);
        let a = solver.mild_solve(&g1);
        let b = solver.mild_solve(&g2);
        let c = solver.mild_solve(&sum);
        for it in 0..=8usize {
            for i in 0..128 {
                let lin = a.slices[it][i] + b.slices[it][i];
                assert!((c.slices[it][i] - lin).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_drift_solve_equals_mild_solve() {
        let solver = HeatSolver1::new(grid(256, 4.0, 8, 0.25)).unwrap();
        let zero = builtin("zero", 1, None).unwrap();
        let src = |_s: f64, x: &[f64]| libm::cos(x[0]);
        let (field, stats) = drift_pde_solve_1d(&solver, &zero, &src, 20, 1e-10).unwrap();
        let plain = solver.mild_solve(&src);
        assert_eq!(stats.iterations, 1);
        for it in 0..=8usize {
            assert_eq!(field.slices[it], plain.slices[it]);
        }
    }

    #[test]
    fn constant_drift_solve_self_converges() {
        // Compare against a solve at doubled resolution; agreement O(hx^2 + ht).
        let c = builtin("constant", 1, Some(1.0)).unwrap();
        let src = |_s: f64, _x: &[f64]| 1.0;
        let coarse = HeatSolver1::new(grid(256, 4.0, 16, 0.25)).unwrap();
        let fine = HeatSolver1::new(grid(1021, 4.0, 64, 0.25)).unwrap();
        let (uc, _) = drift_pde_solve_1d(&coarse, &c, &src, 40, 1e-10).unwrap();
        let (uf, _) = drift_pde_solve_1d(&fine, &c, &src, 40, 1e-10).unwrap();
        // Compare at t = T on the interior via linear interpolation of the
        // fine grid onto coarse points.
        let mut worst = 0.0f64;
        for i in 0..coarse.grid().nx {
            if !coarse.grid().interior(i) {
                continue;
            }
            let x = coarse.grid().point(i);
            let fg = fine.grid();
            let pos = (x + fg.box_radius) / fg.hx();
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            let v_fine = uf.slices[64][j] * (1.0 - frac) + uf.slices[64][j + 1] * frac;
            worst = worst.max((uc.slices[16][i] - v_fine).abs());
        }
        assert!(worst < 5e-3, "coarse/fine gap {worst}");
    }

    #[test]
    fn non_contraction_is_reported() {
        // A huge drift bound at a horizon of 1 cannot contract.
        let big = builtin("constant", 1, Some(40.0)).unwrap();
        let solver = HeatSolver1::new(grid(512, 6.0, 32, 1.0)).unwrap();
        let src = |_s: f64, _x: &[f64]| 1.0;
        let err = drift_pde_solve_1d(&solver, &big, &src, 8, 1e-12).unwrap_err();
        match err {
            LabError::Numerical(msg) => assert!(msg.contains("contract"), "{msg}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn discover_t0_for_sin_drift() {
        let sin = builtin("sin", 1, None).unwrap();
        let src = |_s: f64, _x: &[f64]| 1.0;
        let (t0, factor) = discover_t0(&sin, &src, 512, 4.0, 16, 0.5, 6).unwrap();
        assert!(t0 > 0.0 && factor <= 0.5, "t0 {t0} factor {factor}");
    }

    #[test]
    fn backward_solve_is_time_reversed_forward_solve() {
        let sin = builtin("sin", 1, None).unwrap();
        let solver = HeatSolver1::new(grid(256, 4.0, 16, 0.25)).unwrap();
        // Terminal problem with source -b^1; the reversed field must equal
        // the forward solve with g = b^1 slice by slice.
        let q = |_s: f64, x: &[f64]| libm::sin(x[0]);
        let (v, _) = backward_drift_solve_1d(&solver, &sin, &q, 40, 1e-10).unwrap();
        let (u, _) = drift_pde_solve_1d(&solver, &sin, &q, 40, 1e-10).unwrap();
        for it in 0..=16usize {
            for i in 0..256 {
                assert_eq!(v.slices[it][i], u.slices[16 - it][i]);
            }
        }
        assert_eq!(v.slices[16], vec![0.0; 256], "terminal condition v(T) = 0");
    }

    #[test]
    fn gradient_scaling_sqrt_t() {
        // || grad u ||_inf / sqrt(T) stays within a factor 2 across T in
        // {T0/4, T0/2, T0}. The source g = sign(x) saturates the sqrt(T)
        // law: for the driftless part, grad u(t, 0) = int_0^t 2 p(tau, 0)
        // dtau = sqrt(8 t / pi). (A spatially constant g would make u
        // literally equal to t and the ratio vacuous.)
        let sin = builtin("sin", 1, None).unwrap();
        let src = |_s: f64, x: &[f64]| if x[0] > 0.0 { 1.0 } else { -1.0 };
        let (t0, _) = discover_t0(&sin, &src, 512, 4.0, 16, 0.5, 6).unwrap();
        let mut ratios = Vec::new();
        for scale in [0.25, 0.5, 1.0] {
            let horizon = t0 * scale;
            let solver = HeatSolver1::new(grid(512, 4.0, 16, horizon)).unwrap();
            let (u, _) = drift_pde_solve_1d(&solver, &sin, &src, 40, 1e-10).unwrap();
            let hx = solver.grid().hx();
            ratios.push(
                u.gradient_sup_interior_excluding(&[0.0], 2.0 * hx) / libm::sqrt(horizon),
            );
        }
        let max = ratios.iter().cloned().fold(0.0f64, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 2.0, "ratios {ratios:?}");
        // And the constant is the saturating one, sqrt(8/pi), up to the
        // drift correction.
        let expect = libm::sqrt(8.0 / std::f64::consts::PI);
        for r in &ratios {
            assert!((r / expect - 1.0).abs() < 0.5, "ratio {r} vs sqrt(8/pi) = {expect}");
        }
    }

    #[test]
    fn holder_gradient_seminorm_scales_with_t_quarter() {
        let sin = builtin("sin", 1, None).unwrap();
        let src = |_s: f64, x: &[f64]| if x[0] > 0.0 { 1.0 } else { -1.0 };
        let mut ratios = Vec::new();
        for horizon in [0.125, 0.25] {
            let solver = HeatSolver1::new(grid(512, 4.0, 16, horizon)).unwrap();
            let (u, _) = drift_pde_solve_1d(&solver, &sin, &src, 40, 1e-10).unwrap();
            ratios.push(u.gradient_holder_half_sup() / libm::pow(horizon, 0.25));
        }
        let ratio = ratios[1] / ratios[0];
        assert!((0.4..2.5).contains(&ratio), "ratios {ratios:?}");
    }

    #[test]
    fn grid_validation_catches_bad_boxes() {
        assert!(HeatSolver1::new(grid(512, 1.0, 16, 0.25)).is_err(), "padding < 6 sqrt(T)");
        assert!(HeatSolver1::new(grid(512, 4.0, 16, 1.5)).is_err(), "horizon > 1");
        assert!(HeatSolver1::new(grid(64, 4.0, 2048, 0.25)).is_err(), "ht < 4 hx^2");
    }

    #[test]
    fn two_d_constant_source_gives_u_equals_t() {
        let g2 = grid(128, 2.5, 12, 0.09);
        let field = heat_mild_solve_2d(g2, &|_s: f64, _x: &[f64]| 1.0).unwrap();
        let itf = 12usize;
        let t = field.grid.time(itf);
        for r in 0..g2.nx {
            for c in 0..g2.nx {
                if field.grid.interior(r) && field.grid.interior(c) {
                    let u = field.slices[itf][r * g2.nx + c];
                    assert!((u - t).abs() < 1e-6, "u = {u} vs t = {t}");
                }
            }
        }
    }

    #[test]
    fn two_d_drift_solve_constant_source_stays_u_equals_t() {
        // g = 1 is spatially constant, so u = t solves the drifted problem
        // exactly in the continuum; the fixed point must stay there.
        let g2 = grid(128, 2.5, 8, 0.06);
        let drift = builtin("dini_log", 2, None).unwrap();
        let (u, stats) =
            drift_pde_solve_2d(g2, &drift, &|_s: f64, _x: &[f64]| 1.0, 30, 1e-10).unwrap();
        assert!(stats.contraction_factor < 0.6, "factor {}", stats.contraction_factor);
        let t = g2.time(8);
        for r in 0..g2.nx {
            for c in 0..g2.nx {
                if g2.interior(r) && g2.interior(c) {
                    let v = u.slices[8][r * g2.nx + c];
                    assert!((v - t).abs() < 1e-6, "u = {v} vs t = {t}");
                }
            }
        }
    }

    #[test]
    fn two_d_drift_solve_zero_drift_reduces_to_mild() {
        let g2 = grid(128, 2.5, 6, 0.06);
        let zero = builtin("zero", 2, None).unwrap();
        let bump = |_s: f64, x: &[f64]| libm::exp(-(x[0] * x[0] + x[1] * x[1]) / 0.5);
        let (u, stats) = drift_pde_solve_2d(g2, &zero, &bump, 30, 1e-10).unwrap();
        let plain = heat_mild_solve_2d(g2, &bump).unwrap();
        assert_eq!(stats.iterations, 1);
        for it in 0..=6usize {
            assert_eq!(u.slices[it], plain.slices[it]);
        }
    }

    #[test]
    fn two_d_gaussian_bump_oracle() {
        // Product bump: P_tau g factorizes across axes, so at a grid point
        // (x, y), u(t,(x,y)) = int_0^t (s0^2/(s0^2+tau))
        //   exp(-(x^2+y^2)/(2(s0^2+tau))) dtau, integrated by fine Simpson.
        let s0 = 0.5f64;
        let bump = move |_s: f64, x: &[f64]| {
            libm::exp(-(x[0] * x[0] + x[1] * x[1]) / (2.0 * s0 * s0))
        };
        let g2 = grid(128, 2.5, 12, 0.09);
        let field = heat_mild_solve_2d(g2, &bump).unwrap();
        let itf = 12usize;
        let t = field.grid.time(itf);
        let oracle = |x: f64, y: f64| {
            let f = |tau: f64| {
                let v = s0 * s0 + tau;
                (s0 * s0 / v) * libm::exp(-(x * x + y * y) / (2.0 * v))
            };
            let panels = 4000;
            let h = t / panels as f64;
            let mut acc = 0.0;
            for p in 0..panels {
                let a = p as f64 * h;
                acc += (h / 6.0) * (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h));
            }
            acc
        };
        for (r, c) in [(64usize, 64usize), (64, 70), (58, 64)] {
            let x = g2.point(c);
            let y = g2.point(r);
            let expect = oracle(x, y);
            let got = field.slices[itf][r * g2.nx + c];
            assert!(
                (got - expect).abs() < 2e-3 * expect.max(1e-6),
                "u(T, ({x}, {y})) = {got} vs {expect}"
            );
        }
    }
}
