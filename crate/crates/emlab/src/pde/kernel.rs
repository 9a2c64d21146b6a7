//! Discrete heat kernels and the blow-up law of their derivative L1 norms.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Gaussian convolution weights `hx * p(t, m hx)` on a uniform grid,
/// truncated at eight standard deviations (or the grid width).
#[derive(Debug, Clone)]
pub struct HeatKernel {
    pub t: f64,
    pub hx: f64,
    pub radius: usize,
    /// `2 * radius + 1` taps, offsets `-radius..=radius`.
    pub taps: Vec<f64>,
    pub mass: f64,
}

impl HeatKernel {
    pub fn new(t: f64, hx: f64, max_radius: usize) -> HeatKernel {
        let sigma = libm::sqrt(t);
        let radius = ((8.0 * sigma / hx).ceil() as usize).clamp(1, max_radius);
        let norm = hx / libm::sqrt(2.0 * std::f64::consts::PI * t);
        let taps: Vec<f64> = (-(radius as isize)..=radius as isize)
            .map(|m| {
                let x = m as f64 * hx;
                norm * libm::exp(-x * x / (2.0 * t))
            })
            .collect();
        let mass = taps.iter().sum();
        HeatKernel { t, hx, radius, taps, mass }
    }

    /// Truncated mass deficit `1 - sum(taps)` (reported, never hidden).
    pub fn leakage(&self) -> f64 {
        1.0 - self.mass
    }

    /// Discrete L1 norm of the k-th spatial derivative, sampling the
    /// analytic Gaussian derivatives on the tap grid (k = 0, 1, 2).
    pub fn deriv_l1_norm(&self, k: usize) -> f64 {
        let t = self.t;
        let norm = self.hx / libm::sqrt(2.0 * std::f64::consts::PI * t);
        (-(self.radius as isize)..=self.radius as isize)
            .map(|m| {
                let x = m as f64 * self.hx;
                let p = norm * libm::exp(-x * x / (2.0 * t));
                match k {
                    0 => p,
                    1 => (x / t).abs() * p,
                    2 => ((x * x - t) / (t * t)).abs() * p,
                    _ => panic!("derivative order {k} unsupported"),
                }
            })
            .sum()
    }
}

/// Log-log slopes of the derivative L1 norms against time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelBlowupReport {
    pub times: Vec<f64>,
    pub l1_norms: [Vec<f64>; 3],
    /// Fitted slope of `log ||d^k p(t)||_L1` vs `log t` for k = 0, 1, 2.
    pub slopes: [f64; 3],
    pub hx: f64,
    pub mass_deficit_max: f64,
}

/// Fits the `t^{-k/2}` blow-up of the kernel derivative norms on a set of
/// times. Each time must satisfy `t >= 4 hx^2` so the kernel is resolved.
pub fn verify_kernel_blowup(hx: f64, times: &[f64], max_radius: usize) -> Result<KernelBlowupReport> {
    if times.len() < 3 {
        return Err(LabError::InvalidGrid("need at least 3 times for the blow-up fit".into()));
    }
    for &t in times {
        if t < 4.0 * hx * hx {
            return Err(LabError::InvalidGrid(format!(
                "time {t} under-resolves the kernel (need t >= 4 hx^2 = {})",
                4.0 * hx * hx
            )));
        }
    }
    let mut l1_norms: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut mass_deficit_max = 0.0f64;
    for &t in times {
        let kernel = HeatKernel::new(t, hx, max_radius);
        mass_deficit_max = mass_deficit_max.max(kernel.leakage().abs());
        for (k, norms) in l1_norms.iter_mut().enumerate() {
            norms.push(kernel.deriv_l1_norm(k));
        }
    }
    let mut slopes = [0.0f64; 3];
    for (k, norms) in l1_norms.iter().enumerate() {
        slopes[k] = slope_log_log(times, norms)?;
    }
    Ok(KernelBlowupReport { times: times.to_vec(), l1_norms, slopes, hx, mass_deficit_max })
}

fn slope_log_log(ts: &[f64], vs: &[f64]) -> Result<f64> {
    if vs.iter().any(|&v| v <= 0.0) {
        return Err(LabError::Numerical("nonpositive norm in blow-up fit".into()));
    }
    let xs: Vec<f64> = ts.iter().map(|t| libm::log(*t)).collect();
    let ys: Vec<f64> = vs.iter().map(|v| libm::log(*v)).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_mass_is_one_up_to_truncation() {
        for &t in &[1e-3, 1e-2, 0.1, 0.5] {
            let k = HeatKernel::new(t, 1.0 / 256.0, 4096);
            assert!(k.leakage().abs() < 1e-9, "t={t}: leakage {}", k.leakage());
            assert!(k.taps.iter().all(|&w| w >= 0.0));
            assert!(k.mass <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn derivative_norms_match_gaussian_closed_forms() {
        // ||dp(t)||_L1 = sqrt(2/(pi t)) (two humps of height p(0)); and
        // with E|Z^2 - 1| = 4 phi(1) for standard normal Z,
        // ||d^2 p(t)||_L1 = E|X^2 - t|/t^2 = 4 e^{-1/2} / (sqrt(2 pi) t).
        let hx = 1.0 / 512.0;
        for &t in &[0.01, 0.05, 0.25] {
            let k = HeatKernel::new(t, hx, 1 << 16);
            let d1 = k.deriv_l1_norm(1);
            let exact1 = libm::sqrt(2.0 / (std::f64::consts::PI * t));
            assert!((d1 - exact1).abs() < 1e-3 * exact1, "t={t}: {d1} vs {exact1}");
            let d2 = k.deriv_l1_norm(2);
            let exact2 =
                4.0 * libm::exp(-0.5) / (libm::sqrt(2.0 * std::f64::consts::PI) * t);
            assert!((d2 - exact2).abs() < 2e-3 * exact2, "t={t}: {d2} vs {exact2}");
        }
    }

    #[test]
    fn norms_obey_uniform_blowup_bound() {
        // N0 = 2 covers k = 0, 1, 2 for the Gaussian on t <= 1.
        let hx = 1.0 / 256.0;
        for &t in &[4.0 * (1.0 / 256.0f64) * (1.0 / 256.0), 0.01, 0.1, 1.0] {
            let kernel = HeatKernel::new(t, hx, 1 << 16);
            for k in 0..=2usize {
                let bound = 2.0 * libm::pow(t, -(k as f64) / 2.0);
                let norm = kernel.deriv_l1_norm(k);
                assert!(norm <= bound, "k={k} t={t}: {norm} > {bound}");
            }
        }
    }

    #[test]
    fn blowup_slopes() {
        let hx = 1.0 / 256.0;
        let times: Vec<f64> = (0..8).map(|i| 1e-3 * libm::pow(2.0, i as f64)).collect();
        let report = verify_kernel_blowup(hx, &times, 1 << 16).unwrap();
        assert!(report.slopes[0].abs() < 0.02, "k=0 slope {}", report.slopes[0]);
        assert!((report.slopes[1] + 0.5).abs() < 0.1, "k=1 slope {}", report.slopes[1]);
        assert!((report.slopes[2] + 1.0).abs() < 0.1, "k=2 slope {}", report.slopes[2]);
        assert!(report.mass_deficit_max < 1e-9);
    }

    #[test]
    fn under_resolved_kernel_is_rejected() {
        let hx = 0.1;
        assert!(verify_kernel_blowup(hx, &[1e-3, 2e-3, 4e-3], 1024).is_err());
    }
}
