//! Euler-Maruyama paths and reference solutions on a shared tableau.
//!
//! States are kept in the decomposition `X_k = base_k + W_{t_k}` with
//! `base_k = x0 + sum_{j<k} b(X_j)/n`. The decomposition is the same
//! recursion written with the Brownian prefix factored out; it is what makes
//! the error against exact references vanish bit-for-bit for zero and
//! (dyadic) constant drift, and makes the zero-drift scheme literally equal
//! to `x0 + W` on the shared tableau.

use crate::drift::DriftSpec;
use crate::error::{LabError, Result};
use crate::rng::{grid_index, integer_step_count, BrownianTableau};

/// One Euler-Maruyama path at a fixed level.
#[derive(Debug, Clone)]
pub struct SchemePath {
    level_n: u64,
    dimension: usize,
    steps: usize,
    /// Fine steps of the tableau per coarse step.
    block: usize,
    /// `(steps+1) * d`: x0 plus the accumulated drift.
    base: Vec<f64>,
    /// `(steps+1) * d`: `base + W` at the grid times.
    states: Vec<f64>,
    /// `steps * d`: the drift evaluations `b(X_k)` used by each step.
    drift_values: Vec<f64>,
}

impl SchemePath {
    pub fn level(&self) -> u64 {
        self.level_n
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn step_count(&self) -> usize {
        self.steps
    }

    /// X at coarse step `k`.
    #[inline]
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dimension..(k + 1) * self.dimension]
    }

    /// x0 + accumulated drift at coarse step `k`.
    #[inline]
    pub fn base(&self, k: usize) -> &[f64] {
        &self.base[k * self.dimension..(k + 1) * self.dimension]
    }

    /// b(X_k) used by step `k`.
    #[inline]
    pub fn drift_value(&self, k: usize) -> &[f64] {
        &self.drift_values[k * self.dimension..(k + 1) * self.dimension]
    }

    /// X at grid time `t` (must lie on the level grid).
    pub fn state_at_time(&self, t: f64, horizon: f64) -> Result<&[f64]> {
        let idx = grid_index(t, self.level_n, horizon)?;
        Ok(self.state(idx))
    }

    /// Continuous-time extension at fine index `j` of the tableau:
    /// `X_s = base_k + b(X_k) (s - t_k) + W_s` where `k = k_n(s)`.
    ///
    /// Writes into `out`. For zero drift this reduces bit-for-bit to
    /// `x0 + W_s`.
    #[inline]
    pub fn extended_state(&self, tableau: &BrownianTableau, fine_j: usize, out: &mut [f64]) {
        let k = fine_j / self.block;
        let frac =
            (fine_j - k * self.block) as f64 / (self.block as f64 * self.level_n as f64);
        let base = self.base(k);
        let bval = if k < self.steps { self.drift_value(k) } else { base };
        let w = tableau.value_at_index(fine_j);
        for c in 0..self.dimension {
            let drifted = if k < self.steps { base[c] + bval[c] * frac } else { base[c] };
            out[c] = drifted + w[c];
        }
    }
}

/// Simulates the Euler-Maruyama scheme at level `n` along `tableau`.
///
/// `n` must divide the tableau's finest level and `n * horizon` must be an
/// integer.
pub fn simulate_em(
    drift: &DriftSpec,
    tableau: &BrownianTableau,
    n: u64,
    x0n: &[f64],
) -> Result<SchemePath> {
    let d = tableau.dimension();
    if drift.dimension() != d || x0n.len() != d {
        return Err(LabError::InvalidGrid(format!(
            "dimension mismatch: drift {}, tableau {}, x0 {}",
            drift.dimension(),
            d,
            x0n.len()
        )));
    }
    let block = tableau.block_size(n)?;
    let steps = integer_step_count(n, tableau.horizon())?;
    let dt = 1.0 / n as f64;

    let mut base = vec![0.0; (steps + 1) * d];
    let mut states = vec![0.0; (steps + 1) * d];
    let mut drift_values = vec![0.0; steps * d];

    base[..d].copy_from_slice(x0n);
    for c in 0..d {
        states[c] = base[c] + 0.0; // W_0 = 0
    }
    let mut bval = vec![0.0; d];
    for k in 0..steps {
        let x_k: Vec<f64> = states[k * d..(k + 1) * d].to_vec();
        drift.evaluate(&x_k, &mut bval);
        drift_values[k * d..(k + 1) * d].copy_from_slice(&bval);
        let w_next = tableau.value_at_index((k + 1) * block);
        for c in 0..d {
            let b_next = base[k * d + c] + bval[c] * dt;
            base[(k + 1) * d + c] = b_next;
            states[(k + 1) * d + c] = b_next + w_next[c];
        }
    }

    Ok(SchemePath { level_n: n, dimension: d, steps, block, base, states, drift_values })
}

/// How the (proxy) true solution is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    ExactZeroDrift,
    ExactConstantDrift,
    FineEm,
}

/// Reference solution values at a set of checkpoint times, driven by the
/// same tableau.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    pub kind: ReferenceKind,
    pub level_used: Option<u64>,
    pub times: Vec<f64>,
    /// `times.len() * d`.
    pub states: Vec<f64>,
}

impl ReferencePath {
    pub fn state(&self, i: usize) -> &[f64] {
        let d = self.states.len() / self.times.len();
        &self.states[i * d..(i + 1) * d]
    }
}

/// Picks the reference kind a drift admits: closed forms where the scheme is
/// exact, fine-grid EM otherwise.
pub fn default_reference_kind(drift: &DriftSpec) -> ReferenceKind {
    match drift.constant_value() {
        Some(0.0) => ReferenceKind::ExactZeroDrift,
        Some(_) => ReferenceKind::ExactConstantDrift,
        None => ReferenceKind::FineEm,
    }
}

/// Computes the reference solution at `times` along `tableau`.
///
/// For the exact kinds the drift must match the kind; for `FineEm` the level
/// `n_ref` must equal the tableau's finest level.
pub fn simulate_reference(
    drift: &DriftSpec,
    tableau: &BrownianTableau,
    kind: ReferenceKind,
    n_ref: u64,
    x0: &[f64],
    times: &[f64],
) -> Result<ReferencePath> {
    let d = tableau.dimension();
    match kind {
        ReferenceKind::ExactZeroDrift | ReferenceKind::ExactConstantDrift => {
            let c = drift.constant_value().ok_or_else(|| {
                LabError::Inadmissible(format!(
                    "drift `{}` is not constant in space; exact reference unavailable",
                    drift.name()
                ))
            })?;
            if kind == ReferenceKind::ExactZeroDrift && c != 0.0 {
                return Err(LabError::Inadmissible(
                    "exact_zero_drift reference requires zero drift".into(),
                ));
            }
            let mut states = vec![0.0; times.len() * d];
            for (i, &t) in times.iter().enumerate() {
                let w = tableau.value_at(t)?;
                for cc in 0..d {
                    // Same base-plus-noise association as the scheme itself.
                    let base = x0[cc] + c * t;
                    states[i * d + cc] = base + w[cc];
                }
            }
            Ok(ReferencePath { kind, level_used: None, times: times.to_vec(), states })
        }
        ReferenceKind::FineEm => {
            if n_ref != tableau.finest_n() {
                return Err(LabError::InvalidGrid(format!(
                    "fine_em reference level {n_ref} must equal the tableau's finest level {}",
                    tableau.finest_n()
                )));
            }
            let path = simulate_em(drift, tableau, n_ref, x0)?;
            let mut states = vec![0.0; times.len() * d];
            for (i, &t) in times.iter().enumerate() {
                let s = path.state_at_time(t, tableau.horizon())?;
                states[i * d..(i + 1) * d].copy_from_slice(s);
            }
            Ok(ReferencePath {
                kind,
                level_used: Some(n_ref),
                times: times.to_vec(),
                states,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::builtin;
    use crate::rng::{generate_tableau, PathSeed};

    fn tableau(d: usize, finest: u64) -> BrownianTableau {
        generate_tableau(PathSeed::new(21, 4), d, finest, 1.0).unwrap()
    }

    #[test]
    fn zero_drift_is_x0_plus_w_bitwise() {
        let t = tableau(2, 64);
        let zero = builtin("zero", 2, None).unwrap();
        let x0 = [0.25, -1.5];
        for n in [8u64, 16, 64] {
            let path = simulate_em(&zero, &t, n, &x0).unwrap();
            let block = t.block_size(n).unwrap();
            for k in 0..=path.step_count() {
                let w = t.value_at_index(k * block);
                for c in 0..2 {
                    let expect = (x0[c] + 0.0) + w[c];
                    assert_eq!(path.state(k)[c], expect);
                }
            }
        }
    }

    #[test]
    fn constant_drift_em_is_exact() {
        let t = tableau(1, 32);
        let c = builtin("constant", 1, Some(1.0)).unwrap();
        let x0 = [0.5];
        let times = [0.25, 0.5, 1.0];
        let reference =
            simulate_reference(&c, &t, ReferenceKind::ExactConstantDrift, 32, &x0, &times)
                .unwrap();
        for n in [4u64, 8, 32] {
            let path = simulate_em(&c, &t, n, &x0).unwrap();
            for (i, &time) in times.iter().enumerate() {
                let s = path.state_at_time(time, 1.0).unwrap();
                assert_eq!(s, reference.state(i), "n={n} t={time}");
            }
        }
    }

    #[test]
    fn sign_drift_matches_hand_unrolled_recursion() {
        // Four-step recursion x_{k+1} = x_k + sign(x_k)/4 + dW_k unrolled by
        // hand on one fixed seed.
        let t = tableau(1, 4);
        let sign = builtin("sign", 1, None).unwrap();
        let x0 = 0.1;
        let path = simulate_em(&sign, &t, 4, &[x0]).unwrap();

        let dw = |k: usize| t.value_at_index(k + 1)[0] - t.value_at_index(k)[0];
        let s = |x: f64| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        let mut x = x0;
        for k in 0..4 {
            x = x + s(x) / 4.0 + dw(k);
            let got = path.state(k + 1)[0];
            assert!(
                (got - x).abs() <= 1e-14 * (1.0 + x.abs()),
                "step {k}: {got} vs hand-unrolled {x}"
            );
        }
    }

    #[test]
    fn per_step_recursion_recheckable_from_tableau() {
        let t = tableau(1, 64);
        let drift = builtin("sin", 1, None).unwrap();
        let path = simulate_em(&drift, &t, 16, &[0.3]).unwrap();
        let block = t.block_size(16).unwrap();
        for k in 0..path.step_count() {
            let dw = t.value_at_index((k + 1) * block)[0] - t.value_at_index(k * block)[0];
            let expect = path.state(k)[0] + path.drift_value(k)[0] / 16.0 + dw;
            let got = path.state(k + 1)[0];
            assert!(
                (got - expect).abs() <= 1e-13 * (1.0 + expect.abs()),
                "step {k}: recursion residual {}",
                got - expect
            );
        }
    }

    #[test]
    fn coupling_zero_drift_levels_agree_at_common_times() {
        let t = tableau(1, 64);
        let zero = builtin("zero", 1, None).unwrap();
        let coarse = simulate_em(&zero, &t, 4, &[1.0]).unwrap();
        let fine = simulate_em(&zero, &t, 64, &[1.0]).unwrap();
        for k in 0..=4usize {
            let tt = k as f64 / 4.0;
            assert_eq!(
                coarse.state_at_time(tt, 1.0).unwrap(),
                fine.state_at_time(tt, 1.0).unwrap()
            );
        }
    }

    #[test]
    fn extended_state_zero_drift_is_w_bitwise() {
        let t = tableau(1, 64);
        let zero = builtin("zero", 1, None).unwrap();
        let path = simulate_em(&zero, &t, 8, &[0.0]).unwrap();
        let mut out = [0.0];
        for j in 0..=t.step_count() {
            path.extended_state(&t, j, &mut out);
            assert_eq!(out[0], t.value_at_index(j)[0]);
        }
    }

    #[test]
    fn level_must_divide_finest() {
        let t = tableau(1, 64);
        let zero = builtin("zero", 1, None).unwrap();
        assert!(simulate_em(&zero, &t, 24, &[0.0]).is_err());
        assert!(simulate_em(&zero, &t, 128, &[0.0]).is_err());
    }

    #[test]
    fn reference_kind_validation() {
        let t = tableau(1, 64);
        let sign = builtin("sign", 1, None).unwrap();
        assert!(simulate_reference(&sign, &t, ReferenceKind::ExactZeroDrift, 64, &[0.0], &[1.0])
            .is_err());
        assert!(
            simulate_reference(&sign, &t, ReferenceKind::FineEm, 32, &[0.0], &[1.0]).is_err(),
            "fine reference must run at the tableau's finest level"
        );
        assert_eq!(default_reference_kind(&sign), ReferenceKind::FineEm);
        let zero = builtin("zero", 1, None).unwrap();
        assert_eq!(default_reference_kind(&zero), ReferenceKind::ExactZeroDrift);
    }

    #[test]
    fn fine_em_self_consistency_order_one_for_smooth_drift() {
        // For Lipschitz drift and additive noise the EM scheme has strong
        // order 1 pathwise: the gap between levels n and 2n halves as n
        // doubles, averaged over seeds.
        let drift = builtin("sin", 1, None).unwrap();
        let checkpoints: Vec<f64> = (1..=8).map(|j| j as f64 / 8.0).collect();
        let mut ratios = Vec::new();
        for n in [64u64, 128] {
            let mut gap_sum = 0.0;
            let mut gap2_sum = 0.0;
            for p in 0..200u64 {
                let t = generate_tableau(PathSeed::new(31, p), 1, 512, 1.0).unwrap();
                let a = simulate_em(&drift, &t, n, &[0.2]).unwrap();
                let b = simulate_em(&drift, &t, 2 * n, &[0.2]).unwrap();
                let c = simulate_em(&drift, &t, 4 * n, &[0.2]).unwrap();
                let gap = checkpoints
                    .iter()
                    .map(|&tt| {
                        (a.state_at_time(tt, 1.0).unwrap()[0]
                            - b.state_at_time(tt, 1.0).unwrap()[0])
                            .abs()
                    })
                    .fold(0.0f64, f64::max);
                let gap2 = checkpoints
                    .iter()
                    .map(|&tt| {
                        (b.state_at_time(tt, 1.0).unwrap()[0]
                            - c.state_at_time(tt, 1.0).unwrap()[0])
                            .abs()
                    })
                    .fold(0.0f64, f64::max);
                gap_sum += gap;
                gap2_sum += gap2;
            }
            ratios.push(gap_sum / gap2_sum);
        }
        for r in ratios {
            assert!((1.5..3.0).contains(&r), "doubling ratio {r} not near 2");
        }
    }
}
