//! Registry of drift functions with declared regularity.
//!
//! Each builtin documents why its declared class is correct; discontinuous
//! drifts are defined pointwise everywhere (e.g. `sign(0) = 0`) since the
//! simulator needs a total function even though the statements being tested
//! are insensitive to Lebesgue-null modifications.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::{aux_uniforms, PathSeed};

/// Declared regularity class of a drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularity {
    Lipschitz,
    /// Hölder with exponent in (0, 1).
    Hoelder(f64),
    /// Dini continuous: the attached modulus satisfies the integral condition.
    Dini,
    /// Bounded measurable; admissible in rate experiments only for d = 1.
    BoundedMeasurable,
}

/// Modulus of continuity attached to a drift, used by the Dini integral
/// check and by the seminorm estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Modulus {
    /// theta(r) = r
    Linear,
    /// theta(r) = r^alpha
    Power(f64),
    /// theta(r) = 1 / log(e^2 / r)^2 — Dini but not Hölder of any order:
    /// integrating theta(r)/r by u = log(e^2/r) gives the exact value
    /// `int_2^inf u^-2 du = 1/2`, while theta(r)/r^alpha blows up as r -> 0
    /// for every alpha > 0.
    LogSquared,
}

impl Modulus {
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            Modulus::Linear => r,
            Modulus::Power(alpha) => libm::pow(r, *alpha),
            Modulus::LogSquared => {
                let l = 2.0 - libm::log(r);
                1.0 / (l * l)
            }
        }
    }

    /// theta(e^log_r), stable for log_r far below the underflow threshold of
    /// `exp` (the log-squared modulus still contributes there).
    fn eval_log(&self, log_r: f64) -> f64 {
        match self {
            Modulus::Linear => libm::exp(log_r),
            Modulus::Power(alpha) => libm::exp(alpha * log_r),
            Modulus::LogSquared => {
                let l = 2.0 - log_r;
                1.0 / (l * l)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DriftKind {
    Zero,
    /// Same constant in every coordinate.
    Constant(f64),
    /// b^i(x) = sin(x_i): Lipschitz(1), sup 1.
    Sin,
    /// b(x) = min(1, |x|^alpha) e_1: bounded alpha-Hölder cusp at the origin
    /// (|min(1,r^a) - min(1,s^a)| <= |r - s|^a for a <= 1, and the radius map
    /// is 1-Lipschitz).
    HoelderCusp { alpha: f64 },
    /// b^i(x) = (-1)^i theta(min(|x|, 1/e)) with the log-squared modulus.
    /// The profile is theta composed with a concave cap, hence subadditive;
    /// its modulus of continuity is theta itself.
    DiniLog,
    /// b(x) = sign(x_1) e_1 with sign(0) = 0.
    Sign,
    /// 1-periodic step function: +1 on [k, k + 1/2), -1 on [k + 1/2, k + 1),
    /// acting in e_1.
    StepGrid,
}

/// A named drift b: R^d -> R^d with declared class and sup-norm bound.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    name: String,
    dimension: usize,
    regularity: Regularity,
    sup_bound: f64,
    dini_modulus: Option<Modulus>,
    kind: DriftKind,
}

/// Cap radius of the `dini_log` profile.
const DINI_CAP: f64 = 1.0 / std::f64::consts::E;

#[inline]
fn pointwise_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl DriftSpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn dini_modulus(&self) -> Option<Modulus> {
        self.dini_modulus
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::Zero)
    }

    /// For a drift constant in space, the per-coordinate constant.
    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            DriftKind::Zero => Some(0.0),
            DriftKind::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// Evaluates b(x) into `out`. Total on R^d.
    #[inline]
    pub fn evaluate(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dimension);
        debug_assert_eq!(out.len(), self.dimension);
        match &self.kind {
            DriftKind::Zero => out.fill(0.0),
            DriftKind::Constant(c) => out.fill(*c),
            DriftKind::Sin => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = libm::sin(*xi);
                }
            }
            DriftKind::HoelderCusp { alpha } => {
                let r = norm(x);
                out.fill(0.0);
                out[0] = libm::pow(r, *alpha).min(1.0);
            }
            DriftKind::DiniLog => {
                let r = norm(x).min(DINI_CAP);
                let v = Modulus::LogSquared.eval(r);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = if i % 2 == 0 { v } else { -v };
                }
            }
            DriftKind::Sign => {
                out.fill(0.0);
                out[0] = pointwise_sign(x[0]);
            }
            DriftKind::StepGrid => {
                out.fill(0.0);
                let frac = x[0] - libm::floor(x[0]);
                out[0] = if frac < 0.5 { 1.0 } else { -1.0 };
            }
        }
    }

    /// Scalar evaluation of the first component for d = 1 work.
    #[inline]
    pub fn evaluate_scalar(&self, x: f64) -> f64 {
        let mut out = [0.0];
        self.evaluate(&[x], &mut out);
        out[0]
    }

    /// Jump points of b's first component inside `[lo, hi]` (d = 1 builtins).
    /// Continuous builtins return an empty set.
    pub fn discontinuities_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        match self.kind {
            DriftKind::Sign => {
                if (lo..=hi).contains(&0.0) {
                    vec![0.0]
                } else {
                    vec![]
                }
            }
            DriftKind::StepGrid => {
                let mut pts = Vec::new();
                let mut k = libm::floor(2.0 * lo);
                while k / 2.0 <= hi {
                    let p = k / 2.0;
                    if p >= lo {
                        pts.push(p);
                    }
                    k += 1.0;
                }
                pts
            }
            _ => vec![],
        }
    }

    /// Whether the drift may enter a rate experiment at this dimension.
    pub fn admissible_for_rate(&self, dimension: usize) -> bool {
        match self.regularity {
            Regularity::BoundedMeasurable => dimension == 1,
            _ => true,
        }
    }
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

/// Looks up a builtin drift by name. `param` feeds the parametric builtins
/// (`constant` value, `hoelder` exponent).
pub fn builtin(name: &str, dimension: usize, param: Option<f64>) -> Result<DriftSpec> {
    if dimension == 0 {
        return Err(LabError::InvalidGrid("drift dimension must be positive".into()));
    }
    let spec = match name {
        "zero" => DriftSpec {
            name: "zero".into(),
            dimension,
            regularity: Regularity::Lipschitz,
            sup_bound: 0.0,
            dini_modulus: Some(Modulus::Linear),
            kind: DriftKind::Zero,
        },
        "constant" => {
            let c = param.unwrap_or(1.0);
            DriftSpec {
                name: "constant".into(),
                dimension,
                regularity: Regularity::Lipschitz,
                sup_bound: c.abs(),
                dini_modulus: Some(Modulus::Linear),
                kind: DriftKind::Constant(c),
            }
        }
        "sin" => DriftSpec {
            name: "sin".into(),
            dimension,
            regularity: Regularity::Lipschitz,
            sup_bound: 1.0,
            dini_modulus: Some(Modulus::Linear),
            kind: DriftKind::Sin,
        },
        "hoelder" => {
            let alpha = param.unwrap_or(0.25);
            if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
                return Err(LabError::Inadmissible(format!(
                    "hoelder exponent {alpha} outside (0, 1)"
                )));
            }
            DriftSpec {
                name: "hoelder".into(),
                dimension,
                regularity: Regularity::Hoelder(alpha),
                sup_bound: 1.0,
                dini_modulus: Some(Modulus::Power(alpha)),
                kind: DriftKind::HoelderCusp { alpha },
            }
        }
        "dini_log" => DriftSpec {
            name: "dini_log".into(),
            dimension,
            regularity: Regularity::Dini,
            sup_bound: Modulus::LogSquared.eval(DINI_CAP),
            dini_modulus: Some(Modulus::LogSquared),
            kind: DriftKind::DiniLog,
        },
        "sign" => DriftSpec {
            name: "sign".into(),
            dimension,
            regularity: Regularity::BoundedMeasurable,
            sup_bound: 1.0,
            dini_modulus: None,
            kind: DriftKind::Sign,
        },
        "step_grid" => DriftSpec {
            name: "step_grid".into(),
            dimension,
            regularity: Regularity::BoundedMeasurable,
            sup_bound: 1.0,
            dini_modulus: None,
            kind: DriftKind::StepGrid,
        },
        other => return Err(LabError::UnknownDrift(other.into())),
    };
    Ok(spec)
}

/// Names and one-line descriptions of every builtin, for the CLI.
pub fn builtin_names() -> Vec<(&'static str, &'static str)> {
    vec![
        ("zero", "b = 0 (exact scheme; Lipschitz)"),
        ("constant", "b = c in every coordinate (exact scheme; param c, default 1)"),
        ("sin", "b^i(x) = sin(x_i) (Lipschitz, sup 1)"),
        ("hoelder", "b(x) = min(1, |x|^alpha) e_1 (alpha-Hölder cusp; param alpha, default 1/4)"),
        ("dini_log", "log-squared-modulus profile (Dini but not Hölder, sup 1/9)"),
        ("sign", "b(x) = sign(x_1) e_1, sign(0) = 0 (bounded measurable)"),
        ("step_grid", "1-periodic step +-1 in e_1 (bounded measurable)"),
    ]
}

/// Numerically verifies the Dini condition `int_0^1 theta(r)/r dr < inf`.
///
/// The substitutions `r = e^-u`, `u = v/(1-v)` compactify the integral to
/// `int_0^1 theta(exp(-v/(1-v))) / (1-v)^2 dv` with a bounded integrand for
/// every modulus in the registry. Composite two-point Gauss panels (which
/// never sample the v = 1 endpoint, where only the limit is defined)
/// converge at fourth order. Returns `(value, refinement_gap)` where the gap
/// compares `panels` against `2 * panels`.
pub fn dini_integral(modulus: Modulus, panels: usize) -> (f64, f64) {
    let coarse = dini_integral_once(modulus, panels);
    let fine = dini_integral_once(modulus, panels * 2);
    (fine, (fine - coarse).abs())
}

fn dini_integral_once(modulus: Modulus, panels: usize) -> f64 {
    let f = |v: f64| {
        let one_minus = 1.0 - v;
        modulus.eval_log(-v / one_minus) / (one_minus * one_minus)
    };
    let h = 1.0 / panels as f64;
    // Two-point Gauss-Legendre nodes relative to the panel midpoint.
    let offset = 0.5 * h / libm::sqrt(3.0);
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        total += 0.5 * h * (f(mid - offset) + f(mid + offset));
    }
    total
}

/// Empirical lower bound on ||b||_D: sup of |b| over samples plus the
/// maximum of `max_i |b^i(x) - b^i(y)| / theta(|x - y|)` over random pairs
/// with |x - y| <= 1.
///
/// Deterministic in `seed`.
pub fn dini_seminorm_estimate(
    spec: &DriftSpec,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    let modulus = spec
        .dini_modulus()
        .ok_or_else(|| LabError::Inadmissible(format!("drift `{}` has no modulus", spec.name())))?;
    let d = spec.dimension();
    // 2d + 1 uniforms per pair: base point, direction, radius.
    let draws = aux_uniforms(PathSeed::new(seed, 0), sample_count * (2 * d + 1));
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut sup_b = 0.0f64;
    let mut max_ratio = 0.0f64;
    for s in 0..sample_count {
        let u = &draws[s * (2 * d + 1)..(s + 1) * (2 * d + 1)];
        for c in 0..d {
            x[c] = 4.0 * u[c] - 2.0;
        }
        let mut dir: Vec<f64> = (0..d).map(|c| u[d + c] - 0.5).collect();
        let dn = norm(&dir);
        if dn == 0.0 {
            continue;
        }
        dir.iter_mut().for_each(|v| *v /= dn);
        let r = (u[2 * d]).max(1e-6);
        for c in 0..d {
            y[c] = x[c] + r * dir[c];
        }
        spec.evaluate(&x, &mut bx);
        spec.evaluate(&y, &mut by);
        let theta = modulus.eval(r);
        for c in 0..d {
            sup_b = sup_b.max(bx[c].abs()).max(by[c].abs());
            if theta > 0.0 {
                max_ratio = max_ratio.max((bx[c] - by[c]).abs() / theta);
            }
        }
    }
    Ok(sup_b + max_ratio)
}
