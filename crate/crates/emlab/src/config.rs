//! Declarative experiment configuration.
//!
//! One JSON file describes one experiment. After loading, `normalized()`
//! makes every applicable default explicit so the config echoed into the
//! results file is self-describing; `validate()` reports every violation at
//! once.

use serde::{Deserialize, Serialize};

use crate::drift::builtin;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ErrorCurve,
    QuadratureW,
    QuadratureEm,
    Zvonkin,
    Pde,
    KernelBlowup,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::ErrorCurve => "error_curve",
            ExperimentKind::QuadratureW => "quadrature_w",
            ExperimentKind::QuadratureEm => "quadrature_em",
            ExperimentKind::Zvonkin => "zvonkin",
            ExperimentKind::Pde => "pde",
            ExperimentKind::KernelBlowup => "kernel_blowup",
        }
    }

    fn needs_drift(&self) -> bool {
        matches!(
            self,
            ExperimentKind::ErrorCurve
                | ExperimentKind::QuadratureEm
                | ExperimentKind::Zvonkin
                | ExperimentKind::Pde
        )
    }

    fn needs_levels(&self) -> bool {
        matches!(
            self,
            ExperimentKind::ErrorCurve | ExperimentKind::QuadratureW | ExperimentKind::QuadratureEm
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub name: String,
    #[serde(default)]
    pub param: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub name: String,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub tau_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZvonkinConfig {
    /// Scale-function center z.
    pub center: f64,
    /// Table radius around z.
    pub radius: f64,
    /// Table step h.
    pub step: f64,
    /// EM level of the martingale check.
    pub mc_level: u64,
    /// Horizon of the martingale check.
    pub mc_horizon: f64,
    /// Paths of the martingale check.
    pub mc_paths: u64,
}

impl Default for ZvonkinConfig {
    fn default() -> Self {
        Self {
            center: 0.0,
            radius: 2.0,
            step: 1e-3,
            mc_level: 1 << 12,
            mc_horizon: 0.25,
            mc_paths: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeConfig {
    /// Spatial points.
    pub nx: usize,
    /// Box half-width.
    pub box_radius: f64,
    /// Time steps per solve.
    pub nt: usize,
    /// Source registry name: `one`, `sign_x`, `cos_x`, `gauss_bump`.
    pub source: String,
    /// Horizon candidate from which the contraction search halves.
    pub start_horizon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            nx: 2048,
            box_radius: 4.0,
            nt: 16,
            source: "sign_x".into(),
            start_horizon: 0.5,
            max_iter: 40,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// Grid step the kernels are sampled on.
    pub hx: f64,
    /// Times of the blow-up fit (all >= 4 hx^2).
    pub times: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            hx: 1.0 / 256.0,
            times: (0..8).map(|i| 1e-3 * libm::pow(2.0, i as f64)).collect(),
        }
    }
}

/// One experiment, fully described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub drift: Option<DriftConfig>,
    #[serde(default)]
    pub functional: Option<FunctionalConfig>,
    #[serde(default)]
    pub levels: Vec<u64>,
    #[serde(default)]
    pub path_count: u64,
    /// Reference level for error curves; finest integration grid for the
    /// quadrature statistics.
    #[serde(default)]
    pub n_ref: u64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    /// Starting point; defaults to the origin.
    #[serde(default)]
    pub x0: Vec<f64>,
    /// Perturbed-start mode: |x0n - x0|^2 = n^(-1+eps).
    #[serde(default)]
    pub epsilon_offset: Option<f64>,
    /// Worker threads; 0 uses the process-global pool.
    #[serde(default)]
    pub workers: usize,
    /// Dump the first k simulated paths (largest level) to CSV.
    #[serde(default)]
    pub dump_paths: Option<usize>,
    #[serde(default)]
    pub zvonkin: Option<ZvonkinConfig>,
    #[serde(default)]
    pub pde: Option<PdeConfig>,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
}

fn default_dimension() -> usize {
    1
}

fn default_horizon() -> f64 {
    1.0
}

fn default_checkpoints() -> usize {
    9
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(json)?)
    }

    /// Fills every applicable default, so the echoed config stands alone.
    pub fn normalized(mut self) -> ExperimentConfig {
        if self.x0.is_empty() {
            self.x0 = vec![0.0; self.dimension];
        }
        match self.kind {
            ExperimentKind::Zvonkin => {
                self.zvonkin.get_or_insert_with(ZvonkinConfig::default);
            }
            ExperimentKind::Pde => {
                self.pde.get_or_insert_with(PdeConfig::default);
            }
            ExperimentKind::KernelBlowup => {
                self.kernel.get_or_insert_with(KernelConfig::default);
            }
            _ => {}
        }
        self
    }

    /// Collects every config-level violation. Deeper numeric validation
    /// happens inside the modules and reports the same way.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.dimension == 0 {
            violations.push("dimension must be positive".into());
        }
        if !(self.horizon > 0.0) {
            violations.push(format!("horizon {} must be positive", self.horizon));
        }
        if self.kind.needs_drift() {
            match &self.drift {
                None => violations.push(format!(
                    "kind {} requires a drift section",
                    self.kind.as_str()
                )),
                Some(d) => {
                    if let Err(e) = builtin(&d.name, self.dimension.max(1), d.param) {
                        violations.push(e.to_string());
                    }
                }
            }
        }
        if self.kind.needs_levels() {
            if self.levels.is_empty() {
                violations.push("levels must be non-empty".into());
            }
            if self.path_count == 0 {
                violations.push("path_count must be positive".into());
            }
            if self.n_ref == 0 {
                violations.push("n_ref must be set".into());
            }
        }
        if matches!(self.kind, ExperimentKind::QuadratureW | ExperimentKind::QuadratureEm)
            && self.functional.is_none()
        {
            violations.push("quadrature kinds require a functional section".into());
        }
        if self.kind == ExperimentKind::ErrorCurve && self.checkpoints < 2 {
            violations.push("need at least 2 checkpoints".into());
        }
        if !self.x0.is_empty() && self.x0.len() != self.dimension {
            violations.push(format!(
                "x0 has {} coordinates, dimension is {}",
                self.x0.len(),
                self.dimension
            ));
        }
        if matches!(self.kind, ExperimentKind::Zvonkin | ExperimentKind::Pde)
            && self.dimension != 1
        {
            violations.push(format!(
                "kind {} is one-dimensional, got dimension {}",
                self.kind.as_str(),
                self.dimension
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(LabError::InvalidConfig(violations))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_error_curve_config_roundtrips() {
        let json = r#"{
            "kind": "error_curve",
            "seed": 42,
            "drift": {"name": "sign"},
            "levels": [16, 32, 64],
            "path_count": 1000,
            "n_ref": 1024
        }"#;
        let config = ExperimentConfig::from_json(json).unwrap().normalized();
        config.validate().unwrap();
        assert_eq!(config.dimension, 1);
        assert_eq!(config.horizon, 1.0);
        assert_eq!(config.checkpoints, 9);
        assert_eq!(config.x0, vec![0.0]);
        let echoed = serde_json::to_string(&config).unwrap();
        let back = ExperimentConfig::from_json(&echoed).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn validation_lists_every_violation() {
        let json = r#"{"kind": "error_curve", "dimension": 0}"#;
        let config = ExperimentConfig::from_json(json).unwrap();
        match config.validate().unwrap_err() {
            LabError::InvalidConfig(v) => assert!(v.len() >= 4, "{v:?}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"kind": "error_curve", "nonsense": 1}"#;
        assert!(ExperimentConfig::from_json(json).is_err());
    }

    #[test]
    fn kind_sections_get_defaults() {
        let json = r#"{"kind": "zvonkin", "drift": {"name": "sign"}}"#;
        let config = ExperimentConfig::from_json(json).unwrap().normalized();
        config.validate().unwrap();
        let z = config.zvonkin.unwrap();
        assert_eq!(z.mc_paths, 100_000);
        assert_eq!(z.radius, 2.0);
    }

    #[test]
    fn unknown_drift_is_reported_in_validation() {
        let json = r#"{"kind": "pde", "drift": {"name": "bogus"}}"#;
        let config = ExperimentConfig::from_json(json).unwrap().normalized();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
