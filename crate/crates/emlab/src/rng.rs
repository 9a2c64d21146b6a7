//! Deterministic, parallel-safe Brownian increments on a finest dyadic grid.
//!
//! Every discretisation level of an experiment shares one Brownian path: the
//! tableau is generated once at the finest level and coarser grids are exact
//! restrictions of its prefix sums (common-path coupling).
//!
//! Generation is counter-style: the draw for step `k` of path `p` under
//! experiment seed `s` sits at a fixed ChaCha8 position keyed by
//! `(s, p, k)`, so any worker can produce any path (or any single step) in
//! any order with bit-identical output. Normal variates come from Box-Muller
//! on top of the raw 64-bit words, evaluated through `libm` so the stream is
//! bit-identical across platforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{LabError, Result};

/// Identifies one Brownian path within one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathSeed {
    pub experiment_seed: u64,
    pub path_index: u64,
}

impl PathSeed {
    pub fn new(experiment_seed: u64, path_index: u64) -> Self {
        Self { experiment_seed, path_index }
    }
}

/// ChaCha word region reserved for auxiliary draws (frozen functional
/// parameters and the like), far beyond any tableau's increment region.
const AUX_WORD_REGION: u128 = 1 << 40;

const TWO_POW_NEG53: f64 = 1.0 / (1u64 << 53) as f64;

/// One standard-normal pair from two raw 64-bit words (Box-Muller).
///
/// `libm` is used for the transcendentals so results do not depend on the
/// platform's libm.
#[inline]
fn normal_pair(a: u64, b: u64) -> (f64, f64) {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * TWO_POW_NEG53;
    let u2 = (b >> 11) as f64 * TWO_POW_NEG53;
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * libm::cos(theta), r * libm::sin(theta))
}

#[inline]
fn path_rng(seed: PathSeed) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.experiment_seed);
    rng.set_stream(seed.path_index);
    rng
}

/// 32-bit words consumed per step for dimension `d`: `ceil(d/2)` Box-Muller
/// pairs, two u64 draws each.
#[inline]
fn words_per_step(dimension: usize) -> u128 {
    (4 * dimension.div_ceil(2)) as u128
}

/// Increments of one Brownian path at the finest dyadic grid, together with
/// their left-to-right prefix sums.
///
/// The prefix sums are the canonical path: `value_at` and every coarse-grid
/// view read from them, which is what makes coupling across levels exact at
/// the bit level. Coarse increments are prefix differences.
#[derive(Debug, Clone)]
pub struct BrownianTableau {
    dimension: usize,
    finest_n: u64,
    horizon: f64,
    steps: usize,
    /// `steps * dimension`, row-major by step.
    increments: Vec<f64>,
    /// `(steps + 1) * dimension`; `prefix[0..d] = 0`.
    prefix: Vec<f64>,
}

/// Checks that `t * n` lands on an integer grid index, returning it.
pub(crate) fn grid_index(t: f64, n: u64, horizon: f64) -> Result<usize> {
    if !(0.0..=horizon + 1e-12).contains(&t) {
        return Err(LabError::InvalidGrid(format!(
            "time {t} outside [0, {horizon}]"
        )));
    }
    let raw = t * n as f64;
    let idx = raw.round();
    if (raw - idx).abs() > 1e-9 {
        return Err(LabError::InvalidGrid(format!(
            "time {t} is not on the level-{n} grid"
        )));
    }
    Ok(idx as usize)
}

pub(crate) fn integer_step_count(n: u64, horizon: f64) -> Result<usize> {
    if horizon <= 0.0 {
        return Err(LabError::InvalidGrid(format!("horizon {horizon} <= 0")));
    }
    let raw = n as f64 * horizon;
    let steps = raw.round();
    if (raw - steps).abs() > 1e-9 || steps < 1.0 {
        return Err(LabError::InvalidGrid(format!(
            "level {n} times horizon {horizon} is not a positive integer"
        )));
    }
    Ok(steps as usize)
}

/// Generates the increments of one path at the finest grid.
///
/// `finest_n` must be a power of two and `finest_n * horizon` an integer.
/// Regenerating with the same seed yields bit-identical values.
pub fn generate_tableau(
    seed: PathSeed,
    dimension: usize,
    finest_n: u64,
    horizon: f64,
) -> Result<BrownianTableau> {
    if dimension == 0 {
        return Err(LabError::InvalidGrid("dimension must be positive".into()));
    }
    if finest_n == 0 || !finest_n.is_power_of_two() {
        return Err(LabError::InvalidGrid(format!(
            "finest_n = {finest_n} is not a power of two"
        )));
    }
    let steps = integer_step_count(finest_n, horizon)?;

    let scale = libm::sqrt(1.0 / finest_n as f64);
    let mut rng = path_rng(seed);
    let mut increments = vec![0.0; steps * dimension];
    let pairs = dimension.div_ceil(2);
    for step in 0..steps {
        let row = &mut increments[step * dimension..(step + 1) * dimension];
        for p in 0..pairs {
            let (z0, z1) = normal_pair(rng.next_u64(), rng.next_u64());
            row[2 * p] = scale * z0;
            if 2 * p + 1 < dimension {
                row[2 * p + 1] = scale * z1;
            }
        }
    }

    // Canonical prefix sums, fixed left-to-right order.
    let mut prefix = vec![0.0; (steps + 1) * dimension];
    for step in 0..steps {
        for c in 0..dimension {
            prefix[(step + 1) * dimension + c] =
                prefix[step * dimension + c] + increments[step * dimension + c];
        }
    }

    Ok(BrownianTableau { dimension, finest_n, horizon, steps, increments, prefix })
}

/// Regenerates the increment row of a single step directly from the counter,
/// without touching the rest of the stream.
///
/// Equals the corresponding row of [`generate_tableau`] bit-for-bit; used to
/// certify that generation order cannot matter.
pub fn increment_at_step(
    seed: PathSeed,
    dimension: usize,
    finest_n: u64,
    step: usize,
) -> Vec<f64> {
    let scale = libm::sqrt(1.0 / finest_n as f64);
    let mut rng = path_rng(seed);
    rng.set_word_pos(step as u128 * words_per_step(dimension));
    let pairs = dimension.div_ceil(2);
    let mut row = vec![0.0; dimension];
    for p in 0..pairs {
        let (z0, z1) = normal_pair(rng.next_u64(), rng.next_u64());
        row[2 * p] = scale * z0;
        if 2 * p + 1 < dimension {
            row[2 * p + 1] = scale * z1;
        }
    }
    row
}

/// Uniform draws in `[0, 1)` from a reserved counter region of the path's
/// stream, disjoint from every increment draw.
pub fn aux_uniforms(seed: PathSeed, count: usize) -> Vec<f64> {
    let mut rng = path_rng(seed);
    rng.set_word_pos(AUX_WORD_REGION);
    (0..count).map(|_| (rng.next_u64() >> 11) as f64 * TWO_POW_NEG53).collect()
}

impl BrownianTableau {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn finest_n(&self) -> u64 {
        self.finest_n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of finest-grid steps (`finest_n * horizon`).
    pub fn step_count(&self) -> usize {
        self.steps
    }

    /// W at fine grid index `j` (0 = time zero).
    #[inline]
    pub fn value_at_index(&self, j: usize) -> &[f64] {
        &self.prefix[j * self.dimension..(j + 1) * self.dimension]
    }

    /// Raw increment row of fine step `j`.
    #[inline]
    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.dimension..(j + 1) * self.dimension]
    }

    /// W at time `t`, which must lie on the finest grid.
    pub fn value_at(&self, t: f64) -> Result<&[f64]> {
        let idx = grid_index(t, self.finest_n, self.horizon)?;
        Ok(self.value_at_index(idx))
    }

    /// Fine steps per coarse step of level `m`.
    pub fn block_size(&self, m: u64) -> Result<usize> {
        if m == 0 || self.finest_n % m != 0 {
            return Err(LabError::InvalidGrid(format!(
                "level {m} does not divide finest_n {}",
                self.finest_n
            )));
        }
        integer_step_count(m, self.horizon)?;
        Ok((self.finest_n / m) as usize)
    }

    /// Increments aggregated to coarse level `m` (prefix differences over
    /// blocks of `finest_n / m` fine steps).
    pub fn aggregate_increments(&self, m: u64) -> Result<Vec<f64>> {
        let block = self.block_size(m)?;
        let coarse_steps = self.steps / block;
        let d = self.dimension;
        let mut out = vec![0.0; coarse_steps * d];
        for k in 0..coarse_steps {
            let lo = self.value_at_index(k * block);
            let hi = self.value_at_index((k + 1) * block);
            for c in 0..d {
                out[k * d + c] = hi[c] - lo[c];
            }
        }
        Ok(out)
    }

    /// W at coarse grid index `k` of level `m`: exactly the restriction of
    /// the finest prefix path.
    pub fn coarse_value(&self, m: u64, k: usize) -> Result<&[f64]> {
        let block = self.block_size(m)?;
        Ok(self.value_at_index(k * block))
    }
}
