//! Seeded random sampling shared by demand generation and driver behaviour.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic generator used throughout a trial.
pub type SimRng = ChaCha8Rng;

/// Rejection attempts before [`sample_truncated_normal`] gives up and clamps.
pub const MAX_REJECTIONS: usize = 10_000;

/// Independent generator for one named purpose within a trial.
///
/// Streams with different `stream` ids never share draws, so adding draws
/// to one subsystem does not perturb another.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `replication` of design row `row` under `master`.
pub fn trial_seed(master: u64, row: u64, replication: u64) -> u64 {
    let h = mix64(master);
    let h = mix64(h ^ row.wrapping_mul(0xA24B_AED4_963E_E407));
    mix64(h ^ replication.wrapping_mul(0x9FB2_1C65_1E98_DF25))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSpec {
    pub mean: f64,
    pub sd: f64,
}

impl NormalSpec {
    pub const fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean + self.sd * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedNormalSpec {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormalSpec {
    pub const fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        Self { mean, sd, lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_truncated_normal(self.mean, self.sd, self.lo, self.hi, rng)
    }
}

/// Draws from the normal `N(mean, sd²)` restricted to `[lo, hi]`.
///
/// Rejection from the parent normal; after [`MAX_REJECTIONS`] misses the
/// last draw is clamped into range. `sd == 0` returns `clamp(mean, lo, hi)`
/// without consuming randomness.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidBounds { lo, hi });
    }
    if sd <= 0.0 {
        return Ok(mean.clamp(lo, hi));
    }
    let mut draw = mean;
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = rng.sample(StandardNormal);
        draw = mean + sd * z;
        if (lo..=hi).contains(&draw) {
            return Ok(draw);
        }
    }
    Ok(draw.clamp(lo, hi))
}
