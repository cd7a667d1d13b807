//! Circular statistics for ensemble analyses: resultant length, binned total
//! variation distance, and the Rayleigh uniformity test.

use crate::geometry::wrap_to_two_pi;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
}

/// Angles wrapped to `[0, 2pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularSample {
    values: Vec<f64>,
}

impl CircularSample {
    /// Wraps arbitrary angles into `[0, 2pi)`.
    pub fn from_angles(angles: impl IntoIterator<Item = f64>) -> Self {
        Self {
            values: angles.into_iter().map(wrap_to_two_pi).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Normalized histogram over `bins` equal-width bins on `[0, 2pi)`.
    pub fn histogram(&self, bins: usize) -> Result<Vec<f64>, StatsError> {
        if bins < 2 {
            return Err(StatsError::TooFewBins(bins));
        }
        if self.values.is_empty() {
            return Err(StatsError::EmptySample);
        }
        let mut counts = vec![0usize; bins];
        for &v in &self.values {
            let idx = ((v / TAU) * bins as f64) as usize;
            counts[idx.min(bins - 1)] += 1;
        }
        let n = self.values.len() as f64;
        Ok(counts.into_iter().map(|c| c as f64 / n).collect())
    }
}

/// Length of the mean unit vector: 0 for perfect spread, 1 for perfect
/// concentration.
pub fn resultant_length(sample: &CircularSample) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = sample.len() as f64;
    let (mut c, mut s) = (0.0, 0.0);
    for &v in sample.values() {
        c += v.cos();
        s += v.sin();
    }
    Ok(((c / n).powi(2) + (s / n).powi(2)).sqrt())
}

/// Circular variance `1 - resultant_length`.
pub fn circular_variance(sample: &CircularSample) -> Result<f64, StatsError> {
    resultant_length(sample).map(|r| 1.0 - r)
}

/// Binned total variation distance `0.5 * sum |p_a - p_b|` over equal-width
/// bins on `[0, 2pi)`.
pub fn tv_distance_binned(
    a: &CircularSample,
    b: &CircularSample,
    bins: usize,
) -> Result<f64, StatsError> {
    let pa = a.histogram(bins)?;
    let pb = b.histogram(bins)?;
    Ok(0.5 * pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Outcome of the Rayleigh test: the resultant length, the statistic
/// `Z = n * R^2`, the approximate p-value, and the verdict at the requested
/// level. "Uniform" means uniformity was not rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighTest {
    pub n: usize,
    pub resultant: f64,
    pub z: f64,
    pub p_value: f64,
    pub level: f64,
    pub uniform: bool,
}

/// Rayleigh test for circular uniformity with the standard large-sample
/// p-value approximation.
pub fn uniformity_test(sample: &CircularSample, level: f64) -> Result<RayleighTest, StatsError> {
    let r = resultant_length(sample)?;
    let n = sample.len();
    let nf = n as f64;
    let z = nf * r * r;
    // Large-sample expansion (Mardia & Jupp); clamped to [0, 1].
    let p = (-z).exp()
        * (1.0 + (2.0 * z - z * z) / (4.0 * nf)
            - (24.0 * z - 132.0 * z * z + 76.0 * z.powi(3) - 9.0 * z.powi(4)) / (288.0 * nf * nf));
    let p_value = p.clamp(0.0, 1.0);
    Ok(RayleighTest {
        n,
        resultant: r,
        z,
        p_value,
        level,
        uniform: p_value > level,
    })
}
