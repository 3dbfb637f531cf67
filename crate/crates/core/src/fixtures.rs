//! Synthetic binary evaluation pools with a known label-generating process.
//!
//! Scores `f` are spread uniformly over [0, 1]; each item's label is
//! Bernoulli with success probability `p(f) = clamp(f + offset_d, 0.005, 0.995)`
//! where `offset_d` depends on the score decile `d`. Because `p` is known, the
//! per-decile residual variance `Var(Y - f | decile) = E[p(1-p)] + Var(p - f)`
//! is computed exactly from the item probabilities when the fixture is built.

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::EvaluationCsvRow;
use crate::sampling::{substream, StreamPurpose, WHOLE_POOL};

/// Per-decile miscalibration of the heterogeneous fixture: calibrated at the
/// extremes, alternating over- and under-confidence in the middle.
pub const HETEROGENEOUS_OFFSETS: [f64; 10] = [0.0, 0.03, 0.10, -0.12, 0.15, -0.15, 0.12, -0.10, -0.03, 0.0];

/// Minimum max/min ratio of per-decile residual variance for the
/// heterogeneous fixture.
pub const MIN_HETEROGENEITY: f64 = 4.0;

const P_MIN: f64 = 0.005;
const P_MAX: f64 = 0.995;

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFixture {
    pub rows: Vec<EvaluationCsvRow>,
    /// Success probability of each row's label.
    pub probabilities: Vec<f64>,
    /// Exact `Var(Y - f)` within each score decile.
    pub decile_residual_variance: Vec<f64>,
}

impl BinaryFixture {
    /// Largest over smallest per-decile residual variance.
    pub fn heterogeneity(&self) -> f64 {
        let max = self.decile_residual_variance.iter().copied().fold(f64::MIN, f64::max);
        let min = self.decile_residual_variance.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }
}

/// Builds a fixture of `size` rows with the given per-decile offsets.
pub fn binary_fixture(size: usize, offsets: &[f64; 10], seed: u64) -> Result<BinaryFixture> {
    if size < 20 {
        return Err(Error::Config(format!("fixture size {size} is below 20")));
    }
    let mut rng = substream(seed, 0, WHOLE_POOL, StreamPurpose::Fixture);
    let mut rows = Vec::with_capacity(size);
    let mut probabilities = Vec::with_capacity(size);
    let mut by_decile: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 10];
    for i in 0..size {
        // Jittered grid keeps every decile populated.
        let f = (i as f64 + rng.gen::<f64>()) / size as f64;
        let decile = ((f * 10.0) as usize).min(9);
        let p = (f + offsets[decile]).clamp(P_MIN, P_MAX);
        let y = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        rows.push(EvaluationCsvRow {
            label: Some(y),
            prediction: f,
            confidence: None,
            stratum: None,
        });
        probabilities.push(p);
        by_decile[decile].push((f, p));
    }
    let decile_residual_variance = by_decile
        .iter()
        .map(|items| {
            let m = items.len() as f64;
            let bernoulli = items.iter().map(|(_, p)| p * (1.0 - p)).sum::<f64>() / m;
            let gap_mean = items.iter().map(|(f, p)| p - f).sum::<f64>() / m;
            let gap_var = items.iter().map(|(f, p)| (p - f - gap_mean).powi(2)).sum::<f64>() / m;
            bernoulli + gap_var
        })
        .collect();
    Ok(BinaryFixture {
        rows,
        probabilities,
        decile_residual_variance,
    })
}

/// Fixture whose autorater is miscalibrated differently across deciles.
///
/// Fails if the per-decile residual variances differ by less than
/// [`MIN_HETEROGENEITY`].
pub fn heterogeneous_binary_fixture(size: usize, seed: u64) -> Result<BinaryFixture> {
    let fixture = binary_fixture(size, &HETEROGENEOUS_OFFSETS, seed)?;
    let ratio = fixture.heterogeneity();
    if ratio < MIN_HETEROGENEITY {
        return Err(Error::Data(format!(
            "fixture heterogeneity {ratio:.3} below {MIN_HETEROGENEITY}"
        )));
    }
    Ok(fixture)
}

/// Fixture with a calibrated autorater, `f = P(Y = 1)` up to clamping.
pub fn calibrated_binary_fixture(size: usize, seed: u64) -> Result<BinaryFixture> {
    binary_fixture(size, &[0.0; 10], seed)
}
