//! Per-(method, n) aggregation of repeated-trial results.

use crate::error::{Error, Result};
use crate::stats::{interpolated_quantile, two_sided_z};

/// Result of one trial of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub theta_hat: f64,
    pub width: f64,
    pub covered: bool,
}

/// Aggregates over all trials of one method at one labeled budget `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub method: String,
    pub n: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub width_q16: f64,
    pub width_q84: f64,
    /// Percent reduction of the mean width relative to classical inference.
    pub percent_reduction: f64,
    /// Labels classical inference would need for the same mean width;
    /// `f64::INFINITY` when the mean width is zero.
    pub effective_sample_size: f64,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// `(classical - method) / classical * 100`; negative when the method is wider.
pub fn percent_reduction(classical_width: f64, method_width: f64) -> Result<f64> {
    if !(classical_width > 0.0 && classical_width.is_finite()) {
        return Err(Error::Domain(format!(
            "classical width must be positive, got {classical_width}"
        )));
    }
    Ok((classical_width - method_width) / classical_width * 100.0)
}

/// Inverts the classical width `2 z sqrt(var / n)` for `n`.
///
/// Returns `f64::INFINITY` for a zero width.
pub fn effective_sample_size(method_width: f64, pool_label_var: f64, alpha: f64) -> Result<f64> {
    if !(pool_label_var >= 0.0 && pool_label_var.is_finite()) {
        return Err(Error::Domain(format!(
            "label variance must be finite and >= 0, got {pool_label_var}"
        )));
    }
    if !(method_width >= 0.0 && method_width.is_finite()) {
        return Err(Error::Domain(format!(
            "width must be finite and >= 0, got {method_width}"
        )));
    }
    if method_width == 0.0 {
        return Ok(f64::INFINITY);
    }
    let z = two_sided_z(alpha)?;
    let ratio = 2.0 * z * pool_label_var.sqrt() / method_width;
    Ok(ratio * ratio)
}

/// Context shared by every report of one run.
#[derive(Debug, Clone, Copy)]
pub struct RunContext {
    pub alpha: f64,
    pub seed: u64,
    /// Label variance of the population (or pool) for effective sample sizes.
    pub label_variance: f64,
}

pub fn summarize(
    method: &str,
    n: usize,
    outcomes: &[TrialOutcome],
    classical_mean_width: f64,
    ctx: &RunContext,
) -> Result<TrialReport> {
    if outcomes.is_empty() {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let trials = outcomes.len();
    let covered = outcomes.iter().filter(|o| o.covered).count();
    let mut widths: Vec<f64> = outcomes.iter().map(|o| o.width).collect();
    let mean_width = widths.iter().sum::<f64>() / trials as f64;
    widths.sort_by(f64::total_cmp);
    Ok(TrialReport {
        method: method.to_string(),
        n,
        coverage: covered as f64 / trials as f64,
        mean_width,
        width_q16: interpolated_quantile(&widths, 0.16),
        width_q84: interpolated_quantile(&widths, 0.84),
        percent_reduction: percent_reduction(classical_mean_width, mean_width)?,
        effective_sample_size: effective_sample_size(mean_width, ctx.label_variance, ctx.alpha)?,
        trials,
        alpha: ctx.alpha,
        seed: ctx.seed,
    })
}

pub(crate) fn mean_width(outcomes: &[TrialOutcome]) -> f64 {
    outcomes.iter().map(|o| o.width).sum::<f64>() / outcomes.len() as f64
}
