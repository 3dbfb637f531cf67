//! Per-stratum tuning of the autorater weight and allocation of the labeled
//! budget across strata.

use crate::error::{Error, Result};
use crate::model::{validate_weights, StratumData, WEIGHT_SUM_TOL};
use crate::sampling::integer_allocation;
use crate::stats::{sample_cov, sample_mean_var};

/// Below this prediction variance a stratum is treated as uninformative and
/// its weight falls back to zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Floor applied to heuristic spreads so every stratum keeps a positive rate.
pub const HEURISTIC_SIGMA_FLOOR: f64 = 1e-6;

/// Variance-minimizing autorater weight for the mean loss in one stratum.
///
/// Minimizes the plug-in variance `lambda^2 var(f~)/N + var(y - lambda f)/n`,
/// giving `cov(y, f) / (var(f) + (n/N) var(f~))`, the sample analogue of
/// `Cov(Y, f) / ((1 + n/N) Var(f))`. Returns 0 when the denominator is
/// below [`DEGENERATE_VARIANCE`].
pub fn tune_lambda_mean(stratum: &StratumData) -> Result<f64> {
    let n = stratum.n();
    let big_n = stratum.N();
    if n < 2 {
        return Err(Error::Data(format!(
            "lambda tuning needs at least 2 labeled points, got {n}"
        )));
    }
    if big_n < 1 {
        return Err(Error::Data(
            "lambda tuning needs at least 1 unlabeled prediction".into(),
        ));
    }
    let y = stratum.labels();
    let f = stratum.labeled_predictions();
    let cov = sample_cov(&y, &f)?;
    let (_, var_labeled) = sample_mean_var(&f)?;
    let (_, var_unlabeled) = sample_mean_var(&stratum.unlabeled_f)?;
    let denom = var_labeled + (n as f64 / big_n as f64) * var_unlabeled;
    if denom < DEGENERATE_VARIANCE {
        return Ok(0.0);
    }
    Ok(cov / denom)
}

/// Labeled and unlabeled budget fractions and their integer realizations.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub rho: Vec<f64>,
    pub rho_tilde: Vec<f64>,
    pub n_k: Vec<usize>,
    pub N_k: Vec<usize>,
}

impl AllocationPlan {
    /// Rounds the fractions to integer sizes summing to `n` and `big_n`.
    pub fn from_rates(rho: Vec<f64>, rho_tilde: Vec<f64>, n: usize, big_n: usize) -> Result<Self> {
        if rho.len() != rho_tilde.len() {
            return Err(Error::Config(format!(
                "rho has {} entries but rho_tilde has {}",
                rho.len(),
                rho_tilde.len()
            )));
        }
        let n_k = integer_allocation(&rho, n)?;
        #[allow(non_snake_case)]
        let N_k = integer_allocation(&rho_tilde, big_n)?;
        Ok(Self {
            rho,
            rho_tilde,
            n_k,
            N_k,
        })
    }

    /// Natural rates: both budgets split in proportion to the stratum weights.
    pub fn proportional(weights: &[f64], n: usize, big_n: usize) -> Result<Self> {
        Self::from_rates(weights.to_vec(), weights.to_vec(), n, big_n)
    }

    pub fn k(&self) -> usize {
        self.rho.len()
    }
}

/// True per-stratum spreads used by the oracle allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumOracle {
    /// Standard deviation of `Y - lambda f` within the stratum.
    pub sigma_delta: f64,
    /// Standard deviation of `lambda f` within the stratum.
    pub sigma_f: f64,
}

/// Oracle-optimal sampling rates `rho_k ∝ w_k sigma_k` for both budgets.
///
/// A family whose spreads are all zero falls back to the weights.
pub fn optimal_rho(oracles: &[StratumOracle], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if oracles.len() != weights.len() {
        return Err(Error::Domain(format!(
            "{} oracles for {} weights",
            oracles.len(),
            weights.len()
        )));
    }
    validate_weights(weights).map_err(|e| Error::Domain(e.to_string()))?;
    for (k, o) in oracles.iter().enumerate() {
        for (name, s) in [("sigma_delta", o.sigma_delta), ("sigma_f", o.sigma_f)] {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::Domain(format!("stratum {k}: {name} = {s} must be finite and >= 0")));
            }
        }
    }
    let deltas: Vec<f64> = oracles.iter().map(|o| o.sigma_delta).collect();
    let fs: Vec<f64> = oracles.iter().map(|o| o.sigma_f).collect();
    Ok((neyman_rates(&deltas, weights), neyman_rates(&fs, weights)))
}

fn neyman_rates(sigmas: &[f64], weights: &[f64]) -> Vec<f64> {
    let total: f64 = sigmas.iter().zip(weights).map(|(s, w)| s * w).sum();
    if total <= 0.0 {
        return weights.to_vec();
    }
    sigmas.iter().zip(weights).map(|(s, w)| w * s / total).collect()
}

/// Confidence-based estimate of the residual spread `sd(Y - lambda f)` in a stratum.
///
/// `confidences[i][j]` is the autorater's probability of `label_set[j]` for
/// unlabeled item `i`.
pub fn heuristic_sigma(
    unlabeled_f: &[f64],
    confidences: &[Vec<f64>],
    label_set: &[f64],
    lambda: f64,
) -> Result<f64> {
    if unlabeled_f.len() < 2 {
        return Err(Error::Data(format!(
            "heuristic spread needs at least 2 unlabeled predictions, got {}",
            unlabeled_f.len()
        )));
    }
    if confidences.len() != unlabeled_f.len() {
        return Err(Error::Data(format!(
            "{} confidence rows for {} predictions",
            confidences.len(),
            unlabeled_f.len()
        )));
    }
    for (i, row) in confidences.iter().enumerate() {
        if row.len() != label_set.len() {
            return Err(Error::Data(format!(
                "confidence row {i} has {} entries for {} labels",
                row.len(),
                label_set.len()
            )));
        }
        if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Data(format!("confidence row {i} has a negative or non-finite entry")));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("confidence row {i} sums to {total}, not 1")));
        }
    }
    let m = unlabeled_f.len() as f64;
    let residual_mean = unlabeled_f
        .iter()
        .zip(confidences)
        .map(|(f, row)| {
            row.iter()
                .zip(label_set)
                .map(|(c, y)| c * (y - lambda * f))
                .sum::<f64>()
        })
        .sum::<f64>()
        / m;
    let residual_var = unlabeled_f
        .iter()
        .zip(confidences)
        .map(|(f, row)| {
            row.iter()
                .zip(label_set)
                .map(|(c, y)| {
                    let d = y - lambda * f - residual_mean;
                    c * d * d
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        / m;
    Ok(residual_var.max(0.0).sqrt())
}

/// Binary-label shortcut: `sqrt(mean(f(1 - f)) + var(f))`.
///
/// Equal to [`heuristic_sigma`] with labels `{0, 1}`, `c(1|x) = f` and
/// `lambda = 0`, i.e. the within-stratum label spread `sd(Y)` under a
/// calibrated autorater.
pub fn heuristic_sigma_binary(unlabeled_f: &[f64]) -> Result<f64> {
    if unlabeled_f.len() < 2 {
        return Err(Error::Data(format!(
            "heuristic spread needs at least 2 unlabeled predictions, got {}",
            unlabeled_f.len()
        )));
    }
    if let Some((i, f)) = unlabeled_f
        .iter()
        .enumerate()
        .find(|(_, f)| !(0.0..=1.0).contains(*f))
    {
        return Err(Error::Data(format!("prediction {i} = {f} is not a probability")));
    }
    let m = unlabeled_f.len() as f64;
    let bernoulli = unlabeled_f.iter().map(|f| f * (1.0 - f)).sum::<f64>() / m;
    let (_, spread) = sample_mean_var(unlabeled_f)?;
    Ok((bernoulli + spread).sqrt())
}

/// Unlabeled autorater output for one stratum, for heuristic allocation.
#[derive(Debug, Clone, Copy)]
pub struct StratumScores<'a> {
    pub predictions: &'a [f64],
    /// Per-item confidence rows over the label set; `None` means the
    /// predictions are themselves binary probabilities.
    pub confidences: Option<&'a [Vec<f64>]>,
}

/// Heuristic rates `rho_k ∝ w_k sigma_k` from autorater confidences.
///
/// Strata with explicit confidence tables use [`heuristic_sigma`] at
/// `lambda = 1`; binary strata use [`heuristic_sigma_binary`].
pub fn heuristic_rho(strata: &[StratumScores<'_>], weights: &[f64], label_set: &[f64]) -> Result<Vec<f64>> {
    if strata.len() != weights.len() {
        return Err(Error::Data(format!(
            "{} strata for {} weights",
            strata.len(),
            weights.len()
        )));
    }
    validate_weights(weights)?;
    let sigmas = strata
        .iter()
        .enumerate()
        .map(|(k, s)| {
            match s.confidences {
                Some(rows) => heuristic_sigma(s.predictions, rows, label_set, 1.0),
                None => heuristic_sigma_binary(s.predictions),
            }
            .map_err(|e| Error::Data(format!("stratum {k}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(heuristic_rates(&sigmas, weights))
}

/// Normalizes `w_k max(sigma_k, floor)` into rates.
pub fn heuristic_rates(sigmas: &[f64], weights: &[f64]) -> Vec<f64> {
    let scores: Vec<f64> = sigmas
        .iter()
        .zip(weights)
        .map(|(s, w)| w * s.max(HEURISTIC_SIGMA_FLOOR))
        .collect();
    let total: f64 = scores.iter().sum();
    let rho: Vec<f64> = scores.iter().map(|s| s / total).collect();
    debug_assert!((rho.iter().sum::<f64>() - 1.0).abs() <= WEIGHT_SUM_TOL * 10.0);
    rho
}
