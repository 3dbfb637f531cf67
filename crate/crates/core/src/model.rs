//! Domain types: labeled points, strata, stratified datasets, partitions of
//! the prediction axis, estimator configuration and interval results.

use crate::error::{Error, Result};

/// Tolerance for "weights sum to one".
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Minimum labeled and unlabeled sample size per stratum for interval estimation.
pub const MIN_STRATUM_SIZE: usize = 2;

/// A human label paired with the autorater prediction for the same item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub y: f64,
    pub f: f64,
}

impl LabeledPoint {
    pub fn new(y: f64, f: f64) -> Self {
        Self { y, f }
    }
}

/// Labeled and unlabeled samples drawn from one stratum, with its mass `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumData {
    pub labeled: Vec<LabeledPoint>,
    pub unlabeled_f: Vec<f64>,
    pub weight: f64,
}

impl StratumData {
    pub fn new(labeled: Vec<LabeledPoint>, unlabeled_f: Vec<f64>, weight: f64) -> Self {
        Self {
            labeled,
            unlabeled_f,
            weight,
        }
    }

    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    #[allow(non_snake_case)]
    pub fn N(&self) -> usize {
        self.unlabeled_f.len()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.labeled.iter().map(|p| p.y).collect()
    }

    pub fn labeled_predictions(&self) -> Vec<f64> {
        self.labeled.iter().map(|p| p.f).collect()
    }
}

/// A collection of strata whose weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedDataset {
    strata: Vec<StratumData>,
    binary: bool,
}

impl StratifiedDataset {
    /// Validates weights, finiteness and (in binary mode) the label/prediction ranges.
    pub fn new(strata: Vec<StratumData>, binary: bool) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::Data("a dataset needs at least one stratum".into()));
        }
        let weights: Vec<f64> = strata.iter().map(|s| s.weight).collect();
        validate_weights(&weights)?;
        for (k, s) in strata.iter().enumerate() {
            for (i, p) in s.labeled.iter().enumerate() {
                if !p.y.is_finite() || !p.f.is_finite() {
                    return Err(Error::Data(format!(
                        "stratum {k}: labeled point {i} is not finite"
                    )));
                }
                if binary && (!(p.y == 0.0 || p.y == 1.0) || !(0.0..=1.0).contains(&p.f)) {
                    return Err(Error::Data(format!(
                        "stratum {k}: labeled point {i} violates binary mode (y = {}, f = {})",
                        p.y, p.f
                    )));
                }
            }
            for (i, f) in s.unlabeled_f.iter().enumerate() {
                if !f.is_finite() {
                    return Err(Error::Data(format!(
                        "stratum {k}: unlabeled prediction {i} is not finite"
                    )));
                }
                if binary && !(0.0..=1.0).contains(f) {
                    return Err(Error::Data(format!(
                        "stratum {k}: unlabeled prediction {i} = {f} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { strata, binary })
    }

    /// A one-stratum dataset with weight 1.
    pub fn single(labeled: Vec<LabeledPoint>, unlabeled_f: Vec<f64>, binary: bool) -> Result<Self> {
        Self::new(vec![StratumData::new(labeled, unlabeled_f, 1.0)], binary)
    }

    pub fn strata(&self) -> &[StratumData] {
        &self.strata
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn k(&self) -> usize {
        self.strata.len()
    }

    pub fn n(&self) -> usize {
        self.strata.iter().map(StratumData::n).sum()
    }

    #[allow(non_snake_case)]
    pub fn N(&self) -> usize {
        self.strata.iter().map(StratumData::N).sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.strata.iter().map(|s| s.weight).collect()
    }

    /// Merges all strata into one, ignoring the stratification.
    pub fn pooled(&self) -> Self {
        let labeled = self
            .strata
            .iter()
            .flat_map(|s| s.labeled.iter().copied())
            .collect();
        let unlabeled = self
            .strata
            .iter()
            .flat_map(|s| s.unlabeled_f.iter().copied())
            .collect();
        Self {
            strata: vec![StratumData::new(labeled, unlabeled, 1.0)],
            binary: self.binary,
        }
    }
}

/// Checks that every weight is positive and finite and that they sum to one.
pub fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Data("weights must be non-empty".into()));
    }
    if let Some((k, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::Data(format!("weight {k} = {w} must be positive")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Data(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// A partition of the prediction axis into `K` cells by `K - 1` cut points.
///
/// Cell `k` holds predictions `x` with `boundaries[k-1] <= x < boundaries[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratification {
    boundaries: Vec<f64>,
    weights: Vec<f64>,
}

impl Stratification {
    pub fn new(boundaries: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != boundaries.len() + 1 {
            return Err(Error::Data(format!(
                "{} boundaries need {} weights, got {}",
                boundaries.len(),
                boundaries.len() + 1,
                weights.len()
            )));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::Data("boundaries must be finite".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("boundaries must be strictly increasing".into()));
        }
        validate_weights(&weights)?;
        Ok(Self {
            boundaries,
            weights,
        })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn stratum_of(&self, prediction: f64) -> usize {
        self.boundaries.partition_point(|b| *b <= prediction)
    }
}

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Labeled data only.
    Classical,
    /// Prediction-powered inference with a single tuned weight; the one-stratum case.
    PpiPlusPlus,
    /// Stratified prediction-powered inference.
    StratPpi,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Classical => "classical",
            Method::PpiPlusPlus => "ppi_pp",
            Method::StratPpi => "stratppi",
        }
    }
}

/// How the per-stratum autorater weights are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaPolicy {
    /// One value per stratum, or a single value broadcast to all strata.
    Fixed(Vec<f64>),
    /// Plug-in variance-minimizing weights.
    Tuned,
}

impl LambdaPolicy {
    pub fn resolve_fixed(values: &[f64], k: usize) -> Result<Vec<f64>> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("lambda: fixed value {v} is not finite")));
        }
        match values.len() {
            1 => Ok(vec![values[0]; k]),
            len if len == k => Ok(values.to_vec()),
            len => Err(Error::Config(format!(
                "lambda: {len} fixed values given for {k} strata"
            ))),
        }
    }
}

/// How the labeled budget is split across strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    /// `rho_k = w_k`.
    Proportional,
    /// Neyman-style allocation from the true per-stratum residual spread.
    OptimalOracle,
    /// Neyman-style allocation from autorater confidence scores.
    Heuristic,
}

impl Allocation {
    pub fn short_name(&self) -> &'static str {
        match self {
            Allocation::Proportional => "prop",
            Allocation::OptimalOracle => "opt",
            Allocation::Heuristic => "heur",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub method: Method,
    pub lambda_policy: LambdaPolicy,
    pub allocation: Allocation,
    pub alpha: f64,
    /// Clamp tuned weights to [0, 1]. Off by default.
    pub clip_lambda: bool,
}

impl EstimatorConfig {
    pub fn new(method: Method, alpha: f64) -> Self {
        Self {
            method,
            lambda_policy: LambdaPolicy::Tuned,
            allocation: Allocation::Proportional,
            alpha,
            clip_lambda: false,
        }
    }

    pub fn with_lambda(mut self, policy: LambdaPolicy) -> Self {
        self.lambda_policy = policy;
        self
    }

    pub fn with_allocation(mut self, allocation: Allocation) -> Self {
        self.allocation = allocation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let LambdaPolicy::Fixed(values) = &self.lambda_policy {
            if values.is_empty() {
                return Err(Error::Config("lambda: fixed policy needs a value".into()));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Config(format!("lambda: fixed value {v} is not finite")));
            }
        }
        Ok(())
    }

    /// Display name such as `stratppi-heur`.
    pub fn label(&self) -> String {
        match self.method {
            Method::StratPpi => format!("stratppi-{}", self.allocation.short_name()),
            m => m.name().to_string(),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct StratumDiagnostics {
    pub lambda_hat: f64,
    pub n_k: usize,
    pub N_k: usize,
    /// Mean of `y - lambda * f` over the labeled sample.
    pub rectifier_mean: f64,
    /// Mean of the unlabeled predictions.
    pub unlabeled_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalResult {
    pub theta_hat: f64,
    pub lower: f64,
    pub upper: f64,
    /// Estimated variance of `theta_hat` (already divided by sample sizes).
    pub variance: f64,
    pub per_stratum: Vec<StratumDiagnostics>,
}

impl IntervalResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}
