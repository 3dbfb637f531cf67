//! Synthetic two-population experiments with a known mean.
//!
//! Outcomes are `Y ~ N(0, 1)` in every stratum and the autorater reports
//! `f = Y + mu_k + sigma_k * eps` with `eps ~ N(0, 1)`, so the target mean is
//! exactly 0 and every per-stratum moment is known in closed form.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{estimate, StratumMoments};
use crate::model::{
    validate_weights, Allocation, EstimatorConfig, LabeledPoint, Method, StratifiedDataset, StratumData,
    MIN_STRATUM_SIZE,
};
use crate::report::{mean_width, summarize, RunContext, TrialOutcome, TrialReport};
use crate::sampling::{substream, StreamPurpose};
use crate::tuning::{optimal_rho, AllocationPlan, StratumOracle};

/// Default labeled budgets.
pub const DEFAULT_N_GRID: [usize; 5] = [100, 200, 300, 500, 1000];
/// Default unlabeled budget.
pub const DEFAULT_UNLABELED: usize = 10_000;
/// Default significance level for simulations.
pub const DEFAULT_SIM_ALPHA: f64 = 0.1;
/// Default number of trials.
pub const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub name: String,
    pub weights: Vec<f64>,
    /// Per-stratum autorater bias.
    pub mu: Vec<f64>,
    /// Per-stratum autorater noise.
    pub sigma: Vec<f64>,
    /// Total unlabeled sample size `N`.
    pub unlabeled: usize,
    pub n_grid: Vec<usize>,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SyntheticScenario {
    /// Two equal-mass strata with the given bias and noise, default budgets.
    pub fn two_strata(name: &str, mu: [f64; 2], sigma: [f64; 2]) -> Self {
        Self {
            name: name.to_string(),
            weights: vec![0.5, 0.5],
            mu: mu.to_vec(),
            sigma: sigma.to_vec(),
            unlabeled: DEFAULT_UNLABELED,
            n_grid: DEFAULT_N_GRID.to_vec(),
            alpha: DEFAULT_SIM_ALPHA,
            trials: DEFAULT_TRIALS,
            seed: 0,
        }
    }

    /// Same bias and noise in both strata.
    pub fn homogeneous() -> Self {
        Self::two_strata("homogeneous", [2.0, 2.0], [1.0, 1.0])
    }

    /// Opposite biases, equal noise.
    pub fn bias() -> Self {
        Self::two_strata("bias", [-2.0, 2.0], [1.0, 1.0])
    }

    /// Equal bias, very different noise.
    pub fn noise() -> Self {
        Self::two_strata("noise", [2.0, 2.0], [0.5, 4.0])
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// The estimand `E[Y]`.
    pub fn true_mean(&self) -> f64 {
        0.0
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::Config("weights: need at least one stratum".into()));
        }
        validate_weights(&self.weights).map_err(|e| Error::Config(format!("weights: {e}")))?;
        if self.mu.len() != k || self.sigma.len() != k {
            return Err(Error::Config(format!(
                "mu/sigma: expected {k} values each, got {} and {}",
                self.mu.len(),
                self.sigma.len()
            )));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("mu: values must be finite".into()));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("sigma: values must be finite and >= 0".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials: must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha: {} not in (0, 1)", self.alpha)));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n: grid is empty".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|n| **n < MIN_STRATUM_SIZE * k) {
            return Err(Error::Config(format!(
                "n: budget {n} is below {} (2 per stratum)",
                MIN_STRATUM_SIZE * k
            )));
        }
        if self.unlabeled < MIN_STRATUM_SIZE * k {
            return Err(Error::Config(format!(
                "N: unlabeled budget {} is below {}",
                self.unlabeled,
                MIN_STRATUM_SIZE * k
            )));
        }
        Ok(())
    }

    /// Exact per-stratum moments of `(Y, f)`.
    pub fn stratum_moments(&self) -> Vec<StratumMoments> {
        self.weights
            .iter()
            .zip(&self.sigma)
            .map(|(w, s)| StratumMoments {
                weight: *w,
                var_y: 1.0,
                var_f: 1.0 + s * s,
                cov_yf: 1.0,
            })
            .collect()
    }

    /// True residual spreads at the large-`N` optimal weight `Cov(Y, f)/Var(f)`.
    pub fn oracle(&self) -> Vec<StratumOracle> {
        self.stratum_moments()
            .iter()
            .map(|m| {
                let lambda = m.cov_yf / m.var_f;
                StratumOracle {
                    sigma_delta: m.residual_variance(lambda).max(0.0).sqrt(),
                    sigma_f: lambda.abs() * m.var_f.sqrt(),
                }
            })
            .collect()
    }

    /// Labeled/unlabeled split used by `config` at budget `n`.
    ///
    /// The unlabeled budget always follows the stratum weights.
    pub fn allocation(&self, config: &EstimatorConfig, n: usize) -> Result<AllocationPlan> {
        let uses_allocation = config.method == Method::StratPpi;
        match (uses_allocation, config.allocation) {
            (true, Allocation::OptimalOracle) => {
                let (rho, _) = optimal_rho(&self.oracle(), &self.weights)?;
                AllocationPlan::from_rates(rho, self.weights.clone(), n, self.unlabeled)
            }
            (true, Allocation::Heuristic) => Err(Error::Config(
                "alloc: heuristic allocation needs autorater confidences, which the synthetic generator does not produce".into(),
            )),
            _ => AllocationPlan::proportional(&self.weights, n, self.unlabeled),
        }
    }
}

/// Draws one trial's labeled and unlabeled samples.
///
/// Each stratum and sample role reads its own substream keyed by
/// `(seed, trial, stratum)`, so the draws do not depend on the order of
/// generation and larger budgets extend smaller ones.
pub fn generate_scenario_data(
    scenario: &SyntheticScenario,
    allocation: &AllocationPlan,
    trial: u64,
) -> Result<StratifiedDataset> {
    if allocation.k() != scenario.k() {
        return Err(Error::Config(format!(
            "allocation has {} strata, scenario has {}",
            allocation.k(),
            scenario.k()
        )));
    }
    let strata = (0..scenario.k())
        .map(|k| {
            let (mu, sigma) = (scenario.mu[k], scenario.sigma[k]);
            let draw = |rng: &mut rand_chacha::ChaCha12Rng| {
                let y: f64 = rng.sample(StandardNormal);
                let eps: f64 = rng.sample(StandardNormal);
                (y, y + mu + sigma * eps)
            };
            let mut rng = substream(scenario.seed, trial, k as u64, StreamPurpose::Labeled);
            let labeled = (0..allocation.n_k[k])
                .map(|_| {
                    let (y, f) = draw(&mut rng);
                    LabeledPoint::new(y, f)
                })
                .collect();
            let mut rng = substream(scenario.seed, trial, k as u64, StreamPurpose::Unlabeled);
            let unlabeled = (0..allocation.N_k[k]).map(|_| draw(&mut rng).1).collect();
            StratumData::new(labeled, unlabeled, scenario.weights[k])
        })
        .collect();
    StratifiedDataset::new(strata, false)
}

/// Runs every trial of one method at budget `n`, in trial order.
pub fn simulate_method(
    scenario: &SyntheticScenario,
    config: &EstimatorConfig,
    n: usize,
) -> Result<Vec<TrialOutcome>> {
    scenario.validate()?;
    config.validate()?;
    let plan = scenario.allocation(config, n)?;
    let truth = scenario.true_mean();
    (0..scenario.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let data = generate_scenario_data(scenario, &plan, trial)?;
            let ci = estimate(&data, config).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!(
                    "{} at n = {n}, trial {trial}: {msg}",
                    config.label()
                )),
                other => other,
            })?;
            Ok(TrialOutcome {
                theta_hat: ci.theta_hat,
                width: ci.width(),
                covered: ci.contains(truth),
            })
        })
        .collect()
}

/// Runs all methods over the scenario's budget grid.
///
/// Reports come out grouped by `n`, then in the order of `methods`. Percent
/// reductions are against classical inference on the same trials.
pub fn run_simulation(
    scenario: &SyntheticScenario,
    methods: &[EstimatorConfig],
) -> Result<Vec<TrialReport>> {
    scenario.validate()?;
    for m in methods {
        m.validate()?;
        scenario.allocation(m, scenario.n_grid[0])?;
    }
    let ctx = RunContext {
        alpha: scenario.alpha,
        seed: scenario.seed,
        label_variance: 1.0,
    };
    let mut reports = Vec::with_capacity(methods.len() * scenario.n_grid.len());
    for &n in &scenario.n_grid {
        let classical = EstimatorConfig::new(Method::Classical, scenario.alpha);
        let reference = simulate_method(scenario, &classical, n)?;
        let reference_width = mean_width(&reference);
        for m in methods {
            let mut config = m.clone();
            config.alpha = scenario.alpha;
            let outcomes = if config.method == Method::Classical {
                reference.clone()
            } else {
                simulate_method(scenario, &config, n)?
            };
            reports.push(summarize(&config.label(), n, &outcomes, reference_width, &ctx)?);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{sample_cov, sample_mean_var};

    fn small(mut s: SyntheticScenario) -> SyntheticScenario {
        s.trials = 40;
        s.n_grid = vec![40, 80];
        s.unlabeled = 2000;
        s.seed = 3;
        s
    }

    #[test]
    fn zero_bias_and_noise_reproduces_labels() {
        let s = SyntheticScenario::two_strata("exact", [0.0, 0.0], [0.0, 0.0]);
        let plan = AllocationPlan::proportional(&s.weights, 20, 50).unwrap();
        let data = generate_scenario_data(&s, &plan, 0).unwrap();
        for stratum in data.strata() {
            assert!(stratum.labeled.iter().all(|p| p.f == p.y));
        }
    }

    #[test]
    fn generator_moments_match_parameters() {
        let s = SyntheticScenario::homogeneous();
        let plan = AllocationPlan::proportional(&s.weights, 20_000, 20).unwrap();
        let data = generate_scenario_data(&s, &plan, 5).unwrap();
        for (k, stratum) in data.strata().iter().enumerate() {
            let m = stratum.n() as f64;
            let diffs: Vec<f64> = stratum.labeled.iter().map(|p| p.f - p.y).collect();
            let (mean, var) = sample_mean_var(&diffs).unwrap();
            let sigma = s.sigma[k];
            // Five standard errors of the sample mean and sample variance.
            assert!((mean - s.mu[k]).abs() <= 5.0 * sigma / m.sqrt());
            assert!((var - sigma * sigma).abs() <= 5.0 * sigma * sigma * (2.0 / m).sqrt());
            let y = stratum.labels();
            let f = stratum.labeled_predictions();
            assert!((sample_cov(&y, &f).unwrap() - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = SyntheticScenario::noise();
        let plan = AllocationPlan::proportional(&s.weights, 30, 100).unwrap();
        let a = generate_scenario_data(&s, &plan, 9).unwrap();
        let b = generate_scenario_data(&s, &plan, 9).unwrap();
        let c = generate_scenario_data(&s, &plan, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn oracle_allocation_favors_noisy_stratum() {
        let s = SyntheticScenario::noise();
        let cfg = EstimatorConfig::new(Method::StratPpi, 0.1).with_allocation(Allocation::OptimalOracle);
        let plan = s.allocation(&cfg, 500).unwrap();
        assert!(plan.n_k[1] > plan.n_k[0]);
        assert_eq!(plan.N_k, vec![5000, 5000]);
    }

    #[test]
    fn heuristic_allocation_is_rejected() {
        let s = small(SyntheticScenario::bias());
        let cfg = EstimatorConfig::new(Method::StratPpi, 0.1).with_allocation(Allocation::Heuristic);
        assert!(matches!(run_simulation(&s, &[cfg]), Err(Error::Config(_))));
    }

    #[test]
    fn simulation_is_reproducible_and_classical_has_zero_reduction() {
        let s = small(SyntheticScenario::bias());
        let methods = [
            EstimatorConfig::new(Method::Classical, 0.1),
            EstimatorConfig::new(Method::StratPpi, 0.1),
        ];
        let a = run_simulation(&s, &methods).unwrap();
        let b = run_simulation(&s, &methods).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        for r in a.iter().filter(|r| r.method == "classical") {
            assert_eq!(r.percent_reduction, 0.0);
        }
        for r in &a {
            assert!((0.0..=1.0).contains(&r.coverage));
            assert!(r.width_q16 <= r.width_q84);
        }
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = SyntheticScenario::bias();
        s.n_grid = vec![3];
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = SyntheticScenario::bias();
        s.mu = vec![1.0];
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = SyntheticScenario::bias();
        s.trials = 0;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }
}
