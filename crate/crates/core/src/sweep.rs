//! Repeated subsampling of a labeled evaluation pool.
//!
//! Each trial reveals the labels of `n` pool rows and hides the labels of the
//! rest, which then serve as the unlabeled autorater sample. The full-pool
//! label mean stands in for the true mean when scoring coverage.

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result, SampleKind};
use crate::estimators::{estimate, StratumMoments};
use crate::io::EvaluationCsvRow;
use crate::model::{
    Allocation, EstimatorConfig, LabeledPoint, Method, StratifiedDataset, StratumData, MIN_STRATUM_SIZE,
};
use crate::report::{mean_width, summarize, RunContext, TrialOutcome, TrialReport};
use crate::sampling::{integer_allocation, quantile_stratify, stratum_weights_from_ids, substream, StreamPurpose, WHOLE_POOL};
use crate::stats::{sample_mean_var, two_sided_z};
use crate::tuning::{heuristic_rho, optimal_rho, StratumOracle, StratumScores, DEGENERATE_VARIANCE};

/// Default number of strata for real-data sweeps.
pub const DEFAULT_SWEEP_K: usize = 10;
/// Default significance level for real-data sweeps.
pub const DEFAULT_SWEEP_ALPHA: f64 = 0.05;

/// Evaluation rows with autorater predictions; labeled rows can be revealed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationPool {
    rows: Vec<EvaluationCsvRow>,
    binary: bool,
}

impl EvaluationPool {
    pub fn new(rows: Vec<EvaluationCsvRow>, binary: bool) -> Result<Self> {
        if rows.iter().all(|r| r.label.is_none()) {
            return Err(Error::Data("pool has no labeled rows".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            let finite = r.prediction.is_finite()
                && r.label.is_none_or(f64::is_finite)
                && r.confidence.is_none_or(f64::is_finite);
            if !finite {
                return Err(Error::Data(format!("pool row {} is not finite", i + 1)));
            }
            if binary {
                let label_ok = r.label.is_none_or(|y| y == 0.0 || y == 1.0);
                if !label_ok || !(0.0..=1.0).contains(&r.prediction) {
                    return Err(Error::Data(format!("pool row {} violates binary mode", i + 1)));
                }
            }
        }
        let with_ids = rows.iter().filter(|r| r.stratum.is_some()).count();
        if with_ids != 0 && with_ids != rows.len() {
            return Err(Error::Data(
                "stratum column must be filled for every row or for none".into(),
            ));
        }
        Ok(Self { rows, binary })
    }

    pub fn rows(&self) -> &[EvaluationCsvRow] {
        &self.rows
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn labeled_count(&self) -> usize {
        self.rows.iter().filter(|r| r.label.is_some()).count()
    }

    fn labels(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.label).collect()
    }

    /// Mean and population variance of the pool labels.
    pub fn label_moments(&self) -> (f64, f64) {
        sample_mean_var(&self.labels()).expect("pool has labeled rows")
    }

    fn has_confidences(&self) -> bool {
        self.rows.iter().all(|r| r.confidence.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Requested number of quantile strata (ignored when rows carry stratum ids).
    pub k: usize,
    pub methods: Vec<EstimatorConfig>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(methods: Vec<EstimatorConfig>, n_grid: Vec<usize>) -> Self {
        Self {
            k: DEFAULT_SWEEP_K,
            methods,
            n_grid,
            trials: crate::simulation::DEFAULT_TRIALS,
            alpha: DEFAULT_SWEEP_ALPHA,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub reports: Vec<TrialReport>,
    /// Allocation clipping events, one per (method, n, stratum).
    pub warnings: Vec<String>,
    /// Stratum weights of the fixed stratification.
    pub weights: Vec<f64>,
}

#[derive(Debug, Default)]
struct PoolStratum {
    labeled: Vec<LabeledPoint>,
    unlabeled_only: Vec<f64>,
    predictions: Vec<f64>,
    confidences: Vec<Vec<f64>>,
}

struct PreparedPool {
    strata: Vec<PoolStratum>,
    weights: Vec<f64>,
    labeled: Vec<LabeledPoint>,
    unlabeled_only: Vec<f64>,
}

fn prepare(pool: &EvaluationPool, k: usize) -> Result<PreparedPool> {
    let predictions: Vec<f64> = pool.rows.iter().map(|r| r.prediction).collect();
    let (ids, weights): (Vec<usize>, Vec<f64>) = if pool.rows.iter().all(|r| r.stratum.is_some()) {
        let ids: Vec<usize> = pool.rows.iter().map(|r| r.stratum.unwrap()).collect();
        let weights = stratum_weights_from_ids(&ids)?;
        (ids, weights)
    } else {
        let s = quantile_stratify(&predictions, k)?;
        (predictions.iter().map(|p| s.stratum_of(*p)).collect(), s.weights().to_vec())
    };
    let mut strata: Vec<PoolStratum> = (0..weights.len()).map(|_| PoolStratum::default()).collect();
    let mut labeled = Vec::new();
    let mut unlabeled_only = Vec::new();
    for (row, &id) in pool.rows.iter().zip(&ids) {
        let s = &mut strata[id];
        s.predictions.push(row.prediction);
        if let Some(c) = row.confidence {
            s.confidences.push(vec![1.0 - c, c]);
        }
        match row.label {
            Some(y) => {
                let p = LabeledPoint::new(y, row.prediction);
                s.labeled.push(p);
                labeled.push(p);
            }
            None => {
                s.unlabeled_only.push(row.prediction);
                unlabeled_only.push(row.prediction);
            }
        }
    }
    Ok(PreparedPool {
        strata,
        weights,
        labeled,
        unlabeled_only,
    })
}

fn allocation_rates(pool: &EvaluationPool, prepared: &PreparedPool, allocation: Allocation) -> Result<Vec<f64>> {
    match allocation {
        Allocation::Proportional => Ok(prepared.weights.clone()),
        Allocation::Heuristic => {
            let with_conf = pool.has_confidences();
            if !with_conf && !pool.binary {
                return Err(Error::Config(
                    "alloc: heuristic allocation needs a binary pool or a confidence column".into(),
                ));
            }
            let scores: Vec<StratumScores<'_>> = prepared
                .strata
                .iter()
                .map(|s| StratumScores {
                    predictions: &s.predictions,
                    confidences: with_conf.then_some(s.confidences.as_slice()),
                })
                .collect();
            heuristic_rho(&scores, &prepared.weights, &[0.0, 1.0])
        }
        Allocation::OptimalOracle => {
            // The pool's own labels give the per-stratum spreads.
            let oracles = prepared
                .strata
                .iter()
                .map(|s| {
                    let y: Vec<f64> = s.labeled.iter().map(|p| p.y).collect();
                    let f: Vec<f64> = s.labeled.iter().map(|p| p.f).collect();
                    if y.is_empty() {
                        return Ok(StratumOracle { sigma_delta: 0.0, sigma_f: 0.0 });
                    }
                    let m = StratumMoments {
                        weight: 0.0,
                        var_y: sample_mean_var(&y)?.1,
                        var_f: sample_mean_var(&f)?.1,
                        cov_yf: crate::stats::sample_cov(&y, &f)?,
                    };
                    let lambda = if m.var_f < DEGENERATE_VARIANCE { 0.0 } else { m.cov_yf / m.var_f };
                    Ok(StratumOracle {
                        sigma_delta: m.residual_variance(lambda).max(0.0).sqrt(),
                        sigma_f: lambda.abs() * m.var_f.sqrt(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(optimal_rho(&oracles, &prepared.weights)?.0)
        }
    }
}

/// Per-stratum labeled sizes for a stratified method, clipped to what each
/// stratum can supply while leaving 2 unlabeled rows.
fn stratified_sizes(
    prepared: &PreparedPool,
    rho: &[f64],
    n: usize,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<Vec<usize>> {
    let mut sizes = integer_allocation(rho, n)?;
    for (k, (size, s)) in sizes.iter_mut().zip(&prepared.strata).enumerate() {
        let total = s.labeled.len() + s.unlabeled_only.len();
        let cap = s.labeled.len().min(total.saturating_sub(MIN_STRATUM_SIZE));
        if cap < MIN_STRATUM_SIZE {
            return Err(Error::InsufficientData {
                stratum: k,
                kind: SampleKind::Labeled,
                have: cap,
                minimum: MIN_STRATUM_SIZE,
            });
        }
        if *size > cap {
            warnings.push(format!(
                "{label} at n = {n}: stratum {k} allocation {size} clipped to {cap} available rows"
            ));
            *size = cap;
        }
    }
    Ok(sizes)
}

fn simple_random_trial(prepared: &PreparedPool, n: usize, seed: u64, trial: u64, with_unlabeled: bool) -> Result<StratifiedDataset> {
    let mut rng = substream(seed, trial, WHOLE_POOL, StreamPurpose::Selection);
    let chosen = index::sample(&mut rng, prepared.labeled.len(), n);
    let mut picked = vec![false; prepared.labeled.len()];
    for i in chosen.iter() {
        picked[i] = true;
    }
    let labeled: Vec<LabeledPoint> = chosen.iter().map(|i| prepared.labeled[i]).collect();
    let unlabeled: Vec<f64> = if with_unlabeled {
        prepared
            .labeled
            .iter()
            .zip(&picked)
            .filter(|(_, p)| !**p)
            .map(|(pt, _)| pt.f)
            .chain(prepared.unlabeled_only.iter().copied())
            .collect()
    } else {
        Vec::new()
    };
    StratifiedDataset::single(labeled, unlabeled, false)
}

fn stratified_trial(prepared: &PreparedPool, sizes: &[usize], seed: u64, trial: u64) -> Result<StratifiedDataset> {
    let strata = prepared
        .strata
        .iter()
        .zip(sizes)
        .zip(&prepared.weights)
        .enumerate()
        .map(|(k, ((s, &n_k), &w))| {
            let mut rng = substream(seed, trial, k as u64, StreamPurpose::Selection);
            let chosen = index::sample(&mut rng, s.labeled.len(), n_k);
            let mut picked = vec![false; s.labeled.len()];
            for i in chosen.iter() {
                picked[i] = true;
            }
            let labeled = chosen.iter().map(|i| s.labeled[i]).collect();
            let unlabeled = s
                .labeled
                .iter()
                .zip(&picked)
                .filter(|(_, p)| !**p)
                .map(|(pt, _)| pt.f)
                .chain(s.unlabeled_only.iter().copied())
                .collect();
            StratumData::new(labeled, unlabeled, w)
        })
        .collect();
    StratifiedDataset::new(strata, false)
}

enum Design {
    Simple,
    Stratified(Vec<usize>),
}

fn run_design(
    prepared: &PreparedPool,
    design: &Design,
    config: &EstimatorConfig,
    n: usize,
    trials: usize,
    seed: u64,
    truth: f64,
) -> Result<Vec<TrialOutcome>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let data = match design {
                Design::Simple => {
                    simple_random_trial(prepared, n, seed, trial, config.method != Method::Classical)?
                }
                Design::Stratified(sizes) => stratified_trial(prepared, sizes, seed, trial)?,
            };
            let ci = estimate(&data, config)?;
            Ok(TrialOutcome {
                theta_hat: ci.theta_hat,
                width: ci.width(),
                covered: ci.contains(truth),
            })
        })
        .collect()
}

/// Runs every method over the budget grid on subsamples of `pool`.
///
/// Classical and PPI++ reveal a simple random sample of `n` labeled rows;
/// stratified methods reveal `n_k` rows per stratum following their
/// allocation. Reports are grouped by `n`, then in method order.
pub fn run_real_data_sweep(pool: &EvaluationPool, config: &SweepConfig) -> Result<SweepOutcome> {
    if config.trials == 0 {
        return Err(Error::Config("trials: must be at least 1".into()));
    }
    if config.k == 0 {
        return Err(Error::Config("K: must be at least 1".into()));
    }
    two_sided_z(config.alpha).map_err(|_| Error::Config(format!("alpha: {} not in (0, 1)", config.alpha)))?;
    let max_n = *config
        .n_grid
        .iter()
        .max()
        .ok_or_else(|| Error::Config("n: grid is empty".into()))?;
    let available = pool.labeled_count();
    if available < max_n || pool.rows.len() < max_n + MIN_STRATUM_SIZE {
        return Err(Error::Config(format!(
            "n: largest budget {max_n} needs a pool with at least {max_n} labeled rows and {} rows in total; pool has {available} labeled of {}",
            max_n + MIN_STRATUM_SIZE,
            pool.rows.len()
        )));
    }
    if let Some(n) = config.n_grid.iter().find(|n| **n < MIN_STRATUM_SIZE) {
        return Err(Error::Config(format!("n: budget {n} is below 2")));
    }

    let prepared = prepare(pool, config.k)?;
    let (truth, label_variance) = pool.label_moments();
    let ctx = RunContext {
        alpha: config.alpha,
        seed: config.seed,
        label_variance,
    };
    let mut rates = Vec::with_capacity(config.methods.len());
    for m in &config.methods {
        m.validate()?;
        rates.push(match m.method {
            Method::StratPpi => Some(allocation_rates(pool, &prepared, m.allocation)?),
            _ => None,
        });
    }

    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    for &n in &config.n_grid {
        let classical = EstimatorConfig::new(Method::Classical, config.alpha);
        let reference = run_design(&prepared, &Design::Simple, &classical, n, config.trials, config.seed, truth)?;
        let reference_width = mean_width(&reference);
        for (m, rho) in config.methods.iter().zip(&rates) {
            let mut m = m.clone();
            m.alpha = config.alpha;
            let label = m.label();
            let outcomes = match (m.method, rho) {
                (Method::Classical, _) => reference.clone(),
                (Method::StratPpi, Some(rho)) => {
                    let sizes = stratified_sizes(&prepared, rho, n, &label, &mut warnings)?;
                    run_design(&prepared, &Design::Stratified(sizes), &m, n, config.trials, config.seed, truth)?
                }
                _ => run_design(&prepared, &Design::Simple, &m, n, config.trials, config.seed, truth)?,
            };
            reports.push(summarize(&label, n, &outcomes, reference_width, &ctx)?);
        }
    }
    Ok(SweepOutcome {
        reports,
        warnings,
        weights: prepared.weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_pool(size: usize, binary: bool) -> EvaluationPool {
        let rows = (0..size)
            .map(|i| {
                let f = (i as f64 + 0.5) / size as f64;
                let y = if (i * 7919) % 100 < (f * 100.0) as usize { 1.0 } else { 0.0 };
                EvaluationCsvRow { label: Some(y), prediction: f, confidence: None, stratum: None }
            })
            .collect();
        EvaluationPool::new(rows, binary).unwrap()
    }

    fn methods() -> Vec<EstimatorConfig> {
        vec![
            EstimatorConfig::new(Method::Classical, 0.05),
            EstimatorConfig::new(Method::PpiPlusPlus, 0.05),
            EstimatorConfig::new(Method::StratPpi, 0.05),
            EstimatorConfig::new(Method::StratPpi, 0.05).with_allocation(Allocation::Heuristic),
            EstimatorConfig::new(Method::StratPpi, 0.05).with_allocation(Allocation::OptimalOracle),
        ]
    }

    #[test]
    fn sweep_reports_every_method_and_budget() {
        let pool = toy_pool(2000, true);
        let mut cfg = SweepConfig::new(methods(), vec![100, 200]);
        cfg.trials = 30;
        cfg.k = 5;
        let out = run_real_data_sweep(&pool, &cfg).unwrap();
        assert_eq!(out.reports.len(), 10);
        assert_eq!(out.weights.len(), 5);
        for r in out.reports.iter().filter(|r| r.method == "classical") {
            assert_eq!(r.percent_reduction, 0.0);
        }
        let again = run_real_data_sweep(&pool, &cfg).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn heuristic_needs_binary_or_confidence() {
        let pool = toy_pool(500, false);
        let mut cfg = SweepConfig::new(
            vec![EstimatorConfig::new(Method::StratPpi, 0.05).with_allocation(Allocation::Heuristic)],
            vec![50],
        );
        cfg.trials = 3;
        assert!(matches!(run_real_data_sweep(&pool, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn pool_smaller_than_budget_is_a_config_error() {
        let pool = toy_pool(100, true);
        let cfg = SweepConfig::new(methods(), vec![150]);
        assert!(matches!(run_real_data_sweep(&pool, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn stratified_trials_never_repeat_rows() {
        let pool = toy_pool(1000, true);
        let prepared = prepare(&pool, 4).unwrap();
        let data = stratified_trial(&prepared, &[30, 30, 30, 30], 1, 2).unwrap();
        for (s, src) in data.strata().iter().zip(&prepared.strata) {
            // Labeled plus unlabeled recover the stratum exactly once.
            let mut seen: Vec<f64> = s.labeled.iter().map(|p| p.f).chain(s.unlabeled_f.iter().copied()).collect();
            let mut all = src.predictions.clone();
            seen.sort_by(f64::total_cmp);
            all.sort_by(f64::total_cmp);
            assert_eq!(seen, all);
        }
    }

    #[test]
    fn exhausted_stratum_is_clipped_with_warning() {
        let mut rows: Vec<EvaluationCsvRow> = (0..40)
            .map(|i| EvaluationCsvRow { label: Some((i % 2) as f64), prediction: 0.5, confidence: None, stratum: Some(0) })
            .collect();
        rows.extend((0..400).map(|i| EvaluationCsvRow {
            label: Some((i % 2) as f64),
            prediction: 0.02,
            confidence: None,
            stratum: Some(1),
        }));
        let pool = EvaluationPool::new(rows, true).unwrap();
        let mut cfg = SweepConfig::new(
            vec![EstimatorConfig::new(Method::StratPpi, 0.05).with_allocation(Allocation::Heuristic)],
            vec![200],
        );
        cfg.trials = 5;
        // The small stratum looks far noisier to the autorater, so the
        // heuristic asks it for more rows than it holds.
        let out = run_real_data_sweep(&pool, &cfg).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("stratum 0"));
    }
}
