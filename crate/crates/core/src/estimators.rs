//! Point estimates and confidence intervals: classical, PPI++ and stratified
//! prediction-powered inference.
//!
//! The stratified estimator minimizes `sum_k w_k L_k(theta)` where each
//! per-stratum loss is the rectified prediction-powered loss with its own
//! weight `lambda_k`. Its variance is the sandwich `A^-1 B A^-1` assembled
//! stratum by stratum from gradient covariances, each divided by the sample
//! size it was estimated on.

use crate::error::{Error, Result, SampleKind};
use crate::model::{
    EstimatorConfig, IntervalResult, LambdaPolicy, LabeledPoint, Method, StratifiedDataset,
    StratumData, StratumDiagnostics, MIN_STRATUM_SIZE,
};
use crate::stats::{sample_mean, sample_mean_var, two_sided_z};
use crate::tuning::tune_lambda_mean;

/// A twice-differentiable loss `l_theta(y)` defining the target parameter
/// `argmin E[l_theta(Y)]`.
pub trait LossModel: Sync {
    fn name(&self) -> &str;

    fn gradient(&self, theta: f64, y: f64) -> f64;

    fn hessian(&self, theta: f64, y: f64) -> f64;

    /// Minimizer of the stratified prediction-powered loss, when available
    /// in closed form.
    fn weighted_minimizer(&self, _data: &StratifiedDataset, _lambdas: &[f64]) -> Option<f64> {
        None
    }

    /// Variance-minimizing autorater weight for one stratum.
    fn tune_lambda(&self, _stratum: &StratumData) -> Result<f64> {
        Err(Error::Capability(format!(
            "loss '{}' has no lambda tuning rule",
            self.name()
        )))
    }
}

/// Squared-error loss `(y - theta)^2 / 2`, whose minimizer is the mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanLoss;

impl LossModel for MeanLoss {
    fn name(&self) -> &str {
        "mean"
    }

    fn gradient(&self, theta: f64, y: f64) -> f64 {
        theta - y
    }

    fn hessian(&self, _theta: f64, _y: f64) -> f64 {
        1.0
    }

    fn weighted_minimizer(&self, data: &StratifiedDataset, lambdas: &[f64]) -> Option<f64> {
        stratppi_point_estimate(data, lambdas).ok()
    }

    fn tune_lambda(&self, stratum: &StratumData) -> Result<f64> {
        tune_lambda_mean(stratum)
    }
}

/// Normal-theory interval from the labeled sample alone.
pub fn classical_mean_ci(labels: &[f64], alpha: f64) -> Result<IntervalResult> {
    if labels.len() < MIN_STRATUM_SIZE {
        return Err(Error::InsufficientData {
            stratum: 0,
            kind: SampleKind::Labeled,
            have: labels.len(),
            minimum: MIN_STRATUM_SIZE,
        });
    }
    if labels.iter().any(|y| !y.is_finite()) {
        return Err(Error::Data("labels must be finite".into()));
    }
    let z = two_sided_z(alpha)?;
    let (mean, var) = sample_mean_var(labels)?;
    let variance = var / labels.len() as f64;
    Ok(interval(mean, variance, z, Vec::new()))
}

/// Closed-form minimizer of the stratified loss for the mean:
/// `sum_k w_k [lambda_k mean(f~_k) + mean(y_k - lambda_k f_k)]`.
pub fn stratppi_point_estimate(data: &StratifiedDataset, lambdas: &[f64]) -> Result<f64> {
    if lambdas.len() != data.k() {
        return Err(Error::Config(format!(
            "{} lambdas for {} strata",
            lambdas.len(),
            data.k()
        )));
    }
    check_sizes(data, 1)?;
    let mut theta = 0.0;
    for (s, &lambda) in data.strata().iter().zip(lambdas) {
        let (rectifier, unlabeled) = stratum_means(s, lambda)?;
        theta += s.weight * (lambda * unlabeled + rectifier);
    }
    Ok(theta)
}

fn stratum_means(s: &StratumData, lambda: f64) -> Result<(f64, f64)> {
    let rectifier: Vec<f64> = s.labeled.iter().map(|p| p.y - lambda * p.f).collect();
    Ok((sample_mean(&rectifier)?, sample_mean(&s.unlabeled_f)?))
}

fn check_sizes(data: &StratifiedDataset, minimum: usize) -> Result<()> {
    for (k, s) in data.strata().iter().enumerate() {
        if s.n() < minimum {
            return Err(Error::InsufficientData {
                stratum: k,
                kind: SampleKind::Labeled,
                have: s.n(),
                minimum,
            });
        }
        if s.N() < minimum {
            return Err(Error::InsufficientData {
                stratum: k,
                kind: SampleKind::Unlabeled,
                have: s.N(),
                minimum,
            });
        }
    }
    Ok(())
}

/// Resolves the per-stratum weights for `config` under `loss`.
pub fn resolve_lambdas(
    data: &StratifiedDataset,
    config: &EstimatorConfig,
    loss: &dyn LossModel,
) -> Result<Vec<f64>> {
    let lambdas = match &config.lambda_policy {
        LambdaPolicy::Fixed(values) => LambdaPolicy::resolve_fixed(values, data.k())?,
        LambdaPolicy::Tuned => data
            .strata()
            .iter()
            .map(|s| loss.tune_lambda(s))
            .collect::<Result<Vec<f64>>>()?,
    };
    if config.clip_lambda && config.lambda_policy == LambdaPolicy::Tuned {
        return Ok(lambdas.into_iter().map(|l| l.clamp(0.0, 1.0)).collect());
    }
    Ok(lambdas)
}

/// Stratified prediction-powered interval for the mean.
pub fn stratppi_ci(data: &StratifiedDataset, config: &EstimatorConfig) -> Result<IntervalResult> {
    stratppi_ci_with_loss(data, config, &MeanLoss)
}

/// Stratified prediction-powered interval for an arbitrary loss.
///
/// The loss must provide a closed-form minimizer; tuned weights additionally
/// require a tuning rule.
pub fn stratppi_ci_with_loss(
    data: &StratifiedDataset,
    config: &EstimatorConfig,
    loss: &dyn LossModel,
) -> Result<IntervalResult> {
    config.validate()?;
    check_sizes(data, MIN_STRATUM_SIZE)?;
    let z = two_sided_z(config.alpha)?;
    let lambdas = resolve_lambdas(data, config, loss)?;
    let theta = loss.weighted_minimizer(data, &lambdas).ok_or_else(|| {
        Error::Capability(format!(
            "loss '{}' has no closed-form minimizer",
            loss.name()
        ))
    })?;

    // Curvature of the weighted loss at the estimate.
    let mut curvature = 0.0;
    for s in data.strata() {
        let h = s.labeled.iter().map(|p| loss.hessian(theta, p.y)).sum::<f64>() / s.n() as f64;
        curvature += s.weight * h;
    }
    if !(curvature.is_finite() && curvature > 0.0) {
        return Err(Error::Domain(format!(
            "estimated curvature {curvature} is not positive"
        )));
    }
    let inv_curvature = 1.0 / curvature;

    let mut variance = 0.0;
    let mut per_stratum = Vec::with_capacity(data.k());
    for (s, &lambda) in data.strata().iter().zip(&lambdas) {
        let unlabeled_grad: Vec<f64> = s.unlabeled_f.iter().map(|f| loss.gradient(theta, *f)).collect();
        let (_, var_unlabeled) = sample_mean_var(&unlabeled_grad)?;
        let v_f = lambda * lambda * var_unlabeled;
        let rectified_grad: Vec<f64> = s
            .labeled
            .iter()
            .map(|p| loss.gradient(theta, p.y) - lambda * loss.gradient(theta, p.f))
            .collect();
        let (_, v_delta) = sample_mean_var(&rectified_grad)?;
        variance += s.weight
            * s.weight
            * inv_curvature
            * inv_curvature
            * (v_f / s.N() as f64 + v_delta / s.n() as f64);

        let (rectifier_mean, unlabeled_mean) = stratum_means(s, lambda)?;
        per_stratum.push(StratumDiagnostics {
            lambda_hat: lambda,
            n_k: s.n(),
            N_k: s.N(),
            rectifier_mean,
            unlabeled_mean,
        });
    }
    if !variance.is_finite() {
        return Err(Error::Domain("estimated variance is not finite".into()));
    }
    Ok(interval(theta, variance, z, per_stratum))
}

/// PPI++ interval: the stratified estimator on a single stratum of weight 1.
pub fn ppi_pp_ci(
    labeled: &[LabeledPoint],
    unlabeled_f: &[f64],
    config: &EstimatorConfig,
) -> Result<IntervalResult> {
    let data = StratifiedDataset::single(labeled.to_vec(), unlabeled_f.to_vec(), false)?;
    stratppi_ci(&data, config)
}

/// Runs the estimator named by `config.method`.
///
/// Classical and PPI++ ignore the stratification and treat the pooled
/// samples as simple random samples.
pub fn estimate(data: &StratifiedDataset, config: &EstimatorConfig) -> Result<IntervalResult> {
    config.validate()?;
    match config.method {
        Method::Classical => {
            let labels: Vec<f64> = data.strata().iter().flat_map(|s| s.labels()).collect();
            classical_mean_ci(&labels, config.alpha)
        }
        Method::PpiPlusPlus => stratppi_ci(&data.pooled(), config),
        Method::StratPpi => stratppi_ci(data, config),
    }
}

fn interval(theta: f64, variance: f64, z: f64, per_stratum: Vec<StratumDiagnostics>) -> IntervalResult {
    let half = z * variance.max(0.0).sqrt();
    IntervalResult {
        theta_hat: theta,
        lower: theta - half,
        upper: theta + half,
        variance,
        per_stratum,
    }
}

/// Population moments of one stratum, for asymptotic variance calculations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumMoments {
    pub weight: f64,
    pub var_y: f64,
    pub var_f: f64,
    pub cov_yf: f64,
}

impl StratumMoments {
    /// `Var(Y - lambda f)`.
    pub fn residual_variance(&self, lambda: f64) -> f64 {
        self.var_y - 2.0 * lambda * self.cov_yf + lambda * lambda * self.var_f
    }
}

/// Trace of the asymptotic covariance of the stratified mean estimator,
/// scaled by `n`: `sum_k w_k^2 (r/rho~_k lambda_k^2 Var_k(f) + Var_k(Y - lambda_k f)/rho_k)`
/// where `r = n/N`.
pub fn stratified_asymptotic_variance(
    strata: &[StratumMoments],
    lambdas: &[f64],
    rho: &[f64],
    rho_tilde: &[f64],
    ratio: f64,
) -> f64 {
    strata
        .iter()
        .zip(lambdas)
        .zip(rho.iter().zip(rho_tilde))
        .map(|((m, l), (r, rt))| {
            m.weight * m.weight * (ratio / rt * l * l * m.var_f + m.residual_variance(*l) / r)
        })
        .sum()
}

/// Asymptotic variance of the unstratified PPI++ mean estimator, scaled by `n`.
pub fn ppi_asymptotic_variance(pooled: &StratumMoments, lambda: f64, ratio: f64) -> f64 {
    ratio * lambda * lambda * pooled.var_f + pooled.residual_variance(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StratumData;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pts(pairs: &[(f64, f64)]) -> Vec<LabeledPoint> {
        pairs.iter().map(|&(y, f)| LabeledPoint::new(y, f)).collect()
    }

    fn fixed(lambda: f64, alpha: f64) -> EstimatorConfig {
        EstimatorConfig::new(Method::StratPpi, alpha).with_lambda(LambdaPolicy::Fixed(vec![lambda]))
    }

    #[test]
    fn classical_alternating_labels() {
        let labels: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let ci = classical_mean_ci(&labels, 0.05).unwrap();
        assert_abs_diff_eq!(ci.theta_hat, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ci.width(), 2.0 * 1.959963984540054 * 0.05, epsilon = 1e-9);
    }

    #[test]
    fn classical_constant_labels_have_zero_width() {
        let ci = classical_mean_ci(&[2.5; 50], 0.3).unwrap();
        assert_eq!(ci.theta_hat, 2.5);
        assert_eq!(ci.width(), 0.0);
    }

    #[test]
    fn classical_width_scales_with_labels() {
        let labels = [0.3, 1.2, -0.7, 2.2, 0.9];
        let base = classical_mean_ci(&labels, 0.1).unwrap().width();
        let scaled: Vec<f64> = labels.iter().map(|y| -3.0 * y).collect();
        let w = classical_mean_ci(&scaled, 0.1).unwrap().width();
        assert_abs_diff_eq!(w, 3.0 * base, epsilon = 1e-12);
    }

    #[test]
    fn classical_needs_two_labels() {
        assert!(matches!(
            classical_mean_ci(&[1.0], 0.1),
            Err(Error::InsufficientData { minimum: 2, .. })
        ));
    }

    #[test]
    fn point_estimate_examples() {
        let d = StratifiedDataset::single(pts(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]), vec![0.0], false).unwrap();
        assert_eq!(stratppi_point_estimate(&d, &[0.0]).unwrap(), 2.0);

        let d = StratifiedDataset::single(pts(&[(1.0, 1.0), (2.0, 2.0)]), vec![3.0, 3.0], false).unwrap();
        assert_eq!(stratppi_point_estimate(&d, &[1.0]).unwrap(), 3.0);

        let d = StratifiedDataset::new(
            vec![
                StratumData::new(pts(&[(1.0, 0.0)]), vec![0.0, 0.0], 0.5),
                StratumData::new(pts(&[(0.0, 1.0)]), vec![1.0, 1.0], 0.5),
            ],
            false,
        )
        .unwrap();
        assert_eq!(stratppi_point_estimate(&d, &[1.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn point_estimate_needs_nonempty_strata() {
        let d = StratifiedDataset::single(vec![], vec![1.0], false).unwrap();
        assert!(matches!(
            stratppi_point_estimate(&d, &[0.0]),
            Err(Error::InsufficientData { stratum: 0, .. })
        ));
    }

    #[test]
    fn lambda_zero_is_classical() {
        let labeled = pts(&[(0.1, 0.3), (0.7, 0.2), (1.9, 1.1), (-0.4, 0.0)]);
        let d = StratifiedDataset::single(labeled.clone(), vec![0.5, 0.6, 0.9], false).unwrap();
        let s = stratppi_ci(&d, &fixed(0.0, 0.1)).unwrap();
        let labels: Vec<f64> = labeled.iter().map(|p| p.y).collect();
        let c = classical_mean_ci(&labels, 0.1).unwrap();
        assert_abs_diff_eq!(s.theta_hat, c.theta_hat, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lower, c.lower, epsilon = 1e-12);
        assert_abs_diff_eq!(s.upper, c.upper, epsilon = 1e-12);
        assert_abs_diff_eq!(s.variance, c.variance, epsilon = 1e-12);
    }

    #[test]
    fn constant_predictions_tune_to_classical() {
        let labeled = pts(&[(0.0, 0.4), (1.0, 0.4), (1.0, 0.4)]);
        let cfg = EstimatorConfig::new(Method::PpiPlusPlus, 0.05);
        let p = ppi_pp_ci(&labeled, &[0.4; 10], &cfg).unwrap();
        let c = classical_mean_ci(&[0.0, 1.0, 1.0], 0.05).unwrap();
        assert_eq!(p.per_stratum[0].lambda_hat, 0.0);
        assert_abs_diff_eq!(p.lower, c.lower, epsilon = 1e-12);
        assert_abs_diff_eq!(p.upper, c.upper, epsilon = 1e-12);
    }

    #[test]
    fn perfect_autorater_shrinks_interval() {
        let ys: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let labeled: Vec<LabeledPoint> = ys.iter().map(|&y| LabeledPoint::new(y, y)).collect();
        let unlabeled: Vec<f64> = (0..4000).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let cfg = EstimatorConfig::new(Method::PpiPlusPlus, 0.05);
        let p = ppi_pp_ci(&labeled, &unlabeled, &cfg).unwrap();
        let c = classical_mean_ci(&ys, 0.05).unwrap();
        assert!(p.width() < c.width());
        // Rectifier residuals are y(1 - lambda); variance formula by hand.
        let lambda = p.per_stratum[0].lambda_hat;
        let (_, var_y) = sample_mean_var(&ys).unwrap();
        let (_, var_u) = sample_mean_var(&unlabeled).unwrap();
        let expected = lambda * lambda * var_u / 4000.0 + (1.0 - lambda).powi(2) * var_y / 40.0;
        assert_abs_diff_eq!(p.variance, expected, epsilon = 1e-15);
    }

    #[test]
    fn insufficient_stratum_is_named() {
        let d = StratifiedDataset::new(
            vec![
                StratumData::new(pts(&[(1.0, 0.0), (0.0, 0.5)]), vec![0.0, 0.2], 0.5),
                StratumData::new(pts(&[(0.0, 1.0), (1.0, 0.9)]), vec![1.0], 0.5),
            ],
            false,
        )
        .unwrap();
        let err = stratppi_ci(&d, &EstimatorConfig::new(Method::StratPpi, 0.1)).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientData { stratum: 1, kind: SampleKind::Unlabeled, have: 1, minimum: 2 }
        ));
    }

    struct NoSolver;
    impl LossModel for NoSolver {
        fn name(&self) -> &str {
            "no-solver"
        }
        fn gradient(&self, theta: f64, y: f64) -> f64 {
            theta - y
        }
        fn hessian(&self, _: f64, _: f64) -> f64 {
            1.0
        }
    }

    #[test]
    fn loss_without_minimizer_is_rejected() {
        let d = StratifiedDataset::single(pts(&[(1.0, 0.0), (0.0, 0.5)]), vec![0.0, 0.2], false).unwrap();
        let err = stratppi_ci_with_loss(&d, &fixed(0.5, 0.1), &NoSolver).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
    }

    #[test]
    fn width_shrinks_as_alpha_grows() {
        let d = StratifiedDataset::single(
            pts(&[(0.2, 0.1), (0.9, 1.0), (0.4, 0.6), (1.3, 1.0)]),
            vec![0.2, 0.5, 0.9, 1.1],
            false,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for alpha in [0.01, 0.05, 0.1, 0.2, 0.5] {
            let w = stratppi_ci(&d, &EstimatorConfig::new(Method::StratPpi, alpha)).unwrap().width();
            assert!(w <= last);
            last = w;
        }
    }

    fn dataset_strategy() -> impl Strategy<Value = StratifiedDataset> {
        let stratum = (
            prop::collection::vec((-5f64..5.0, -5f64..5.0), 2..15),
            prop::collection::vec(-5f64..5.0, 2..30),
            0.1f64..1.0,
        );
        prop::collection::vec(stratum, 1..4).prop_map(|raw| {
            let total: f64 = raw.iter().map(|r| r.2).sum();
            let k = raw.len();
            let mut acc = 0.0;
            let strata = raw
                .into_iter()
                .enumerate()
                .map(|(i, (lab, unl, w))| {
                    let weight = if i + 1 == k { 1.0 - acc } else { w / total };
                    acc += weight;
                    StratumData::new(pts(&lab), unl, weight)
                })
                .collect();
            StratifiedDataset::new(strata, false).unwrap()
        })
    }

    proptest! {
        #[test]
        fn interval_is_symmetric(data in dataset_strategy(), alpha in 0.01f64..0.5) {
            let ci = stratppi_ci(&data, &EstimatorConfig::new(Method::StratPpi, alpha)).unwrap();
            prop_assert!(ci.lower <= ci.theta_hat && ci.theta_hat <= ci.upper);
            let tol = 1e-12 * ci.theta_hat.abs().max(1.0);
            prop_assert!(((ci.upper - ci.theta_hat) - (ci.theta_hat - ci.lower)).abs() <= tol);
            let z = two_sided_z(alpha).unwrap();
            prop_assert!((ci.width() - 2.0 * z * ci.variance.sqrt()).abs() <= tol);
        }

        #[test]
        fn lambda_zero_variance_ignores_unlabeled(data in dataset_strategy()) {
            let ci = stratppi_ci(&data, &fixed(0.0, 0.1)).unwrap();
            let expected: f64 = data
                .strata()
                .iter()
                .map(|s| s.weight * s.weight * sample_mean_var(&s.labels()).unwrap().1 / s.n() as f64)
                .sum();
            prop_assert!((ci.variance - expected).abs() <= 1e-12 * expected.max(1e-12));
        }

        #[test]
        fn affine_covariance_with_fixed_lambda(
            data in dataset_strategy(),
            a in prop_oneof![-3f64..-0.2, 0.2f64..3.0],
            b in -3f64..3.0,
            lambda in -1.5f64..1.5,
        ) {
            let cfg = fixed(lambda, 0.1);
            let base = stratppi_ci(&data, &cfg).unwrap();
            let mapped = StratifiedDataset::new(
                data.strata()
                    .iter()
                    .map(|s| StratumData::new(
                        s.labeled.iter().map(|p| LabeledPoint::new(a * p.y + b, a * p.f + b)).collect(),
                        s.unlabeled_f.iter().map(|f| a * f + b).collect(),
                        s.weight,
                    ))
                    .collect(),
                false,
            ).unwrap();
            let out = stratppi_ci(&mapped, &cfg).unwrap();
            let expect_theta = a * base.theta_hat + b;
            prop_assert!((out.theta_hat - expect_theta).abs() <= 1e-10 * expect_theta.abs().max(1.0) * 10.0);
            let expect_width = a.abs() * base.width();
            prop_assert!((out.width() - expect_width).abs() <= 1e-10 * expect_width.max(1e-10));
        }
    }
}
