//! Point estimators of `delta = g(mu1) - g(mu0)`.
//!
//! The empirical estimator, augmented estimators `emp - mean((A - pi) b(W))`,
//! G-computation from a fully treatment-interacted working model, and
//! stratum calibration of an augmentation function.

use std::fmt;
use std::sync::Arc;

use crate::data::{SubjectRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::learners::{fit_glm_irls, fit_ols, CoefficientFit, OutcomeModel};
use crate::linalg::{self, Matrix};
use crate::link::{LinkKind, LinkSpec};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Zero,
    PluginBopt,
    RegressionBreg,
    Custom,
    Calibrated,
}

/// Per-stratum constants `c_1..c_K` added to an augmentation function.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub constants: Vec<f64>,
    /// `[controls, treated]` per stratum.
    pub counts: Vec<[usize; 2]>,
    pub warnings: Vec<String>,
}

impl CalibrationTable {
    pub fn get(&self, stratum: usize) -> f64 {
        self.constants[stratum - 1]
    }
}

pub struct PluginOptimal {
    pub m1: OutcomeModel,
    pub m0: OutcomeModel,
    pub mu1: f64,
    pub mu0: f64,
    pub pi: f64,
    pub link: LinkSpec,
}

pub struct RegressionAugmentation {
    pub fit: RegressionFit,
    pub pi: f64,
    pub link: LinkSpec,
}

type Evaluator = dyn Fn(&[f64], usize) -> f64 + Send + Sync;

/// A real-valued function of the covariates (and, through them, the stratum).
#[derive(Clone)]
pub enum AugmentationFn {
    Zero,
    Constant(f64),
    /// Value indexed by stratum label `1..=K`.
    StratumConstant(Vec<f64>),
    PluginOptimal(Arc<PluginOptimal>),
    Regression(Arc<RegressionAugmentation>),
    Custom(Arc<Evaluator>),
    Calibrated { base: Box<AugmentationFn>, table: CalibrationTable },
}

impl fmt::Debug for AugmentationFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentationFn::Zero => f.write_str("Zero"),
            AugmentationFn::Constant(c) => write!(f, "Constant({c})"),
            AugmentationFn::StratumConstant(t) => write!(f, "StratumConstant({t:?})"),
            AugmentationFn::PluginOptimal(_) => f.write_str("PluginOptimal"),
            AugmentationFn::Regression(_) => f.write_str("Regression"),
            AugmentationFn::Custom(_) => f.write_str("Custom"),
            AugmentationFn::Calibrated { base, table } => {
                write!(f, "Calibrated({base:?}, {:?})", table.constants)
            }
        }
    }
}

impl AugmentationFn {
    pub fn custom(f: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static) -> Self {
        AugmentationFn::Custom(Arc::new(f))
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            AugmentationFn::Zero => Provenance::Zero,
            AugmentationFn::PluginOptimal(_) => Provenance::PluginBopt,
            AugmentationFn::Regression(_) => Provenance::RegressionBreg,
            AugmentationFn::Calibrated { .. } => Provenance::Calibrated,
            AugmentationFn::Constant(_) | AugmentationFn::StratumConstant(_) | AugmentationFn::Custom(_) => {
                Provenance::Custom
            }
        }
    }

    pub fn eval(&self, w: &[f64], stratum: usize) -> f64 {
        match self {
            AugmentationFn::Zero => 0.0,
            AugmentationFn::Constant(c) => *c,
            AugmentationFn::StratumConstant(t) => t[stratum - 1],
            AugmentationFn::PluginOptimal(p) => {
                p.link.g_prime(p.mu1) * (p.m1.predict(w) - p.mu1) / p.pi
                    + p.link.g_prime(p.mu0) * (p.m0.predict(w) - p.mu0) / (1.0 - p.pi)
            }
            AugmentationFn::Regression(r) => {
                let f = &r.fit;
                let h1 = f.predict_arm(w, stratum, 1);
                let h0 = f.predict_arm(w, stratum, 0);
                r.link.g_prime(f.mu1) * (h1 - f.mu1) / r.pi + r.link.g_prime(f.mu0) * (h0 - f.mu0) / (1.0 - r.pi)
            }
            AugmentationFn::Custom(f) => f(w, stratum),
            AugmentationFn::Calibrated { base, table } => base.eval(w, stratum) + table.get(stratum),
        }
    }

    pub fn eval_record(&self, r: &SubjectRecord) -> f64 {
        self.eval(&r.covariates, r.stratum)
    }

    pub fn values(&self, dataset: &TrialDataset) -> Vec<f64> {
        dataset.subjects.iter().map(|s| self.eval_record(s)).collect()
    }

    pub fn calibrated(self, table: CalibrationTable) -> Self {
        AugmentationFn::Calibrated { base: Box::new(self), table }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub delta_hat: f64,
    pub mu1_hat: f64,
    pub mu0_hat: f64,
    pub method: String,
    pub warnings: Vec<String>,
}

fn check_pi(pi: f64) -> Result<()> {
    if pi > 0.0 && pi < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("pi must lie in (0,1), got {pi}")))
    }
}

fn boundary_warnings(link: &LinkSpec, mu1: f64, mu0: f64) -> Vec<String> {
    let mut w = Vec::new();
    for (name, v) in [("mu1", mu1), ("mu0", mu0)] {
        if link.at_boundary(v) {
            w.push(format!("{name} = {v} at the {} link boundary; clamped", link.kind));
        }
    }
    w
}

/// `g(Ybar_1) - g(Ybar_0)`.
pub fn empirical_estimate(dataset: &TrialDataset, link: &LinkSpec) -> Result<PointEstimate> {
    let (y0, y1) = dataset.arm_means()?;
    Ok(PointEstimate {
        delta_hat: link.g(y1) - link.g(y0),
        mu1_hat: y1,
        mu0_hat: y0,
        method: "emp".into(),
        warnings: boundary_warnings(link, y1, y0),
    })
}

/// Estimated influence value of the empirical estimator for one subject.
pub fn psi_hat(record: &SubjectRecord, ybar1: f64, ybar0: f64, pi: f64, link: &LinkSpec) -> f64 {
    let a = record.a();
    let y = record.outcome;
    link.g_prime(ybar1) * a * (y - ybar1) / pi - link.g_prime(ybar0) * (1.0 - a) * (y - ybar0) / (1.0 - pi)
}

pub fn psi_hat_values(dataset: &TrialDataset, pi: f64, link: &LinkSpec) -> Result<Vec<f64>> {
    let (y0, y1) = dataset.arm_means()?;
    Ok(dataset.subjects.iter().map(|s| psi_hat(s, y1, y0, pi, link)).collect())
}

/// Augmented estimator from precomputed `b(W_i)` values.
pub fn augmented_from_values(dataset: &TrialDataset, pi: f64, b: &[f64], link: &LinkSpec) -> Result<PointEstimate> {
    check_pi(pi)?;
    let mut est = empirical_estimate(dataset, link)?;
    let terms: Vec<f64> = dataset.subjects.iter().zip(b).map(|(s, bi)| (s.a() - pi) * bi).collect();
    est.delta_hat -= mean(&terms);
    est.method = "aug".into();
    Ok(est)
}

pub fn augmented_estimate(dataset: &TrialDataset, pi: f64, b: &AugmentationFn, link: &LinkSpec) -> Result<PointEstimate> {
    augmented_from_values(dataset, pi, &b.values(dataset), link)
}

/// Plug-in estimate of the variance-minimising augmentation, centred at the
/// arm means.
pub fn plugin_b_opt(
    m1: OutcomeModel,
    m0: OutcomeModel,
    dataset: &TrialDataset,
    pi: f64,
    link: &LinkSpec,
) -> Result<AugmentationFn> {
    check_pi(pi)?;
    let (y0, y1) = dataset.arm_means()?;
    Ok(AugmentationFn::PluginOptimal(Arc::new(PluginOptimal { m1, m0, mu1: y1, mu0: y0, pi, link: *link })))
}

/// Which covariate vector `V` enters the working model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegressorSet {
    /// Intercept and treatment only.
    None,
    /// Indicators of strata `2..=K`.
    StratumDummies,
    Covariates,
    CovariatesAndStrata,
}

/// Working model `E[Y | A, V] = h((1, A, V, A V) beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DesignSpec {
    pub regressors: RegressorSet,
    pub include_treatment_interactions: bool,
    /// Inverse link `h`: identity (least squares) or logit (logistic IRLS).
    pub inverse_link: LinkKind,
}

impl DesignSpec {
    pub fn new(regressors: RegressorSet, inverse_link: LinkKind) -> Self {
        Self { regressors, include_treatment_interactions: true, inverse_link }
    }

    pub fn features(&self, w: &[f64], stratum: usize, n_strata: usize, out: &mut Vec<f64>) {
        out.clear();
        if matches!(self.regressors, RegressorSet::Covariates | RegressorSet::CovariatesAndStrata) {
            out.extend_from_slice(w);
        }
        if matches!(self.regressors, RegressorSet::StratumDummies | RegressorSet::CovariatesAndStrata) {
            out.extend((2..=n_strata).map(|k| f64::from(u8::from(stratum == k))));
        }
    }

    pub fn regressor_row(&self, w: &[f64], stratum: usize, n_strata: usize, a: f64, out: &mut Vec<f64>) {
        let mut v = Vec::new();
        self.features(w, stratum, n_strata, &mut v);
        out.clear();
        out.push(1.0);
        out.push(a);
        out.extend_from_slice(&v);
        out.extend(v.iter().map(|x| a * x));
    }
}

/// Fitted working model with its standardised arm means.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub design: DesignSpec,
    pub coefficients: CoefficientFit,
    pub n_strata: usize,
    pub mu1: f64,
    pub mu0: f64,
}

impl RegressionFit {
    pub fn predict_arm(&self, w: &[f64], stratum: usize, a: u8) -> f64 {
        let mut row = Vec::new();
        self.design.regressor_row(w, stratum, self.n_strata, f64::from(a), &mut row);
        let eta = linalg::dot(&row, &self.coefficients.beta);
        LinkSpec { kind: self.design.inverse_link }.g_inv(eta)
    }
}

pub fn fit_regression(dataset: &TrialDataset, design: &DesignSpec) -> Result<RegressionFit> {
    if !design.include_treatment_interactions {
        return Err(Error::InvalidParameter("working model must include treatment interactions".into()));
    }
    dataset.require_both_arms()?;
    let rows: Vec<Vec<f64>> = dataset
        .subjects
        .iter()
        .map(|s| {
            let mut r = Vec::new();
            design.regressor_row(&s.covariates, s.stratum, dataset.n_strata, s.a(), &mut r);
            r
        })
        .collect();
    let x = Matrix::from_rows(&rows);
    let y = dataset.outcomes();
    let coefficients = match design.inverse_link {
        LinkKind::Identity => fit_ols(&x, &y)?,
        LinkKind::Logit => fit_glm_irls(&x, &y, &LinkSpec::LOGIT)?,
        LinkKind::Log => {
            return Err(Error::InvalidParameter("log inverse link is not supported for the working model".into()))
        }
    };
    let mut fit = RegressionFit { design: *design, coefficients, n_strata: dataset.n_strata, mu1: 0.0, mu0: 0.0 };
    let p1: Vec<f64> = dataset.subjects.iter().map(|s| fit.predict_arm(&s.covariates, s.stratum, 1)).collect();
    let p0: Vec<f64> = dataset.subjects.iter().map(|s| fit.predict_arm(&s.covariates, s.stratum, 0)).collect();
    fit.mu1 = mean(&p1);
    fit.mu0 = mean(&p0);
    Ok(fit)
}

/// G-computation: standardise the fitted model over the whole sample under
/// each treatment and contrast through `g`.
pub fn regression_estimate(dataset: &TrialDataset, design: &DesignSpec, link: &LinkSpec) -> Result<(PointEstimate, RegressionFit)> {
    let fit = fit_regression(dataset, design)?;
    let est = PointEstimate {
        delta_hat: link.g(fit.mu1) - link.g(fit.mu0),
        mu1_hat: fit.mu1,
        mu0_hat: fit.mu0,
        method: "reg".into(),
        warnings: boundary_warnings(link, fit.mu1, fit.mu0),
    };
    Ok((est, fit))
}

/// Augmentation function to which the regression estimator is asymptotically
/// equivalent, evaluated at the fitted coefficients.
pub fn regression_b_reg(fit: RegressionFit, pi: f64, link: &LinkSpec) -> Result<AugmentationFn> {
    check_pi(pi)?;
    Ok(AugmentationFn::Regression(Arc::new(RegressionAugmentation { fit, pi, link: *link })))
}

/// Stratum calibration constants from precomputed `b_hat(W_i)` values.
pub fn calibrate_values(dataset: &TrialDataset, b: &[f64], pi: f64, link: &LinkSpec) -> Result<CalibrationTable> {
    check_pi(pi)?;
    let psi = psi_hat_values(dataset, pi, link)?;
    let k = dataset.n_strata;
    let mut psi_sum = vec![[0.0f64; 2]; k];
    let mut counts = vec![[0usize; 2]; k];
    let mut b_sum = vec![0.0f64; k];
    for ((s, p), bi) in dataset.subjects.iter().zip(&psi).zip(b) {
        let j = s.stratum - 1;
        let a = s.assignment as usize;
        psi_sum[j][a] += p;
        counts[j][a] += 1;
        b_sum[j] += bi;
    }
    let mut constants = vec![0.0; k];
    let mut warnings = Vec::new();
    for j in 0..k {
        let [n0, n1] = counts[j];
        if n0 == 0 || n1 == 0 {
            if n0 + n1 > 0 {
                warnings.push(format!("stratum {} lacks one arm; calibration constant set to 0", j + 1));
            }
            continue;
        }
        constants[j] = psi_sum[j][1] / n1 as f64 - psi_sum[j][0] / n0 as f64 - b_sum[j] / (n0 + n1) as f64;
    }
    Ok(CalibrationTable { constants, counts, warnings })
}

pub fn calibrate(dataset: &TrialDataset, b_hat: &AugmentationFn, pi: f64, link: &LinkSpec) -> Result<CalibrationTable> {
    calibrate_values(dataset, &b_hat.values(dataset), pi, link)
}

/// `delta_aug(b_hat + c_hat)`.
pub fn calibrated_estimate(
    dataset: &TrialDataset,
    pi: f64,
    b_hat: &AugmentationFn,
    link: &LinkSpec,
) -> Result<(PointEstimate, CalibrationTable)> {
    let b = b_hat.values(dataset);
    let table = calibrate_values(dataset, &b, pi, link)?;
    let shifted: Vec<f64> = dataset.subjects.iter().zip(&b).map(|(s, bi)| bi + table.get(s.stratum)).collect();
    let mut est = augmented_from_values(dataset, pi, &shifted, link)?;
    est.method = "aug_cal".into();
    est.warnings.extend(table.warnings.iter().cloned());
    Ok((est, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scheme;
    use crate::learners::{fit_arm_models, Family, LearnerKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ds(rows: &[(f64, usize, u8, f64)], k: usize) -> TrialDataset {
        let subjects = rows.iter().map(|&(w, s, a, y)| SubjectRecord::new(vec![w], s, a, y)).collect();
        TrialDataset::new(subjects, 0.5, Scheme::Simple, k).unwrap()
    }

    #[test]
    fn empirical_examples() {
        let d = ds(&[(0.0, 1, 1, 3.0), (0.0, 1, 1, 3.0), (0.0, 1, 0, 1.0)], 1);
        assert_eq!(empirical_estimate(&d, &LinkSpec::IDENTITY).unwrap().delta_hat, 2.0);

        let e = std::f64::consts::E;
        let d = ds(&[(0.0, 1, 1, e * e), (0.0, 1, 0, e)], 1);
        assert!((empirical_estimate(&d, &LinkSpec::LOG).unwrap().delta_hat - 1.0).abs() < 1e-12);

        // logit(0.75) - logit(0.5) = log 3
        let d = ds(&[(0.0, 1, 1, 1.0), (0.0, 1, 1, 1.0), (0.0, 1, 1, 1.0), (0.0, 1, 1, 0.0), (0.0, 1, 0, 1.0), (0.0, 1, 0, 0.0)], 1);
        assert!((empirical_estimate(&d, &LinkSpec::LOGIT).unwrap().delta_hat - 1.098612288668).abs() < 1e-9);
    }

    #[test]
    fn empirical_boundary_warning() {
        let d = ds(&[(0.0, 1, 1, 1.0), (0.0, 1, 0, 0.0), (0.0, 1, 0, 1.0)], 1);
        let e = empirical_estimate(&d, &LinkSpec::LOGIT).unwrap();
        assert!(e.delta_hat.is_finite());
        assert_eq!(e.warnings.len(), 1);
    }

    #[test]
    fn psi_hat_examples() {
        let r = SubjectRecord::new(vec![], 1, 1, 2.0);
        assert_eq!(psi_hat(&r, 2.0, 0.0, 0.5, &LinkSpec::IDENTITY), 0.0);
        let r = SubjectRecord::new(vec![], 1, 0, 0.3);
        assert!((psi_hat(&r, 5.0, 0.0, 0.5, &LinkSpec::IDENTITY) + 0.6).abs() < 1e-12);
        // g'(0.5) = 4 under logit, checked by central difference.
        let h = 1e-6;
        let fd = (LinkSpec::LOGIT.g(0.5 + h) - LinkSpec::LOGIT.g(0.5 - h)) / (2.0 * h);
        let r = SubjectRecord::new(vec![], 1, 1, 1.0);
        let v = psi_hat(&r, 0.5, 0.3, 0.5, &LinkSpec::LOGIT);
        assert!((v - fd * 0.5 / 0.5).abs() < 1e-6);
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn augmented_examples() {
        let d = ds(&[(1.0, 1, 1, 2.0), (2.0, 1, 1, 2.0), (3.0, 1, 0, 0.0), (4.0, 1, 0, 0.0)], 1);
        let emp = empirical_estimate(&d, &LinkSpec::IDENTITY).unwrap().delta_hat;
        let zero = augmented_estimate(&d, 0.5, &AugmentationFn::Zero, &LinkSpec::IDENTITY).unwrap();
        assert_eq!(zero.delta_hat, emp);
        let c = augmented_estimate(&d, 0.5, &AugmentationFn::Constant(3.7), &LinkSpec::IDENTITY).unwrap();
        assert!((c.delta_hat - emp).abs() < 1e-12);
        let b = AugmentationFn::custom(|w, _| w[0]);
        let v = augmented_estimate(&d, 0.5, &b, &LinkSpec::IDENTITY).unwrap();
        assert!((v.delta_hat - 2.5).abs() < 1e-12);
    }

    #[test]
    fn plugin_constant_models_give_zero() {
        let d = ds(&[(1.0, 1, 1, 2.0), (2.0, 1, 1, 4.0), (3.0, 1, 0, 1.0), (4.0, 1, 0, 1.0), (5.0, 1, 1, 3.0), (6.0, 1, 0, 1.0)], 1);
        // Intercept-only fits: predict the arm means.
        let d0 = d.with_outcomes(&d.outcomes());
        let mut zero_cov = d0.clone();
        for s in &mut zero_cov.subjects {
            s.covariates = vec![];
        }
        let (m1, m0) = fit_arm_models(&zero_cov, &LearnerKind::Ols, Family::Gaussian, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = plugin_b_opt(m1, m0, &zero_cov, 0.5, &LinkSpec::IDENTITY).unwrap();
        for s in &zero_cov.subjects {
            assert!(b.eval_record(s).abs() < 1e-12);
        }
        assert_eq!(b.provenance(), Provenance::PluginBopt);
    }

    fn two_stratum_fixture() -> TrialDataset {
        // stratum 1: treated (5, 7), control (1, 3); stratum 2: treated (10, 12), control (9, 9)
        ds(
            &[
                (0.1, 1, 1, 5.0), (0.2, 1, 0, 1.0), (0.3, 1, 1, 7.0), (0.4, 1, 0, 3.0),
                (0.5, 2, 1, 10.0), (0.6, 2, 0, 9.0), (0.7, 2, 1, 12.0), (0.8, 2, 0, 9.0),
            ],
            2,
        )
    }

    #[test]
    fn regression_empty_v_equals_empirical() {
        let d = two_stratum_fixture();
        let emp = empirical_estimate(&d, &LinkSpec::IDENTITY).unwrap();
        let (reg, fit) = regression_estimate(&d, &DesignSpec::new(RegressorSet::None, LinkKind::Identity), &LinkSpec::IDENTITY).unwrap();
        assert!((reg.delta_hat - emp.delta_hat).abs() < 1e-12);
        let b = regression_b_reg(fit, 0.5, &LinkSpec::IDENTITY).unwrap();
        for s in &d.subjects {
            assert!(b.eval_record(s).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_empty_v_logit_equals_empirical_log_odds() {
        let d = ds(&[(0.0, 1, 1, 1.0), (0.0, 1, 1, 1.0), (0.0, 1, 1, 0.0), (0.0, 1, 0, 1.0), (0.0, 1, 0, 0.0), (0.0, 1, 0, 0.0)], 1);
        let emp = empirical_estimate(&d, &LinkSpec::LOGIT).unwrap();
        let (reg, _) = regression_estimate(&d, &DesignSpec::new(RegressorSet::None, LinkKind::Logit), &LinkSpec::LOGIT).unwrap();
        assert!((reg.delta_hat - emp.delta_hat).abs() < 1e-9, "{reg:?} {emp:?}");
    }

    #[test]
    fn saturated_strata_regression_is_weighted_mean_difference() {
        let d = two_stratum_fixture();
        // d1 = 6 - 2 = 4, d2 = 11 - 9 = 2, equal stratum sizes
        let (reg, fit) = regression_estimate(&d, &DesignSpec::new(RegressorSet::StratumDummies, LinkKind::Identity), &LinkSpec::IDENTITY).unwrap();
        assert!((reg.delta_hat - 3.0).abs() < 1e-12);
        let b = regression_b_reg(fit, 0.5, &LinkSpec::IDENTITY).unwrap();
        assert!((b.eval(&[0.1], 1) - b.eval(&[0.4], 1)).abs() < 1e-12);
        assert!((b.eval(&[0.5], 2) - b.eval(&[0.8], 2)).abs() < 1e-12);
    }

    #[test]
    fn calibration_examples() {
        let d = two_stratum_fixture();
        let mut one = d.clone();
        one.n_strata = 1;
        for s in &mut one.subjects {
            s.stratum = 1;
        }
        let t = calibrate(&one, &AugmentationFn::Zero, 0.5, &LinkSpec::IDENTITY).unwrap();
        assert_eq!(t.constants, vec![0.0]);
        let t = calibrate(&one, &AugmentationFn::Constant(1.5), 0.5, &LinkSpec::IDENTITY).unwrap();
        assert!((t.constants[0] + 1.5).abs() < 1e-12);

        // Hand arithmetic on the two-stratum fixture with b = W:
        // Ybar1 = 8.5, Ybar0 = 5.5; psi = 2 (Y - Ybar1) for treated, -2 (Y - Ybar0) for controls.
        // stratum 1: treated psi mean = 2 (6 - 8.5) = -5, control = -2 (2 - 5.5) = 7, mean b = 0.25
        // stratum 2: treated psi mean = 2 (11 - 8.5) = 5, control = -2 (9 - 5.5) = -7, mean b = 0.65
        let b = AugmentationFn::custom(|w, _| w[0]);
        let t = calibrate(&d, &b, 0.5, &LinkSpec::IDENTITY).unwrap();
        assert!((t.constants[0] - (-5.0 - 7.0 - 0.25)).abs() < 1e-12);
        assert!((t.constants[1] - (5.0 + 7.0 - 0.65)).abs() < 1e-12);

        // Calibrated estimate: emp = 3; (A - pi) (b + c) summed:
        // stratum 1: 0.5 (0.1 + 0.3) - 0.5 (0.2 + 0.4) + 0 * c1 = -0.1
        // stratum 2: 0.5 (0.5 + 0.7) - 0.5 (0.6 + 0.8) = -0.1 ; total -0.2 / 8 = -0.025
        let (est, _) = calibrated_estimate(&d, 0.5, &b, &LinkSpec::IDENTITY).unwrap();
        assert!((est.delta_hat - 3.025).abs() < 1e-12);
    }

    #[test]
    fn calibration_empty_arm_warns() {
        let d = ds(&[(0.0, 1, 1, 1.0), (0.0, 1, 0, 2.0), (0.0, 2, 1, 3.0), (0.0, 2, 1, 4.0)], 3);
        let t = calibrate(&d, &AugmentationFn::Zero, 0.5, &LinkSpec::IDENTITY).unwrap();
        assert_eq!(t.constants[1], 0.0);
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn calibrated_k1_zero_b_is_empirical() {
        let d = ds(&[(0.3, 1, 1, 2.0), (0.1, 1, 0, 1.0), (0.2, 1, 1, 5.0)], 1);
        let emp = empirical_estimate(&d, &LinkSpec::IDENTITY).unwrap().delta_hat;
        let (est, _) = calibrated_estimate(&d, 0.5, &AugmentationFn::Zero, &LinkSpec::IDENTITY).unwrap();
        assert!((est.delta_hat - emp).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn augmentation_is_linear_in_b(
            rows in prop::collection::vec((-3.0f64..3.0, 0u8..2, -5.0f64..5.0), 4..40),
            shift in -2.0f64..2.0,
            slope in -2.0f64..2.0,
        ) {
            let mut rows = rows;
            rows[0].1 = 1;
            rows[1].1 = 0;
            let subjects: Vec<SubjectRecord> = rows.iter().map(|&(w, a, y)| SubjectRecord::new(vec![w], 1, a, y)).collect();
            let d = TrialDataset::new(subjects, 0.5, Scheme::Simple, 1).unwrap();
            let b = AugmentationFn::custom(|w, _| w[0] * w[0]);
            let c = move |w: &[f64]| shift + slope * w[0];
            let bc = AugmentationFn::custom(move |w, _| w[0] * w[0] + c(w));
            let lhs = augmented_estimate(&d, 0.5, &bc, &LinkSpec::IDENTITY).unwrap().delta_hat;
            let base = augmented_estimate(&d, 0.5, &b, &LinkSpec::IDENTITY).unwrap().delta_hat;
            let corr: f64 = d.subjects.iter().map(|s| (s.a() - 0.5) * c(&s.covariates)).sum::<f64>() / d.n() as f64;
            let rhs = base - corr;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())) * 10.0);
        }
    }
}
