//! The six estimators compared in simulations and applied to trial data.
//!
//! `aug` and `aug_cal` share one pair of fitted outcome models.

use std::fmt;
use std::str::FromStr;

use crate::data::{Scheme, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    calibrate_values, empirical_estimate, fit_regression, psi_hat_values, regression_b_reg,
    DesignSpec, PointEstimate, RegressorSet,
};
use crate::inference::{cross_fit_b_values, if_variance_values, EstimateReport};
use crate::learners::{fit_arm_models, Family, LearnerKind, SuperLearnerSpec};
use crate::link::{LinkKind, LinkSpec};
use crate::rng::{substream, tag};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodSpec {
    Emp,
    RegS,
    RegW,
    RegWS,
    Aug,
    AugCal,
}

impl MethodSpec {
    pub const ALL: [MethodSpec; 6] =
        [MethodSpec::Emp, MethodSpec::RegS, MethodSpec::RegW, MethodSpec::RegWS, MethodSpec::Aug, MethodSpec::AugCal];

    pub fn name(self) -> &'static str {
        match self {
            MethodSpec::Emp => "emp",
            MethodSpec::RegS => "reg_S",
            MethodSpec::RegW => "reg_W",
            MethodSpec::RegWS => "reg_WS",
            MethodSpec::Aug => "aug",
            MethodSpec::AugCal => "aug_cal",
        }
    }

    fn regressors(self) -> Option<RegressorSet> {
        match self {
            MethodSpec::RegS => Some(RegressorSet::StratumDummies),
            MethodSpec::RegW => Some(RegressorSet::Covariates),
            MethodSpec::RegWS => Some(RegressorSet::CovariatesAndStrata),
            _ => None,
        }
    }

    /// Which standard error the simulation protocol reports: regressions
    /// that already adjust for `S` need no correction, everything else uses
    /// the calibrated variance under stratified randomization; the
    /// calibrated estimator always uses its own calibrated variance.
    pub fn uses_corrected_se(self, scheme: Scheme) -> bool {
        match (self, scheme) {
            (MethodSpec::AugCal, _) => true,
            (MethodSpec::RegS | MethodSpec::RegWS, Scheme::StratifiedBlock) => false,
            (_, Scheme::StratifiedBlock) => true,
            (_, Scheme::Simple) => false,
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        MethodSpec::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected emp, reg_S, reg_W, reg_WS, aug or aug_cal)")))
    }
}

/// Settings shared by all methods on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOptions {
    pub link: LinkSpec,
    pub family: Family,
    /// Learner for the augmentation methods.
    pub learner: LearnerKind,
    /// Folds for the cross-fitted variance of the augmentation methods;
    /// `None` evaluates the variance at the in-sample fit.
    pub cross_fit_folds: Option<usize>,
    pub level: f64,
}

impl MethodOptions {
    pub fn new(link: LinkSpec, family: Family) -> Self {
        Self {
            link,
            family,
            learner: LearnerKind::SuperLearner(SuperLearnerSpec::standard()),
            cross_fit_folds: Some(5),
            level: 0.95,
        }
    }

    /// Working-model inverse link for the regression estimators.
    fn working_link(&self) -> LinkKind {
        match self.family {
            Family::Gaussian => LinkKind::Identity,
            Family::Binomial => LinkKind::Logit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: MethodSpec,
    pub report: EstimateReport,
    /// The regression fit failed and the empirical estimator was used.
    pub fallback: bool,
}

fn report(
    ds: &TrialDataset,
    opts: &MethodOptions,
    mut est: PointEstimate,
    method: MethodSpec,
    psi: &[f64],
    b: &[f64],
    cross_validated: bool,
) -> Result<EstimateReport> {
    let table = calibrate_values(ds, b, ds.pi, &opts.link)?;
    let mut unc = if_variance_values(ds, ds.pi, psi, b, None);
    let mut cor = if_variance_values(ds, ds.pi, psi, b, Some(&table));
    unc.cross_validated = cross_validated;
    cor.cross_validated = cross_validated;
    est.method = method.name().into();
    Ok(EstimateReport::new(est, unc, cor, opts.level))
}

/// Applies each requested method to `ds`. Learner and cross-fitting
/// randomness is drawn from substreams of `seed`.
pub fn evaluate_methods(
    ds: &TrialDataset,
    methods: &[MethodSpec],
    opts: &MethodOptions,
    seed: u64,
) -> Vec<Result<MethodOutcome>> {
    let psi = match psi_hat_values(ds, ds.pi, &opts.link) {
        Ok(p) => p,
        Err(e) => return methods.iter().map(|_| Err(e.clone())).collect(),
    };
    let zeros = vec![0.0; ds.n()];
    let emp = || -> Result<EstimateReport> {
        let est = empirical_estimate(ds, &opts.link)?;
        report(ds, opts, est, MethodSpec::Emp, &psi, &zeros, false)
    };

    let needs_aug = methods.iter().any(|m| matches!(m, MethodSpec::Aug | MethodSpec::AugCal));
    let aug_fit: Option<Result<(Vec<f64>, Vec<f64>, bool)>> = needs_aug.then(|| {
        let mut rng = substream(seed, &[tag::LEARNING]);
        let (m1, m0) = fit_arm_models(ds, &opts.learner, opts.family, &mut rng)?;
        let b = crate::estimators::plugin_b_opt(m1, m0, ds, ds.pi, &opts.link)?.values(ds);
        let (bvar, cv) = match opts.cross_fit_folds {
            Some(k) => {
                let mut rng = substream(seed, &[tag::CROSS_FIT]);
                (cross_fit_b_values(ds, ds.pi, &opts.learner, opts.family, &opts.link, k, &mut rng)?, true)
            }
            None => (b.clone(), false),
        };
        Ok((b, bvar, cv))
    });

    methods
        .iter()
        .map(|&m| -> Result<MethodOutcome> {
            match m {
                MethodSpec::Emp => Ok(MethodOutcome { method: m, report: emp()?, fallback: false }),
                MethodSpec::RegS | MethodSpec::RegW | MethodSpec::RegWS => {
                    let design = DesignSpec::new(m.regressors().expect("regression method"), opts.working_link());
                    let fitted = fit_regression(ds, &design).and_then(|fit| {
                        let est = PointEstimate {
                            delta_hat: opts.link.g(fit.mu1) - opts.link.g(fit.mu0),
                            mu1_hat: fit.mu1,
                            mu0_hat: fit.mu0,
                            method: String::new(),
                            warnings: Vec::new(),
                        };
                        let b = regression_b_reg(fit, ds.pi, &opts.link)?.values(ds);
                        report(ds, opts, est, m, &psi, &b, false)
                    });
                    match fitted {
                        Ok(r) => Ok(MethodOutcome { method: m, report: r, fallback: false }),
                        Err(Error::Separation { .. } | Error::SingularDesign { .. }) => {
                            let mut r = emp()?;
                            r.estimate.method = m.name().into();
                            r.estimate.warnings.push("working model fit failed; empirical estimator used".into());
                            Ok(MethodOutcome { method: m, report: r, fallback: true })
                        }
                        Err(e) => Err(e),
                    }
                }
                MethodSpec::Aug | MethodSpec::AugCal => {
                    let (b, bvar, cv) = match aug_fit.as_ref().expect("fitted above") {
                        Ok(v) => v,
                        Err(e) => return Err(e.clone()),
                    };
                    let mut est = empirical_estimate(ds, &opts.link)?;
                    let shift = if m == MethodSpec::AugCal {
                        let t = calibrate_values(ds, b, ds.pi, &opts.link)?;
                        est.warnings.extend(t.warnings.iter().cloned());
                        ds.subjects.iter().zip(b).map(|(s, bi)| bi + t.get(s.stratum)).collect()
                    } else {
                        b.clone()
                    };
                    let terms: Vec<f64> = ds.subjects.iter().zip(&shift).map(|(s, v)| (s.a() - ds.pi) * v).collect();
                    est.delta_hat -= mean(&terms);
                    let r = report(ds, opts, est, m, &psi, bvar, *cv)?;
                    Ok(MethodOutcome { method: m, report: r, fallback: false })
                }
            }
        })
        .collect()
}
