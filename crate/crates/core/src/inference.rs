//! Influence-function variance estimates, the stratification correction,
//! cross-fitting and Wald intervals.

use rand::Rng;

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::estimators::{calibrate_values, psi_hat_values, AugmentationFn, CalibrationTable, PointEstimate};
use crate::learners::{covariate_matrix, fit_learner, fold_labels, stratified_fold_labels, Family, LearnerKind};
use crate::link::LinkSpec;
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    /// Estimate of the scaled asymptotic variance.
    pub sigma2_hat: f64,
    /// `sqrt(sigma2_hat / n)`.
    pub se: f64,
    pub corrected_for_stratification: bool,
    pub cross_validated: bool,
}

impl VarianceEstimate {
    fn from_sigma2(sigma2_hat: f64, n: usize, corrected: bool, cross_validated: bool) -> Self {
        let sigma2_hat = sigma2_hat.max(0.0);
        Self {
            sigma2_hat,
            se: (sigma2_hat / n as f64).sqrt(),
            corrected_for_stratification: corrected,
            cross_validated,
        }
    }
}

/// A point estimate with both standard errors and their Wald intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: PointEstimate,
    pub uncorrected: VarianceEstimate,
    pub corrected: VarianceEstimate,
    pub level: f64,
    pub ci_uncorrected: (f64, f64),
    pub ci_corrected: (f64, f64),
}

impl EstimateReport {
    pub fn new(estimate: PointEstimate, uncorrected: VarianceEstimate, corrected: VarianceEstimate, level: f64) -> Self {
        let ci_uncorrected = wald_interval(estimate.delta_hat, uncorrected.se, level);
        let ci_corrected = wald_interval(estimate.delta_hat, corrected.se, level);
        Self { estimate, uncorrected, corrected, level, ci_uncorrected, ci_corrected }
    }

    pub fn method(&self) -> &str {
        &self.estimate.method
    }
}

/// `mean[psi_hat - (A - pi)(b_hat + c_hat(S))]^2` from precomputed values.
pub fn if_variance_values(
    dataset: &TrialDataset,
    pi: f64,
    psi: &[f64],
    b: &[f64],
    calibration: Option<&CalibrationTable>,
) -> VarianceEstimate {
    let sq: Vec<f64> = dataset
        .subjects
        .iter()
        .zip(psi)
        .zip(b)
        .map(|((s, p), bi)| {
            let c = calibration.map_or(0.0, |t| t.get(s.stratum));
            let r = p - (s.a() - pi) * (bi + c);
            r * r
        })
        .collect();
    VarianceEstimate::from_sigma2(mean(&sq), dataset.n(), calibration.is_some(), false)
}

pub fn if_variance(
    dataset: &TrialDataset,
    pi: f64,
    b_hat: &AugmentationFn,
    link: &LinkSpec,
    calibration: Option<&CalibrationTable>,
) -> Result<VarianceEstimate> {
    let psi = psi_hat_values(dataset, pi, link)?;
    Ok(if_variance_values(dataset, pi, &psi, &b_hat.values(dataset), calibration))
}

/// Out-of-fold plug-in `b_opt` values: arm models are refitted without each
/// fold and evaluated on it. Centring uses the full-sample arm means.
pub fn cross_fit_b_values(
    dataset: &TrialDataset,
    pi: f64,
    learner: &LearnerKind,
    family: Family,
    link: &LinkSpec,
    folds: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let n = dataset.n();
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("cross-fitting needs at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidParameter(format!("{folds} folds requested for {n} subjects")));
    }
    let (y0, y1) = dataset.arm_means()?;
    let labels =
        if folds == n { fold_labels(n, folds, rng) } else { stratified_fold_labels(&dataset.assignments(), folds, rng) };
    let x = covariate_matrix(dataset);
    let mut out = vec![0.0; n];
    for f in 0..folds {
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let mut models = Vec::with_capacity(2);
        for a in [1u8, 0] {
            let train: Vec<usize> =
                (0..n).filter(|&i| labels[i] != f && dataset.subjects[i].assignment == a).collect();
            if train.is_empty() {
                return Err(Error::InvalidParameter(format!("fold {f} leaves arm {a} without training data")));
            }
            let ya: Vec<f64> = train.iter().map(|&i| dataset.subjects[i].outcome).collect();
            models.push(fit_learner(learner, &x.select_rows(&train), &ya, family, rng)?);
        }
        for &i in &test {
            let w = x.row(i);
            out[i] = link.g_prime(y1) * (models[0].predict(w) - y1) / pi
                + link.g_prime(y0) * (models[1].predict(w) - y0) / (1.0 - pi);
        }
    }
    Ok(out)
}

/// Variance display evaluated at out-of-fold `b_hat`, optionally with
/// calibration constants recomputed from those values.
#[allow(clippy::too_many_arguments)]
pub fn cross_fit_variance(
    dataset: &TrialDataset,
    pi: f64,
    learner: &LearnerKind,
    family: Family,
    link: &LinkSpec,
    folds: usize,
    calibrated: bool,
    rng: &mut impl Rng,
) -> Result<VarianceEstimate> {
    let b = cross_fit_b_values(dataset, pi, learner, family, link, folds, rng)?;
    let psi = psi_hat_values(dataset, pi, link)?;
    let table = if calibrated { Some(calibrate_values(dataset, &b, pi, link)?) } else { None };
    let mut v = if_variance_values(dataset, pi, &psi, &b, table.as_ref());
    v.cross_validated = true;
    Ok(v)
}

/// `delta_hat -/+ z se` with `z` the `(1 + level) / 2` normal quantile.
pub fn wald_interval(delta_hat: f64, se: f64, level: f64) -> (f64, f64) {
    let z = normal_quantile(0.5 * (1.0 + level));
    (delta_hat - z * se, delta_hat + z * se)
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}
