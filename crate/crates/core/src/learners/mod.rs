//! Outcome regressions `m_a(W) = E[Y | W, A = a]`.
//!
//! Parametric fits (least squares or logistic IRLS on a feature expansion),
//! regression trees, and a cross-validated convex ensemble over a small
//! library of those.

mod basis;
mod cart;
mod linear;
mod simplex;

pub use basis::{FeatureMap, SplineTerm};
pub use cart::{grow_tree, CartParams, RegressionTree};
pub use linear::{fit_glm_irls, fit_ols, CoefficientFit, IRLS_MAX_ITER, IRLS_SCORE_TOL};
pub use simplex::{simplex_least_squares, MAX_MEMBERS};

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::link::{expit, LinkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainingArm {
    Arm0,
    Arm1,
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperLearnerSpec {
    pub library: Vec<LearnerKind>,
    pub folds: usize,
}

impl SuperLearnerSpec {
    /// Linear, pairwise-interaction, additive spline and tree members with
    /// five-fold cross-validation.
    pub fn standard() -> Self {
        Self {
            library: vec![
                LearnerKind::Ols,
                LearnerKind::OlsInteractions,
                LearnerKind::AdditiveBasis,
                LearnerKind::Cart(CartParams::default()),
            ],
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnerKind {
    Ols,
    OlsInteractions,
    AdditiveBasis,
    Cart(CartParams),
    SuperLearner(SuperLearnerSpec),
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Ols => "ols",
            LearnerKind::OlsInteractions => "ols_interactions",
            LearnerKind::AdditiveBasis => "additive_basis",
            LearnerKind::Cart(_) => "cart",
            LearnerKind::SuperLearner(_) => "super_learner",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ModelState {
    Parametric { features: FeatureMap, beta: Vec<f64>, logistic: bool },
    Tree(RegressionTree),
    Ensemble(EnsembleFit),
}

/// Fitted super-learner state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleFit {
    pub weights: Vec<f64>,
    pub members: Vec<OutcomeModel>,
    /// Cross-validated mean squared error of each surviving member.
    pub member_cv_risk: Vec<f64>,
    /// Cross-validated mean squared error of the weighted combination.
    pub cv_risk: f64,
    /// Library members dropped because they failed to fit.
    pub dropped: Vec<String>,
}

/// A fitted predictor of `E[Y | W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub kind: LearnerKind,
    pub arm: TrainingArm,
    pub family: Family,
    state: ModelState,
}

impl OutcomeModel {
    pub fn predict(&self, w: &[f64]) -> f64 {
        let raw = match &self.state {
            ModelState::Parametric { features, beta, logistic } => {
                let mut row = Vec::with_capacity(beta.len());
                features.expand_row(w, &mut row);
                let eta = linalg::dot(&row, beta);
                if *logistic {
                    expit(eta)
                } else {
                    eta
                }
            }
            ModelState::Tree(t) => t.predict_row(w),
            ModelState::Ensemble(e) => e.weights.iter().zip(&e.members).map(|(wt, m)| wt * m.predict(w)).sum(),
        };
        match self.family {
            Family::Gaussian => raw,
            Family::Binomial => raw.clamp(0.0, 1.0),
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows).map(|i| self.predict(x.row(i))).collect()
    }

    pub fn ensemble(&self) -> Option<&EnsembleFit> {
        match &self.state {
            ModelState::Ensemble(e) => Some(e),
            _ => None,
        }
    }

    pub fn tree(&self) -> Option<&RegressionTree> {
        match &self.state {
            ModelState::Tree(t) => Some(t),
            _ => None,
        }
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.state {
            ModelState::Parametric { beta, .. } => Some(beta),
            _ => None,
        }
    }
}

fn parametric(kind: LearnerKind, features: FeatureMap, x: &Matrix, y: &[f64], family: Family, logistic: bool) -> Result<OutcomeModel> {
    let design = features.expand(x);
    let fit = if logistic { fit_glm_irls(&design, y, &LinkSpec::LOGIT)? } else { fit_ols(&design, y)? };
    Ok(OutcomeModel {
        kind,
        arm: TrainingArm::Pooled,
        family,
        state: ModelState::Parametric { features, beta: fit.beta, logistic },
    })
}

pub fn fit_cart(x: &Matrix, y: &[f64], params: CartParams) -> OutcomeModel {
    OutcomeModel {
        kind: LearnerKind::Cart(params),
        arm: TrainingArm::Pooled,
        family: Family::Gaussian,
        state: ModelState::Tree(grow_tree(x, y, params)),
    }
}

/// Least squares on per-covariate cubic spline bases with knots at the
/// training quartiles.
pub fn fit_additive_basis(x: &Matrix, y: &[f64]) -> Result<OutcomeModel> {
    let features = FeatureMap::additive_from_data(x);
    parametric(LearnerKind::AdditiveBasis, features, x, y, Family::Gaussian, false)
}

/// Fits any learner kind. Under the binomial family the linear and
/// interaction members are logistic regressions; spline and tree members are
/// least-squares fits, and every prediction is clamped to `[0, 1]`.
pub fn fit_learner(kind: &LearnerKind, x: &Matrix, y: &[f64], family: Family, rng: &mut impl Rng) -> Result<OutcomeModel> {
    let logistic = family == Family::Binomial;
    let mut model = match kind {
        LearnerKind::Ols => parametric(kind.clone(), FeatureMap::Linear, x, y, family, logistic)?,
        LearnerKind::OlsInteractions => parametric(kind.clone(), FeatureMap::Interactions, x, y, family, logistic)?,
        LearnerKind::AdditiveBasis => fit_additive_basis(x, y)?,
        LearnerKind::Cart(p) => {
            if x.nrows < 2 * p.min_leaf.max(1) {
                return Err(Error::InvalidParameter(format!(
                    "CART needs at least {} rows, got {}",
                    2 * p.min_leaf.max(1),
                    x.nrows
                )));
            }
            fit_cart(x, y, *p)
        }
        LearnerKind::SuperLearner(spec) => fit_super_learner(x, y, &spec.library, spec.folds, family, rng)?,
    };
    model.family = family;
    Ok(model)
}

/// Random balanced fold labels: a uniform permutation cut into `k` contiguous
/// chunks whose sizes differ by at most one.
pub fn fold_labels(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos * k / n;
    }
    labels
}

/// Fold labels balanced within each group (e.g. treatment arm).
pub fn stratified_fold_labels(groups: &[u8], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut labels = vec![0; groups.len()];
    let mut distinct: Vec<u8> = groups.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    for g in distinct {
        let idx: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        let sub = fold_labels(idx.len(), k, rng);
        for (&i, &f) in idx.iter().zip(&sub) {
            labels[i] = f;
        }
    }
    labels
}

/// Convex combination of library members with weights minimising
/// cross-validated squared error.
pub fn fit_super_learner(
    x: &Matrix,
    y: &[f64],
    library: &[LearnerKind],
    folds: usize,
    family: Family,
    rng: &mut impl Rng,
) -> Result<OutcomeModel> {
    let n = x.nrows;
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("super learner needs at least 2 folds, got {folds}")));
    }
    if n < 2 * folds {
        return Err(Error::InvalidParameter(format!("super learner needs at least {} rows, got {n}", 2 * folds)));
    }
    if library.is_empty() {
        return Err(Error::InvalidParameter("empty super-learner library".into()));
    }
    let labels = fold_labels(n, folds, rng);
    let l = library.len();
    let mut oof = vec![vec![0.0; n]; l];
    let mut failed: Vec<Option<String>> = vec![None; l];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        for (j, kind) in library.iter().enumerate() {
            if failed[j].is_some() {
                continue;
            }
            match fit_learner(kind, &xt, &yt, family, rng) {
                Ok(m) => {
                    for &i in &test {
                        oof[j][i] = m.predict(x.row(i));
                    }
                }
                Err(e) => failed[j] = Some(format!("{kind}: {e}")),
            }
        }
    }

    // Refit survivors on all rows.
    let mut members = Vec::new();
    let mut kept = Vec::new();
    for (j, kind) in library.iter().enumerate() {
        if failed[j].is_some() {
            continue;
        }
        match fit_learner(kind, x, y, family, rng) {
            Ok(m) => {
                members.push(m);
                kept.push(j);
            }
            Err(e) => failed[j] = Some(format!("{kind}: {e}")),
        }
    }
    let dropped: Vec<String> = failed.into_iter().flatten().collect();
    if members.is_empty() {
        return Err(Error::AllMembersFailed(dropped.join("; ")));
    }

    let mut z = Matrix::zeros(n, kept.len());
    for i in 0..n {
        for (c, &j) in kept.iter().enumerate() {
            z.data[i * kept.len() + c] = oof[j][i];
        }
    }
    let weights = simplex_least_squares(&z, y)?;
    let risk = |w: &[f64]| -> f64 {
        let f = z.mul_vec(w);
        f.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64
    };
    let member_cv_risk: Vec<f64> = (0..kept.len())
        .map(|c| {
            let mut e = vec![0.0; kept.len()];
            e[c] = 1.0;
            risk(&e)
        })
        .collect();
    let cv_risk = risk(&weights);
    Ok(OutcomeModel {
        kind: LearnerKind::SuperLearner(SuperLearnerSpec { library: library.to_vec(), folds }),
        arm: TrainingArm::Pooled,
        family,
        state: ModelState::Ensemble(EnsembleFit { weights, members, member_cv_risk, cv_risk, dropped }),
    })
}

/// Row-major covariate matrix of a dataset.
pub fn covariate_matrix(dataset: &TrialDataset) -> Matrix {
    let p = dataset.n_covariates();
    let mut data = Vec::with_capacity(dataset.n() * p);
    for s in &dataset.subjects {
        data.extend_from_slice(&s.covariates);
    }
    Matrix { nrows: dataset.n(), ncols: p, data }
}

/// Independent fits of `m_1` and `m_0` on each arm's subjects.
pub fn fit_arm_models(
    dataset: &TrialDataset,
    kind: &LearnerKind,
    family: Family,
    rng: &mut impl Rng,
) -> Result<(OutcomeModel, OutcomeModel)> {
    dataset.require_both_arms()?;
    let x = covariate_matrix(dataset);
    let fit_arm = |a: u8, rng: &mut _| -> Result<OutcomeModel> {
        let idx: Vec<usize> = (0..dataset.n()).filter(|&i| dataset.subjects[i].assignment == a).collect();
        let xa = x.select_rows(&idx);
        let ya: Vec<f64> = idx.iter().map(|&i| dataset.subjects[i].outcome).collect();
        let mut m = fit_learner(kind, &xa, &ya, family, rng)?;
        m.arm = if a == 1 { TrainingArm::Arm1 } else { TrainingArm::Arm0 };
        Ok(m)
    };
    let m1 = fit_arm(1, rng)?;
    let m0 = fit_arm(0, rng)?;
    Ok((m1, m0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Scheme, SubjectRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn additive_reproduces_linear_fit() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64) / 10.0 - 3.0, ((i * 7) % 13) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 + 2.0 * r[0]).collect();
        let x = Matrix::from_rows(&rows);
        let m = fit_additive_basis(&x, &y).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert!((m.predict(r) - y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn additive_fits_square_on_grid() {
        let rows: Vec<Vec<f64>> = (0..=80).map(|i| vec![-2.0 + i as f64 * 0.05]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[0]).collect();
        let x = Matrix::from_rows(&rows);
        let m = fit_additive_basis(&x, &y).unwrap();
        // Oracle: direct quadratic least squares recovers x^2 exactly. The
        // natural spline is linear past its outer knots, so only compare inside.
        let quad = Matrix::from_rows(&rows.iter().map(|r| vec![1.0, r[0], r[0] * r[0]]).collect::<Vec<_>>());
        let q = fit_ols(&quad, &y).unwrap();
        for r in rows.iter().filter(|r| r[0].abs() <= 1.5) {
            let oracle = q.beta[0] + q.beta[1] * r[0] + q.beta[2] * r[0] * r[0];
            assert!((m.predict(r) - oracle).abs() <= 0.1, "{} {}", r[0], m.predict(r) - oracle);
        }
    }

    #[test]
    fn additive_constant_outcome() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.3]).collect();
        let m = fit_additive_basis(&Matrix::from_rows(&rows), &[2.0; 30]).unwrap();
        assert!((m.predict(&[1.234]) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_member_super_learner() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0]).collect();
        let m = fit_super_learner(&Matrix::from_rows(&rows), &y, &[LearnerKind::Ols], 5, Family::Gaussian, &mut rng()).unwrap();
        assert_eq!(m.ensemble().unwrap().weights, vec![1.0]);
    }

    #[test]
    fn duplicated_members_predict_like_member() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.7).sin()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + 0.1 * r[0] * r[0]).collect();
        let x = Matrix::from_rows(&rows);
        let sl = fit_super_learner(&x, &y, &[LearnerKind::Ols, LearnerKind::Ols], 5, Family::Gaussian, &mut rng()).unwrap();
        let single = fit_ols(&FeatureMap::Linear.expand(&x), &y).unwrap();
        for r in &rows {
            let direct = single.beta[0] + single.beta[1] * r[0];
            assert!((sl.predict(r) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn ensemble_dominates_cart_on_linear_data() {
        let mut g = rng();
        let rows: Vec<Vec<f64>> = (0..100).map(|_| vec![g.sample(StandardNormal), g.sample(StandardNormal)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        let lib = [LearnerKind::Ols, LearnerKind::Cart(CartParams::default())];
        let sl = fit_super_learner(&Matrix::from_rows(&rows), &y, &lib, 5, Family::Gaussian, &mut g).unwrap();
        let e = sl.ensemble().unwrap();
        assert!(e.cv_risk <= e.member_cv_risk[1] + 1e-10);
        assert!(e.cv_risk <= e.member_cv_risk[0] + 1e-10);
        assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn failing_member_is_dropped() {
        // The interaction expansion duplicates columns when two covariates coincide.
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let lib = [LearnerKind::OlsInteractions, LearnerKind::Cart(CartParams::default())];
        let sl = fit_super_learner(&Matrix::from_rows(&rows), &y, &lib, 3, Family::Gaussian, &mut rng()).unwrap();
        let e = sl.ensemble().unwrap();
        assert_eq!(e.dropped.len(), 1);
        assert_eq!(e.members.len(), 1);

        let bad = fit_super_learner(&Matrix::from_rows(&rows), &y, &[LearnerKind::OlsInteractions], 3, Family::Gaussian, &mut rng());
        assert!(matches!(bad, Err(Error::AllMembersFailed(_))));
    }

    #[test]
    fn arm_models_for_outcome_equal_to_assignment() {
        let subjects: Vec<SubjectRecord> = (0..20)
            .map(|i| {
                let a = (i % 2) as u8;
                SubjectRecord::new(vec![i as f64 * 0.1, (i as f64).cos()], 1, a, f64::from(a))
            })
            .collect();
        let ds = TrialDataset::new(subjects, 0.5, Scheme::Simple, 1).unwrap();
        let (m1, m0) = fit_arm_models(&ds, &LearnerKind::Ols, Family::Gaussian, &mut rng()).unwrap();
        assert_eq!(m1.arm, TrainingArm::Arm1);
        for s in &ds.subjects {
            assert!((m1.predict(&s.covariates) - 1.0).abs() < 1e-10);
            assert!(m0.predict(&s.covariates).abs() < 1e-10);
        }
    }

    #[test]
    fn arm_models_require_both_arms() {
        let subjects: Vec<SubjectRecord> = (0..5).map(|i| SubjectRecord::new(vec![i as f64], 1, 1, 0.0)).collect();
        let ds = TrialDataset::new(subjects, 0.5, Scheme::Simple, 1).unwrap();
        assert!(fit_arm_models(&ds, &LearnerKind::Ols, Family::Gaussian, &mut rng()).is_err());
    }

    #[test]
    fn stratified_folds_balance_groups() {
        let groups: Vec<u8> = (0..50).map(|i| u8::from(i % 3 == 0)).collect();
        let labels = stratified_fold_labels(&groups, 5, &mut rng());
        for g in 0..2u8 {
            let mut counts = [0usize; 5];
            for (i, &l) in labels.iter().enumerate() {
                if groups[i] == g {
                    counts[l] += 1;
                }
            }
            let (mn, mx) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(mx - mn <= 1);
        }
    }
}
