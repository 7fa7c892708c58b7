//! Monte Carlo verification of the population variance identities for
//! augmented estimators under simple and stratified randomization.
//!
//! All quantities are evaluated on one shared draw of `(W, S, A, Y)` per
//! population so that both sides of an identity use common random numbers.
//! Monte Carlo standard errors come from 100 equal batches.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::StratumMap;
use crate::error::{Error, Result};
use crate::estimators::AugmentationFn;
use crate::link::LinkSpec;
use crate::rng::{derive_seed, substream, tag};
use crate::scenario::{self, conditional_mean, continuous_means, true_delta, OutcomeType, Scenario, N_COVARIATES};
use crate::stats::{mean, pairwise_sum, sample_variance};

pub const MIN_MC_DRAWS: usize = 10_000;
pub const DEFAULT_MC_DRAWS: usize = 1_000_000;
pub const ABS_TOL: f64 = 1e-3;
const BATCHES: usize = 100;
const CHUNK: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleModel {
    Scenario(Scenario, OutcomeType),
    /// `Y(a) = mu_a` with no randomness at all.
    Degenerate { mu1: f64, mu0: f64 },
    /// `Y(a) = mu_a + N(0, 1)`, independent of `W`.
    Unrelated { mu1: f64, mu0: f64 },
}

/// A population from which `(W, Y(1), Y(0))` can be drawn, together with its
/// conditional means and the estimand link.
#[derive(Debug, Clone)]
pub struct PopulationOracle {
    pub model: OracleModel,
    pub strata: StratumMap,
    pub pi: f64,
    pub link: LinkSpec,
    pub mu1: f64,
    pub mu0: f64,
    /// Monte Carlo error of the means (zero when known in closed form).
    pub mu_mc_se: f64,
}

impl PopulationOracle {
    pub fn scenario(s: Scenario, outcome: OutcomeType) -> Self {
        let (mu1, mu0, se) = match outcome {
            OutcomeType::Continuous => {
                let (m1, m0) = continuous_means(s);
                (m1, m0, 0.0)
            }
            OutcomeType::Binary => {
                let t = true_delta(s, outcome);
                (t.value.mu1, t.value.mu0, t.mc_se)
            }
        };
        Self {
            model: OracleModel::Scenario(s, outcome),
            strata: scenario::strata(),
            pi: 0.5,
            link: outcome.link(),
            mu1,
            mu0,
            mu_mc_se: se,
        }
    }

    pub fn degenerate(mu1: f64, mu0: f64) -> Self {
        Self::simple_model(OracleModel::Degenerate { mu1, mu0 }, mu1, mu0)
    }

    pub fn unrelated(mu1: f64, mu0: f64) -> Self {
        Self::simple_model(OracleModel::Unrelated { mu1, mu0 }, mu1, mu0)
    }

    fn simple_model(model: OracleModel, mu1: f64, mu0: f64) -> Self {
        Self { model, strata: scenario::strata(), pi: 0.5, link: LinkSpec::IDENTITY, mu1, mu0, mu_mc_se: 0.0 }
    }

    pub fn with_pi(mut self, pi: f64) -> Self {
        self.pi = pi;
        self
    }

    pub fn name(&self) -> String {
        match self.model {
            OracleModel::Scenario(s, o) => format!("{s}/{o}"),
            OracleModel::Degenerate { .. } => "degenerate".into(),
            OracleModel::Unrelated { .. } => "unrelated".into(),
        }
    }

    /// `m_a(W) = E[Y(a) | W]`.
    pub fn m(&self, a: f64, w: &[f64]) -> f64 {
        match self.model {
            OracleModel::Scenario(s, o) => conditional_mean(s, o, w, a),
            OracleModel::Degenerate { mu1, mu0 } | OracleModel::Unrelated { mu1, mu0 } => {
                if a == 1.0 {
                    mu1
                } else {
                    mu0
                }
            }
        }
    }

    /// Draws `Y(a)` given `W`.
    pub fn sample_outcome(&self, a: f64, w: &[f64], rng: &mut impl Rng) -> f64 {
        match self.model {
            OracleModel::Scenario(s, o) => scenario::sample_outcome(s, o, w, a, rng),
            OracleModel::Degenerate { .. } => self.m(a, w),
            OracleModel::Unrelated { .. } => self.m(a, w) + rng.sample::<f64, _>(StandardNormal),
        }
    }

    /// `b_opt = g'(mu1)(m1 - mu1)/pi + g'(mu0)(m0 - mu0)/(1 - pi)`.
    pub fn b_opt(&self) -> AugmentationFn {
        let me = self.clone();
        AugmentationFn::custom(move |w, _| {
            me.link.g_prime(me.mu1) * (me.m(1.0, w) - me.mu1) / me.pi
                + me.link.g_prime(me.mu0) * (me.m(0.0, w) - me.mu0) / (1.0 - me.pi)
        })
    }

    /// Draws `n_mc` observations `(W, S, A, Y(A))` with `A ~ Bernoulli(pi)`
    /// independent of the potential outcomes, and evaluates the true
    /// influence function `psi` on each.
    pub fn draw(&self, n_mc: usize, seed: u64) -> Result<McSample> {
        if n_mc < MIN_MC_DRAWS {
            return Err(Error::InvalidParameter(format!("n_mc must be at least {MIN_MC_DRAWS}, got {n_mc}")));
        }
        let (g1, g0) = (self.link.g_prime(self.mu1), self.link.g_prime(self.mu0));
        let chunks: Vec<(Vec<f64>, Vec<usize>, Vec<f64>, Vec<f64>)> = (0..n_mc.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut rng = substream(seed, &[tag::ORACLE, c as u64]);
                let len = CHUNK.min(n_mc - c * CHUNK);
                let mut w = Vec::with_capacity(len * N_COVARIATES);
                let mut s = Vec::with_capacity(len);
                let mut a = Vec::with_capacity(len);
                let mut psi = Vec::with_capacity(len);
                for _ in 0..len {
                    let wi = scenario::sample_covariates(&mut rng);
                    let ai = f64::from(u8::from(rng.random::<f64>() < self.pi));
                    let y = self.sample_outcome(ai, &wi, &mut rng);
                    psi.push(g1 * ai * (y - self.mu1) / self.pi - g0 * (1.0 - ai) * (y - self.mu0) / (1.0 - self.pi));
                    s.push(self.strata.stratum(&wi));
                    a.push(ai);
                    w.extend_from_slice(&wi);
                }
                (w, s, a, psi)
            })
            .collect();
        let mut out = McSample {
            w: Vec::with_capacity(n_mc * N_COVARIATES),
            strata: Vec::with_capacity(n_mc),
            a: Vec::with_capacity(n_mc),
            psi: Vec::with_capacity(n_mc),
            pi: self.pi,
            n_strata: self.strata.n_strata(),
            b_opt: Vec::new(),
        };
        for (w, s, a, psi) in chunks {
            out.w.extend(w);
            out.strata.extend(s);
            out.a.extend(a);
            out.psi.extend(psi);
        }
        out.b_opt = out.eval(&self.b_opt());
        Ok(out)
    }
}

/// One shared Monte Carlo draw from a population.
#[derive(Debug, Clone)]
pub struct McSample {
    pub w: Vec<f64>,
    pub strata: Vec<usize>,
    pub a: Vec<f64>,
    pub psi: Vec<f64>,
    pub pi: f64,
    pub n_strata: usize,
    pub b_opt: Vec<f64>,
}

impl McSample {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.w[i * N_COVARIATES..(i + 1) * N_COVARIATES]
    }

    pub fn eval(&self, b: &AugmentationFn) -> Vec<f64> {
        (0..self.n()).map(|i| b.eval(self.covariates(i), self.strata[i])).collect()
    }

    /// `psi - (A - pi) b` for the given `b` values.
    fn residual(&self, b: &[f64]) -> Vec<f64> {
        self.psi.iter().zip(&self.a).zip(b).map(|((p, a), bi)| p - (a - self.pi) * bi).collect()
    }

    fn centred_times(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().zip(x).map(|(a, xi)| (a - self.pi) * xi).collect()
    }

    /// Per-stratum means of `x` over `r` (0 for a stratum with no draws).
    fn stratum_means(&self, x: &[f64], r: Range<usize>) -> Vec<f64> {
        let mut sum = vec![0.0; self.n_strata];
        let mut cnt = vec![0usize; self.n_strata];
        for i in r {
            sum[self.strata[i] - 1] += x[i];
            cnt[self.strata[i] - 1] += 1;
        }
        sum.iter().zip(&cnt).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect()
    }

    /// `E[(E[x | S])^2]` over `r`.
    fn conditional_mean_square(&self, x: &[f64], r: Range<usize>) -> f64 {
        let means = self.stratum_means(x, r.clone());
        let len = r.len() as f64;
        let terms: Vec<f64> = r.map(|i| means[self.strata[i] - 1].powi(2)).collect();
        pairwise_sum(&terms) / len
    }

    /// `x - Pi(x | S)` with the projection estimated over `r`.
    fn remove_projection(&self, x: &[f64], r: Range<usize>) -> Vec<f64> {
        let means = self.stratum_means(x, r.clone());
        r.map(|i| x[i] - means[self.strata[i] - 1]).collect()
    }
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    mean(&d)
}

fn batch_ranges(n: usize) -> Vec<Range<usize>> {
    (0..BATCHES).map(|j| j * n / BATCHES..(j + 1) * n / BATCHES).collect()
}

/// Full-sample statistic and the batch-means standard error of it.
fn batched(n: usize, f: impl Fn(Range<usize>) -> f64 + Sync) -> (f64, f64) {
    let full = f(0..n);
    let vals: Vec<f64> = batch_ranges(n).into_par_iter().map(&f).collect();
    (full, (sample_variance(&vals) / BATCHES as f64).sqrt())
}

/// Outcome of comparing two Monte Carlo evaluations of one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheckResult {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of `lhs - rhs`.
    pub mc_se: f64,
    pub abs_tol: f64,
    pub pass: bool,
}

impl IdentityCheckResult {
    fn new(name: String, lhs: f64, rhs: f64, mc_se: f64) -> Self {
        let pass = (lhs - rhs).abs() <= 3.0 * mc_se + ABS_TOL;
        Self { name, lhs, rhs, mc_se, abs_tol: ABS_TOL, pass }
    }
}

/// Paired check: `f(range)` returns `(lhs, rhs)` on a sub-range.
fn paired_check(name: String, n: usize, f: impl Fn(Range<usize>) -> (f64, f64) + Sync) -> IdentityCheckResult {
    let (lhs, rhs) = f(0..n);
    let diffs: Vec<f64> = batch_ranges(n)
        .into_par_iter()
        .map(|r| {
            let (l, r) = f(r);
            l - r
        })
        .collect();
    IdentityCheckResult::new(name, lhs, rhs, (sample_variance(&diffs) / BATCHES as f64).sqrt())
}

/// `sigma^2(b) = Var{psi - (A - pi) b(W)}` with its Monte Carlo error.
pub fn sigma2_on(sample: &McSample, b: &AugmentationFn) -> (f64, f64) {
    let x = sample.residual(&sample.eval(b));
    batched(sample.n(), |r| variance(&x[r]))
}

pub fn sigma2(b: &AugmentationFn, oracle: &PopulationOracle, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    Ok(sigma2_on(&oracle.draw(n_mc, seed)?, b))
}

/// Stratified-randomization variance by direct evaluation of
/// `sigma^2(b) - E[(E[(A - pi)(psi - (A - pi) b) | S])^2] / (pi (1 - pi))`.
pub fn sigma2_stratified_on(sample: &McSample, b: &AugmentationFn) -> (f64, f64) {
    let x = sample.residual(&sample.eval(b));
    let ax = sample.centred_times(&x);
    let k = sample.pi * (1.0 - sample.pi);
    batched(sample.n(), |r| variance(&x[r.clone()]) - sample.conditional_mean_square(&ax, r) / k)
}

/// Conditional mean of `f(W)` given the stratum, as a stratum-constant
/// function, with the Monte Carlo error of each stratum mean.
pub fn project_onto_s_on(sample: &McSample, f: &AugmentationFn) -> (AugmentationFn, Vec<f64>) {
    let v = sample.eval(f);
    let table = sample.stratum_means(&v, 0..sample.n());
    let mut ses = Vec::with_capacity(sample.n_strata);
    for k in 1..=sample.n_strata {
        let vk: Vec<f64> = (0..sample.n()).filter(|&i| sample.strata[i] == k).map(|i| v[i]).collect();
        ses.push(if vk.len() < 2 { f64::NAN } else { (sample_variance(&vk) / vk.len() as f64).sqrt() });
    }
    (AugmentationFn::StratumConstant(table), ses)
}

pub fn project_onto_s(f: &AugmentationFn, oracle: &PopulationOracle, n_mc: usize, seed: u64) -> Result<(AugmentationFn, Vec<f64>)> {
    Ok(project_onto_s_on(&oracle.draw(n_mc, seed)?, f))
}

/// `Lambda b = b_opt + (b - b_opt) - Pi(b - b_opt | S)`, the projection
/// estimated on `sample`.
pub fn lambda_on(sample: &McSample, oracle: &PopulationOracle, b: &AugmentationFn) -> AugmentationFn {
    let bo = oracle.b_opt();
    let b2 = b.clone();
    let bo2 = bo.clone();
    let diff = AugmentationFn::custom(move |w, s| b2.eval(w, s) - bo2.eval(w, s));
    let (proj, _) = project_onto_s_on(sample, &diff);
    let b = b.clone();
    AugmentationFn::custom(move |w, s| b.eval(w, s) - proj.eval(w, s))
}

/// `sigma^2(b) - sigma^2(b_opt) = pi (1 - pi) E[(b - b_opt)^2]`.
pub fn check_prop1_on(sample: &McSample, label: &str, b: &AugmentationFn) -> IdentityCheckResult {
    let bv = sample.eval(b);
    let xb = sample.residual(&bv);
    let xo = sample.residual(&sample.b_opt);
    let d2: Vec<f64> = bv.iter().zip(&sample.b_opt).map(|(x, y)| (x - y) * (x - y)).collect();
    let k = sample.pi * (1.0 - sample.pi);
    paired_check(format!("distance-to-optimum[{label}]"), sample.n(), |r| {
        (variance(&xb[r.clone()]) - variance(&xo[r.clone()]), k * mean(&d2[r]))
    })
}

/// `sigma_st^2(b)` evaluated directly against `sigma^2(Lambda b)`.
pub fn check_prop2_on(sample: &McSample, label: &str, b: &AugmentationFn) -> IdentityCheckResult {
    let bv = sample.eval(b);
    let xb = sample.residual(&bv);
    let axb = sample.centred_times(&xb);
    let d: Vec<f64> = bv.iter().zip(&sample.b_opt).map(|(x, y)| x - y).collect();
    let k = sample.pi * (1.0 - sample.pi);
    paired_check(format!("stratified-projection[{label}]"), sample.n(), |r| {
        let lhs = variance(&xb[r.clone()]) - sample.conditional_mean_square(&axb, r.clone()) / k;
        let dperp = sample.remove_projection(&d, r.clone());
        let lam: Vec<f64> = r.clone().zip(&dperp).map(|(i, dp)| sample.b_opt[i] + dp).collect();
        let x: Vec<f64> =
            r.zip(&lam).map(|(i, l)| sample.psi[i] - (sample.a[i] - sample.pi) * l).collect();
        (lhs, variance(&x))
    })
}

/// `sigma_st^2(0) = sigma^2(c_opt)` with `c_opt = Pi(b_opt | S)`.
pub fn check_eq5_on(sample: &McSample) -> IdentityCheckResult {
    let apsi = sample.centred_times(&sample.psi);
    let k = sample.pi * (1.0 - sample.pi);
    paired_check("optimal-stratum-augmentation[sigma_st2(0)=sigma2(c_opt)]".into(), sample.n(), |r| {
        let lhs = variance(&sample.psi[r.clone()]) - sample.conditional_mean_square(&apsi, r.clone()) / k;
        let c = sample.stratum_means(&sample.b_opt, r.clone());
        let x: Vec<f64> =
            r.map(|i| sample.psi[i] - (sample.a[i] - sample.pi) * c[sample.strata[i] - 1]).collect();
        (lhs, variance(&x))
    })
}

/// `sigma^2(0) - sigma_st^2(0) = pi (1 - pi) E[Pi(b_opt | S)^2]`.
pub fn check_stratification_gap_on(sample: &McSample) -> IdentityCheckResult {
    let apsi = sample.centred_times(&sample.psi);
    let k = sample.pi * (1.0 - sample.pi);
    paired_check("stratification-gap[sigma2(0)-sigma_st2(0)]".into(), sample.n(), |r| {
        (sample.conditional_mean_square(&apsi, r.clone()) / k, k * sample.conditional_mean_square(&sample.b_opt, r))
    })
}

/// `Cov(psi - (A - pi) base, (A - pi) d) = 0` when `base = b_opt`.
pub fn check_orthogonality_on(sample: &McSample, label: &str, base: &[f64], d: &AugmentationFn) -> IdentityCheckResult {
    let x = sample.residual(base);
    let ad = sample.centred_times(&sample.eval(d));
    paired_check(format!("orthogonality[{label}]"), sample.n(), |r| {
        let (xs, ys) = (&x[r.clone()], &ad[r]);
        let (mx, my) = (mean(xs), mean(ys));
        let prods: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).collect();
        (mean(&prods), 0.0)
    })
}

pub fn check_prop1(b: &AugmentationFn, oracle: &PopulationOracle, n_mc: usize, seed: u64) -> Result<IdentityCheckResult> {
    Ok(check_prop1_on(&oracle.draw(n_mc, seed)?, "b", b))
}

pub fn check_prop2(b: &AugmentationFn, oracle: &PopulationOracle, n_mc: usize, seed: u64) -> Result<IdentityCheckResult> {
    Ok(check_prop2_on(&oracle.draw(n_mc, seed)?, "b", b))
}

pub fn check_eq5(oracle: &PopulationOracle, n_mc: usize, seed: u64) -> Result<IdentityCheckResult> {
    Ok(check_eq5_on(&oracle.draw(n_mc, seed)?))
}

pub fn check_orthogonality(d: &AugmentationFn, oracle: &PopulationOracle, n_mc: usize, seed: u64) -> Result<IdentityCheckResult> {
    let s = oracle.draw(n_mc, seed)?;
    let base = s.b_opt.clone();
    Ok(check_orthogonality_on(&s, "d", &base, d))
}

fn w_coord(j: usize) -> AugmentationFn {
    AugmentationFn::custom(move |w, _| w[j])
}

fn plus(a: &AugmentationFn, b: &AugmentationFn) -> AugmentationFn {
    let (a, b) = (a.clone(), b.clone());
    AugmentationFn::custom(move |w, s| a.eval(w, s) + b.eval(w, s))
}

/// Every identity for one population, on one shared draw.
pub fn population_suite(oracle: &PopulationOracle, n_mc: usize, seed: u64) -> Result<Vec<IdentityCheckResult>> {
    let s = oracle.draw(n_mc, seed)?;
    let bo = oracle.b_opt();
    let zero = AugmentationFn::Zero;
    let first_stratum = AugmentationFn::custom(|_, s| f64::from(u8::from(s == 1)));
    let mut out = vec![
        check_prop1_on(&s, "b=0", &zero),
        check_prop1_on(&s, "b=b_opt", &bo),
        check_prop1_on(&s, "b=b_opt+W3", &plus(&bo, &w_coord(2))),
        check_prop2_on(&s, "b=0", &zero),
        check_prop2_on(&s, "b=b_opt", &bo),
        check_prop2_on(&s, "b=W1", &w_coord(0)),
        check_prop2_on(&s, "b=I(S=1)", &first_stratum),
        check_eq5_on(&s),
        check_stratification_gap_on(&s),
        check_orthogonality_on(&s, "d=1", &s.b_opt, &AugmentationFn::Constant(1.0)),
        check_orthogonality_on(&s, "d=W1", &s.b_opt, &w_coord(0)),
    ];
    let name = oracle.name();
    for r in &mut out {
        r.name = format!("{name} {}", r.name);
    }
    Ok(out)
}

/// Orthogonality with the wrong base `b_opt + W1` and `d = W1`; the
/// covariance is `-pi (1 - pi)`, so this check must fail.
pub fn negative_control(oracle: &PopulationOracle, n_mc: usize, seed: u64) -> Result<IdentityCheckResult> {
    let s = oracle.draw(n_mc, seed)?;
    let base: Vec<f64> = s.b_opt.iter().enumerate().map(|(i, b)| b + s.covariates(i)[0]).collect();
    let mut r = check_orthogonality_on(&s, "base=b_opt+W1,d=W1", &base, &w_coord(0));
    r.name = format!("{} negative-control {}", oracle.name(), r.name);
    Ok(r)
}

/// The populations covered by the default suite: four scenarios, both
/// outcome types.
pub fn default_oracles() -> Vec<PopulationOracle> {
    let mut v = Vec::new();
    for o in [OutcomeType::Continuous, OutcomeType::Binary] {
        for s in Scenario::ALL {
            v.push(PopulationOracle::scenario(s, o));
        }
    }
    v
}

/// Runs the suite over every default population; with `negative_control`
/// the deliberately broken orthogonality check is appended.
pub fn default_suite(n_mc: usize, seed: u64, with_negative_control: bool) -> Result<Vec<IdentityCheckResult>> {
    let mut out = Vec::new();
    for (j, oracle) in default_oracles().iter().enumerate() {
        out.extend(population_suite(oracle, n_mc, derive_seed(seed, &[tag::ORACLE, j as u64]))?);
    }
    if with_negative_control {
        let oracle = PopulationOracle::scenario(Scenario::A, OutcomeType::Continuous);
        out.push(negative_control(&oracle, n_mc, derive_seed(seed, &[tag::ORACLE, 999]))?);
    }
    Ok(out)
}
