//! The four simulation data-generating processes.
//!
//! `W ~ N(0, I_3)`, stratum `S = 1 + I(W1 > 0) + 2 I(W2 > 0)`, and a linear
//! predictor `eta(W, A)` that is either the conditional mean of a continuous
//! outcome (with unit-variance Gaussian noise) or the log-odds of a binary one.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{EstimandValue, StratumMap};
use crate::error::Error;
use crate::learners::Family;
use crate::link::{expit, LinkSpec};
use crate::rng::{substream, tag};
use crate::stats::pairwise_sum;

pub const N_COVARIATES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeType {
    Continuous,
    Binary,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    /// Linear predictor at covariates `w` under treatment `a`.
    pub fn eta(self, w: &[f64], a: f64) -> f64 {
        let (w1, w2, w3) = (w[0], w[1], w[2]);
        match self {
            Scenario::A => -1.0 + w1 - w2 + w3 + a * (1.0 + w2 - 0.5 * w3),
            Scenario::B => -1.0 + w1 - w2 + w1 * w3 - w2 * w3 + a * (1.0 + w1 * w2),
            Scenario::C => {
                let w2p = w2.max(0.0);
                -1.0 + w1 + w1 * w1 - w2p * w2p + a * (2.0 + w3 - w3 * w3)
            }
            Scenario::D => -1.0 + w1.hypot(w2) - w3.abs() + a,
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            _ => Err(Error::Config(format!("unknown scenario '{s}' (expected A, B, C or D)"))),
        }
    }
}

impl OutcomeType {
    /// Link defining the estimand: identity for continuous outcomes, logit
    /// (log odds ratio) for binary ones.
    pub fn link(self) -> LinkSpec {
        match self {
            OutcomeType::Continuous => LinkSpec::IDENTITY,
            OutcomeType::Binary => LinkSpec::LOGIT,
        }
    }

    pub fn family(self) -> Family {
        match self {
            OutcomeType::Continuous => Family::Gaussian,
            OutcomeType::Binary => Family::Binomial,
        }
    }
}

impl fmt::Display for OutcomeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeType::Continuous => "continuous",
            OutcomeType::Binary => "binary",
        })
    }
}

impl FromStr for OutcomeType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" => Ok(OutcomeType::Continuous),
            "binary" => Ok(OutcomeType::Binary),
            _ => Err(Error::Config(format!("unknown outcome type '{s}' (expected continuous or binary)"))),
        }
    }
}

/// `m_a(W) = E[Y(a) | W]`.
pub fn conditional_mean(scenario: Scenario, outcome: OutcomeType, w: &[f64], a: f64) -> f64 {
    let eta = scenario.eta(w, a);
    match outcome {
        OutcomeType::Continuous => eta,
        OutcomeType::Binary => expit(eta),
    }
}

pub fn sample_covariates(rng: &mut impl Rng) -> [f64; N_COVARIATES] {
    [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

/// Draws `Y(a)` given `W`.
pub fn sample_outcome(scenario: Scenario, outcome: OutcomeType, w: &[f64], a: f64, rng: &mut impl Rng) -> f64 {
    let m = conditional_mean(scenario, outcome, w, a);
    match outcome {
        OutcomeType::Continuous => m + rng.sample::<f64, _>(StandardNormal),
        OutcomeType::Binary => f64::from(u8::from(rng.random::<f64>() < m)),
    }
}

pub fn strata() -> StratumMap {
    StratumMap::scenario_default()
}

/// `(mu1, mu0)` for continuous outcomes from Gaussian moments:
/// `E W^2 = 1`, `E (W v 0)^2 = 1/2`, `E |W| = sqrt(2/pi)`,
/// `E sqrt(W1^2 + W2^2) = sqrt(pi/2)`.
pub fn continuous_means(scenario: Scenario) -> (f64, f64) {
    use std::f64::consts::PI;
    let mu0 = match scenario {
        Scenario::A | Scenario::B => -1.0,
        Scenario::C => -0.5,
        Scenario::D => -1.0 + (PI / 2.0).sqrt() - (2.0 / PI).sqrt(),
    };
    (mu0 + 1.0, mu0)
}

/// Population estimand with the Monte Carlo standard error of `delta`
/// (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueDelta {
    pub value: EstimandValue,
    pub mc_se: f64,
    pub mc_draws: usize,
}

pub const TRUTH_DRAWS: usize = 10_000_000;
const TRUTH_CHUNK: usize = 100_000;
const TRUTH_SEED: u64 = 0x5eed_7a11;

/// Monte Carlo `E[expit(eta(W, a))]` for both arms with a delta-method
/// standard error of the log odds ratio.
pub fn binary_truth_mc(scenario: Scenario, draws: usize, seed: u64) -> TrueDelta {
    let chunks = draws.div_ceil(TRUTH_CHUNK);
    // Per chunk: sums of p1, p0, p1^2, p0^2, p1 p0.
    let parts: Vec<[f64; 5]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, &[tag::ORACLE, scenario.index(), c as u64]);
            let len = TRUTH_CHUNK.min(draws - c * TRUTH_CHUNK);
            let mut cols = [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]];
            for i in 0..len {
                let w = sample_covariates(&mut rng);
                let p1 = expit(scenario.eta(&w, 1.0));
                let p0 = expit(scenario.eta(&w, 0.0));
                cols[0][i] = p1;
                cols[1][i] = p0;
                cols[2][i] = p1 * p1;
                cols[3][i] = p0 * p0;
                cols[4][i] = p1 * p0;
            }
            cols.map(|v| pairwise_sum(&v))
        })
        .collect();
    let total = |k: usize| pairwise_sum(&parts.iter().map(|p| p[k]).collect::<Vec<_>>()) / draws as f64;
    let (mu1, mu0) = (total(0), total(1));
    let (v1, v0, c10) = (total(2) - mu1 * mu1, total(3) - mu0 * mu0, total(4) - mu1 * mu0);
    // d/dmu logit(mu) = 1 / (mu (1 - mu))
    let (g1, g0) = (1.0 / (mu1 * (1.0 - mu1)), 1.0 / (mu0 * (1.0 - mu0)));
    let var = g1 * g1 * v1 + g0 * g0 * v0 - 2.0 * g1 * g0 * c10;
    TrueDelta {
        value: EstimandValue::from_means(mu1, mu0, &LinkSpec::LOGIT),
        mc_se: (var.max(0.0) / draws as f64).sqrt(),
        mc_draws: draws,
    }
}

/// True estimand: exactly 1 for continuous outcomes; a cached
/// `TRUTH_DRAWS`-draw Monte Carlo value of the log odds ratio for binary ones.
pub fn true_delta(scenario: Scenario, outcome: OutcomeType) -> TrueDelta {
    match outcome {
        OutcomeType::Continuous => {
            let (mu1, mu0) = continuous_means(scenario);
            TrueDelta { value: EstimandValue { delta: 1.0, mu1, mu0 }, mc_se: 0.0, mc_draws: 0 }
        }
        OutcomeType::Binary => {
            static CACHE: [OnceLock<TrueDelta>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
            *CACHE[scenario as usize].get_or_init(|| binary_truth_mc(scenario, TRUTH_DRAWS, TRUTH_SEED))
        }
    }
}
