//! Trial records, datasets and stratum maps.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::link::LinkSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub covariates: Vec<f64>,
    /// Stratum label in `1..=K`.
    pub stratum: usize,
    /// Treatment indicator, 0 or 1.
    pub assignment: u8,
    pub outcome: f64,
}

impl SubjectRecord {
    pub fn new(covariates: Vec<f64>, stratum: usize, assignment: u8, outcome: f64) -> Self {
        Self { covariates, stratum, assignment, outcome }
    }

    #[inline]
    pub fn a(&self) -> f64 {
        f64::from(self.assignment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Simple,
    StratifiedBlock,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Simple => "simple",
            Scheme::StratifiedBlock => "stratified",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" => Ok(Scheme::Simple),
            "stratified" | "stratified_block" => Ok(Scheme::StratifiedBlock),
            other => Err(Error::InvalidParameter(format!("unknown scheme `{other}`"))),
        }
    }
}

type StratumRule = Arc<dyn Fn(&[f64]) -> usize + Send + Sync>;

/// Partition rule sending a covariate vector to a stratum label in `1..=K`.
#[derive(Clone)]
pub struct StratumMap {
    n_strata: usize,
    rule: StratumRule,
}

impl fmt::Debug for StratumMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StratumMap").field("n_strata", &self.n_strata).finish()
    }
}

impl StratumMap {
    pub fn new(n_strata: usize, rule: impl Fn(&[f64]) -> usize + Send + Sync + 'static) -> Self {
        Self { n_strata, rule: Arc::new(rule) }
    }

    /// `1 + I(w[first] > 0) + 2 I(w[second] > 0)`, four strata.
    pub fn sign_quadrants(first: usize, second: usize) -> Self {
        Self::new(4, move |w| 1 + usize::from(w[first] > 0.0) + 2 * usize::from(w[second] > 0.0))
    }

    /// The stratification used by the simulation scenarios: signs of `W1` and `W2`.
    pub fn scenario_default() -> Self {
        Self::sign_quadrants(0, 1)
    }

    pub fn n_strata(&self) -> usize {
        self.n_strata
    }

    pub fn stratum(&self, w: &[f64]) -> usize {
        (self.rule)(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    pub subjects: Vec<SubjectRecord>,
    /// Design allocation probability.
    pub pi: f64,
    pub scheme: Scheme,
    /// Number of strata, carried explicitly so empty strata are representable.
    pub n_strata: usize,
}

impl TrialDataset {
    pub fn new(subjects: Vec<SubjectRecord>, pi: f64, scheme: Scheme, n_strata: usize) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidParameter(format!("pi must lie in (0,1), got {pi}")));
        }
        if n_strata == 0 {
            return Err(Error::InvalidParameter("n_strata must be at least 1".into()));
        }
        for (i, s) in subjects.iter().enumerate() {
            if s.stratum == 0 || s.stratum > n_strata {
                return Err(Error::Data(format!(
                    "subject {i}: stratum {} outside 1..={n_strata}",
                    s.stratum
                )));
            }
            if s.assignment > 1 {
                return Err(Error::Data(format!("subject {i}: assignment {} not in {{0,1}}", s.assignment)));
            }
        }
        Ok(Self { subjects, pi, scheme, n_strata })
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.subjects.first().map_or(0, |s| s.covariates.len())
    }

    /// (controls, treated)
    pub fn arm_counts(&self) -> (usize, usize) {
        let n1 = self.subjects.iter().filter(|s| s.assignment == 1).count();
        (self.n() - n1, n1)
    }

    /// Errors unless both arms contain at least one subject.
    pub fn require_both_arms(&self) -> Result<()> {
        let (n0, n1) = self.arm_counts();
        if n1 == 0 {
            return Err(Error::EmptyArm { arm: 1 });
        }
        if n0 == 0 {
            return Err(Error::EmptyArm { arm: 0 });
        }
        Ok(())
    }

    /// Returns (Ybar_0, Ybar_1).
    pub fn arm_means(&self) -> Result<(f64, f64)> {
        self.require_both_arms()?;
        let mut sum = [0.0f64; 2];
        let mut cnt = [0usize; 2];
        for s in &self.subjects {
            sum[s.assignment as usize] += s.outcome;
            cnt[s.assignment as usize] += 1;
        }
        Ok((sum[0] / cnt[0] as f64, sum[1] / cnt[1] as f64))
    }

    pub fn stratum_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_strata];
        for s in &self.subjects {
            counts[s.stratum - 1] += 1;
        }
        counts
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.outcome).collect()
    }

    pub fn assignments(&self) -> Vec<u8> {
        self.subjects.iter().map(|s| s.assignment).collect()
    }

    pub fn strata(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.stratum).collect()
    }

    /// Subset of subjects by index, keeping design metadata.
    pub fn subset(&self, idx: &[usize]) -> TrialDataset {
        TrialDataset {
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
            pi: self.pi,
            scheme: self.scheme,
            n_strata: self.n_strata,
        }
    }

    /// Same subjects with outcomes replaced.
    pub fn with_outcomes(&self, y: &[f64]) -> TrialDataset {
        let mut out = self.clone();
        for (s, &v) in out.subjects.iter_mut().zip(y) {
            s.outcome = v;
        }
        out
    }
}

/// Recomputes every stratum label from `map` and sets `K` to its range size.
pub fn attach_strata(dataset: &TrialDataset, map: &StratumMap) -> TrialDataset {
    let mut out = dataset.clone();
    for s in &mut out.subjects {
        s.stratum = map.stratum(&s.covariates);
    }
    out.n_strata = map.n_strata();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimandValue {
    pub delta: f64,
    pub mu1: f64,
    pub mu0: f64,
}

impl EstimandValue {
    pub fn from_means(mu1: f64, mu0: f64, link: &LinkSpec) -> Self {
        Self { delta: link.g(mu1) - link.g(mu0), mu1, mu0 }
    }
}
