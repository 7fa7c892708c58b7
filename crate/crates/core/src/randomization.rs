//! Treatment assignment under simple and stratified permuted-block
//! randomization.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Scheme, TrialDataset};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizationPlan {
    pub scheme: Scheme,
    pub pi: f64,
    /// Only used by the stratified scheme.
    pub block_size: usize,
    pub seed: u64,
}

impl RandomizationPlan {
    pub fn simple(pi: f64, seed: u64) -> Self {
        Self { scheme: Scheme::Simple, pi, block_size: 0, seed }
    }

    pub fn stratified(pi: f64, block_size: usize, seed: u64) -> Self {
        Self { scheme: Scheme::StratifiedBlock, pi, block_size, seed }
    }

    /// Number of treated subjects per completed block.
    pub fn treated_per_block(&self) -> Result<usize> {
        check_pi(self.pi)?;
        if self.block_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "block size must be at least 2, got {}",
                self.block_size
            )));
        }
        let t = self.pi * self.block_size as f64;
        let r = t.round();
        if (t - r).abs() > 1e-9 || r < 1.0 || r >= self.block_size as f64 {
            return Err(Error::InvalidParameter(format!(
                "pi * block_size = {t} must be an integer strictly between 0 and {}",
                self.block_size
            )));
        }
        Ok(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::Simple => check_pi(self.pi),
            Scheme::StratifiedBlock => self.treated_per_block().map(|_| ()),
        }
    }
}

fn check_pi(pi: f64) -> Result<()> {
    if pi > 0.0 && pi < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("pi must lie in (0,1), got {pi}")))
    }
}

/// Independent Bernoulli(pi) assignments from the seeded stream.
pub fn simple_randomize(n: usize, pi: f64, seed: u64) -> Result<Vec<u8>> {
    check_pi(pi)?;
    let mut rng = rng::substream(seed, &[tag::ASSIGNMENT]);
    Ok((0..n).map(|_| u8::from(rng.random::<f64>() < pi)).collect())
}

/// Permuted-block assignments within strata.
///
/// Subjects are processed in the given order. Within each stratum, consecutive
/// runs of `block_size` subjects form a block whose assignments are a uniform
/// permutation of `pi * block_size` ones; a trailing incomplete block takes the
/// leading entries of one such permutation. Each stratum label draws from its
/// own substream.
pub fn stratified_block_randomize(strata: &[usize], plan: &RandomizationPlan) -> Result<Vec<u8>> {
    if plan.scheme != Scheme::StratifiedBlock {
        return Err(Error::InvalidParameter("plan scheme is not stratified_block".into()));
    }
    let ones = plan.treated_per_block()?;
    let b = plan.block_size;
    let template: Vec<u8> = (0..b).map(|i| u8::from(i < ones)).collect();

    struct StratumState {
        rng: rng::Stream,
        block: Vec<u8>,
        pos: usize,
    }
    let mut states: Vec<Option<StratumState>> = Vec::new();
    let mut out = Vec::with_capacity(strata.len());
    for &s in strata {
        if s >= states.len() {
            states.resize_with(s + 1, || None);
        }
        let st = states[s].get_or_insert_with(|| StratumState {
            rng: rng::substream(plan.seed, &[tag::ASSIGNMENT, tag::STRATUM, s as u64]),
            block: template.clone(),
            pos: b,
        });
        if st.pos == b {
            st.block.copy_from_slice(&template);
            st.block.shuffle(&mut st.rng);
            st.pos = 0;
        }
        out.push(st.block[st.pos]);
        st.pos += 1;
    }
    Ok(out)
}

/// Dispatches on the plan's scheme.
pub fn randomize(strata: &[usize], plan: &RandomizationPlan) -> Result<Vec<u8>> {
    match plan.scheme {
        Scheme::Simple => simple_randomize(strata.len(), plan.pi, plan.seed),
        Scheme::StratifiedBlock => stratified_block_randomize(strata, plan),
    }
}

/// Per-stratum `n_treated - pi * n_stratum`, for labels `1..=K`.
pub fn assignment_imbalance(dataset: &TrialDataset) -> Vec<f64> {
    let mut treated = vec![0.0; dataset.n_strata];
    let mut total = vec![0.0; dataset.n_strata];
    for s in &dataset.subjects {
        treated[s.stratum - 1] += s.a();
        total[s.stratum - 1] += 1.0;
    }
    treated.iter().zip(&total).map(|(t, n)| t - dataset.pi * n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;

    #[test]
    fn degenerate_probabilities() {
        assert_eq!(simple_randomize(5, 1.0 - 1e-15, 3).unwrap(), vec![1; 5]);
        assert_eq!(simple_randomize(5, 1e-15, 3).unwrap(), vec![0; 5]);
    }

    #[test]
    fn simple_rejects_bad_pi() {
        assert!(simple_randomize(5, 0.0, 1).is_err());
        assert!(simple_randomize(5, 1.0, 1).is_err());
    }

    #[test]
    fn simple_mean_concentrates() {
        // Binomial sd at n = 1e5 is 0.00158, so 0.01 is a 6.3 sigma bound.
        for seed in [1, 2, 3] {
            let a = simple_randomize(100_000, 0.5, seed).unwrap();
            let m = a.iter().map(|&x| f64::from(x)).sum::<f64>() / 1e5;
            assert!((m - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn two_complete_blocks() {
        let plan = RandomizationPlan::stratified(0.5, 4, 11);
        for seed in 0..50 {
            let plan = RandomizationPlan { seed, ..plan };
            let a = stratified_block_randomize(&[1; 8], &plan).unwrap();
            assert_eq!(a.iter().map(|&x| x as usize).sum::<usize>(), 4);
            assert_eq!(a[..4].iter().map(|&x| x as usize).sum::<usize>(), 2);
        }
    }

    #[test]
    fn truncated_block_distribution() {
        // Oracle: the last two positions of a uniform arrangement of {1,1,0,0}
        // hold 0, 1 or 2 ones with probabilities 1/6, 4/6, 1/6, so the total
        // treated count is 2, 3 or 4 with those probabilities.
        let mut arrangements = Vec::new();
        for mask in 0u8..16 {
            if mask.count_ones() == 2 {
                arrangements.push(mask);
            }
        }
        let exact: Vec<f64> = (0..=2)
            .map(|k| arrangements.iter().filter(|m| (*m & 0b11).count_ones() == k).count() as f64 / 6.0)
            .collect();
        assert_eq!(exact, vec![1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0]);

        let reps = 30_000;
        let mut counts = [0usize; 3];
        for seed in 0..reps {
            let plan = RandomizationPlan::stratified(0.5, 4, seed as u64);
            let a = stratified_block_randomize(&[1; 6], &plan).unwrap();
            let total: usize = a.iter().map(|&x| x as usize).sum();
            assert!((2..=4).contains(&total));
            counts[total - 2] += 1;
        }
        for k in 0..3 {
            let p = counts[k] as f64 / reps as f64;
            let se = (exact[k] * (1.0 - exact[k]) / reps as f64).sqrt();
            assert!((p - exact[k]).abs() < 5.0 * se, "k={k} p={p}");
        }
    }

    #[test]
    fn one_block_per_stratum() {
        let strata = [1, 2, 3, 4, 4, 3, 2, 1, 1, 2, 3, 4, 1, 2, 3, 4];
        let a = stratified_block_randomize(&strata, &RandomizationPlan::stratified(0.5, 4, 5)).unwrap();
        for k in 1..=4 {
            let t: u8 = strata.iter().zip(&a).filter(|(s, _)| **s == k).map(|(_, &x)| x).sum();
            assert_eq!(t, 2);
        }
    }

    #[test]
    fn non_integral_block_rejected() {
        let plan = RandomizationPlan::stratified(0.3, 4, 1);
        assert!(stratified_block_randomize(&[1, 1], &plan).is_err());
    }

    #[test]
    fn adding_a_stratum_leaves_others_unchanged() {
        let plan = RandomizationPlan::stratified(0.5, 4, 99);
        let a = stratified_block_randomize(&[1, 1, 1, 1, 1, 1], &plan).unwrap();
        let b = stratified_block_randomize(&[1, 2, 1, 2, 1, 1, 2, 1, 1], &plan).unwrap();
        let b1: Vec<u8> = [0, 2, 4, 5, 7, 8].iter().map(|&i| b[i]).collect();
        assert_eq!(a, b1);
    }

    #[test]
    fn marginal_probability_is_pi() {
        // Chi-square over positions at 1e4 replications, alpha = 0.001.
        let strata = [1, 2, 1, 1, 2, 1, 2, 2, 1, 1];
        let reps = 10_000;
        let mut treated = vec![0usize; strata.len()];
        for seed in 0..reps {
            let a = stratified_block_randomize(&strata, &RandomizationPlan::stratified(0.5, 4, seed)).unwrap();
            for (t, &x) in treated.iter_mut().zip(&a) {
                *t += x as usize;
            }
        }
        let exp = reps as f64 * 0.5;
        let chi2: f64 = treated
            .iter()
            .map(|&t| {
                let t = t as f64;
                (t - exp).powi(2) / exp + ((reps as f64 - t) - exp).powi(2) / exp
            })
            .sum();
        // 0.999 quantile of chi-square with 10 degrees of freedom.
        assert!(chi2 < 29.588, "chi2 = {chi2}");
    }

    #[test]
    fn imbalance_examples() {
        let mk = |s: usize, a: u8| SubjectRecord::new(vec![0.0], s, a, 0.0);
        let subjects = vec![
            mk(1, 1), mk(1, 1), mk(1, 0), mk(1, 0),
            mk(2, 1), mk(2, 1), mk(2, 1), mk(2, 1), mk(2, 0), mk(2, 0),
        ];
        let ds = TrialDataset::new(subjects, 0.5, Scheme::StratifiedBlock, 3).unwrap();
        assert_eq!(assignment_imbalance(&ds), vec![0.0, 1.0, 0.0]);
    }
}
