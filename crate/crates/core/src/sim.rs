//! Monte Carlo campaigns over the simulation scenarios.
//!
//! Replicate `r` draws its covariates and potential outcomes from the
//! substream `(seed, COVARIATES, r)`, so the simple and stratified arms of a
//! campaign analyse the same subjects and differ only in treatment
//! assignment. The RE reference (empirical estimator under simple
//! randomization) is therefore paired with every cell.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::data::{Scheme, SubjectRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::methods::{evaluate_methods, MethodOptions, MethodOutcome, MethodSpec};
use crate::randomization::{randomize, RandomizationPlan};
use crate::rng::{derive_seed, substream, tag};
use crate::scenario::{self, sample_covariates, sample_outcome, OutcomeType, Scenario, TrueDelta};
use crate::stats::{lower_median, mean, sample_variance};

/// One cell's data-generating specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub outcome: OutcomeType,
    pub n: usize,
    pub replications: usize,
    pub plan: RandomizationPlan,
    pub seed: u64,
}

fn scheme_code(s: Scheme) -> u64 {
    match s {
        Scheme::Simple => 0,
        Scheme::StratifiedBlock => 1,
    }
}

/// Draws the `replicate`-th trial. Identical inputs give a bitwise identical
/// dataset; changing only the scheme keeps `W`, `Y(1)` and `Y(0)`.
pub fn generate_trial(spec: &ScenarioSpec, replicate: usize) -> Result<TrialDataset> {
    spec.plan.validate()?;
    let map = scenario::strata();
    let mut rng = substream(spec.seed, &[tag::COVARIATES, replicate as u64]);
    let mut ws = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let w = sample_covariates(&mut rng);
        let y1 = sample_outcome(spec.scenario, spec.outcome, &w, 1.0, &mut rng);
        let y0 = sample_outcome(spec.scenario, spec.outcome, &w, 0.0, &mut rng);
        ws.push(w);
        ys.push((y0, y1));
    }
    let strata: Vec<usize> = ws.iter().map(|w| map.stratum(w)).collect();
    let plan = RandomizationPlan { seed: derive_seed(spec.seed, &[tag::ASSIGNMENT, replicate as u64]), ..spec.plan };
    let a = randomize(&strata, &plan)?;
    let subjects = (0..spec.n)
        .map(|i| {
            let y = if a[i] == 1 { ys[i].1 } else { ys[i].0 };
            SubjectRecord::new(ws[i].to_vec(), strata[i], a[i], y)
        })
        .collect();
    TrialDataset::new(subjects, spec.plan.pi, spec.plan.scheme, map.n_strata())
}

pub fn true_delta(scenario: Scenario, outcome: OutcomeType) -> TrueDelta {
    scenario::true_delta(scenario, outcome)
}

/// A full campaign: every method under every listed scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub scenario: Scenario,
    pub outcome: OutcomeType,
    pub n: usize,
    pub replications: usize,
    pub schemes: Vec<Scheme>,
    pub block_size: usize,
    pub pi: f64,
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    pub options: MethodOptions,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub progress: bool,
}

impl CampaignSpec {
    /// Simulation defaults: `pi = 1/2`, blocks of four, both schemes, all six
    /// methods with the standard super learner and five-fold cross-fitted
    /// variances.
    pub fn new(scenario: Scenario, outcome: OutcomeType, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            scenario,
            outcome,
            n,
            replications,
            schemes: vec![Scheme::Simple, Scheme::StratifiedBlock],
            block_size: 4,
            pi: 0.5,
            seed,
            methods: MethodSpec::ALL.to_vec(),
            options: MethodOptions::new(outcome.link(), outcome.family()),
            workers: None,
            progress: false,
        }
    }

    pub fn scenario_spec(&self, scheme: Scheme) -> ScenarioSpec {
        let plan = match scheme {
            Scheme::Simple => RandomizationPlan::simple(self.pi, self.seed),
            Scheme::StratifiedBlock => RandomizationPlan::stratified(self.pi, self.block_size, self.seed),
        };
        ScenarioSpec {
            scenario: self.scenario,
            outcome: self.outcome,
            n: self.n,
            replications: self.replications,
            plan,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::Config(format!("replications must be at least 2, got {}", self.replications)));
        }
        if self.n < 4 {
            return Err(Error::Config(format!("n must be at least 4, got {}", self.n)));
        }
        if self.schemes.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("at least one scheme and one method are required".into()));
        }
        if !(self.options.level > 0.0 && self.options.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0,1), got {}", self.options.level)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        for s in &self.schemes {
            self.scenario_spec(*s).plan.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Summary of one (method, scheme) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: Scenario,
    pub outcome: OutcomeType,
    pub method: MethodSpec,
    pub scheme: Scheme,
    pub n: usize,
    pub replications: usize,
    pub bias: f64,
    pub sd: f64,
    pub re: f64,
    /// Lower median of the protocol standard error.
    pub median_se: f64,
    /// Coverage of Wald intervals built from the protocol standard error.
    pub cp: f64,
    pub se_corrected: bool,
    pub median_se_uncorrected: f64,
    pub cp_uncorrected: f64,
    pub median_se_corrected: f64,
    pub cp_corrected: f64,
    pub n_failed: usize,
    pub n_fallback: usize,
}

/// Per-replicate results: one entry per scheme, each with one result per
/// method; plus the paired reference estimate.
struct Replicate {
    cells: Vec<Vec<Option<MethodOutcome>>>,
    reference: Option<f64>,
}

fn run_replicate(spec: &CampaignSpec, r: usize) -> Replicate {
    let mut reference = None;
    let mut cells = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let ss = spec.scenario_spec(scheme);
        let seed = derive_seed(spec.seed, &[tag::LEARNING, r as u64, scheme_code(scheme)]);
        let outcomes: Vec<Option<MethodOutcome>> = match generate_trial(&ss, r) {
            Ok(ds) => evaluate_methods(&ds, &spec.methods, &spec.options, seed).into_iter().map(Result::ok).collect(),
            Err(_) => vec![None; spec.methods.len()],
        };
        if scheme == Scheme::Simple {
            if let Some(i) = spec.methods.iter().position(|&m| m == MethodSpec::Emp) {
                reference = outcomes[i].as_ref().map(|o| o.report.estimate.delta_hat);
            }
        }
        cells.push(outcomes);
    }
    if reference.is_none() {
        // Reference not among the computed cells: evaluate it on the paired
        // simple-randomization trial.
        let ss = spec.scenario_spec(Scheme::Simple);
        reference = generate_trial(&ss, r).ok().and_then(|ds| {
            crate::estimators::empirical_estimate(&ds, &spec.options.link).ok().map(|e| e.delta_hat)
        });
    }
    Replicate { cells, reference }
}

fn covers(ci: (f64, f64), truth: f64) -> f64 {
    f64::from(u8::from(ci.0 <= truth && truth <= ci.1))
}

/// Runs the campaign and summarises each (scheme, method) cell, schemes in
/// the order given and methods within each scheme.
pub fn run_campaign(spec: &CampaignSpec) -> Result<Vec<MetricsRow>> {
    spec.validate()?;
    let truth = true_delta(spec.scenario, spec.outcome).value.delta;
    let done = AtomicUsize::new(0);
    let work = || -> Vec<Replicate> {
        (0..spec.replications)
            .into_par_iter()
            .map(|r| {
                let out = run_replicate(spec, r);
                if spec.progress {
                    let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                    if k.is_multiple_of((spec.replications / 10).max(1)) || k == spec.replications {
                        eprintln!("  {k}/{} replicates", spec.replications);
                    }
                }
                out
            })
            .collect()
    };
    let reps = match spec.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(work),
        None => work(),
    };

    let refs: Vec<f64> = reps.iter().filter_map(|r| r.reference).collect();
    let ref_var = sample_variance(&refs);
    let mut rows = Vec::new();
    for (si, &scheme) in spec.schemes.iter().enumerate() {
        for (mi, &method) in spec.methods.iter().enumerate() {
            let ok: Vec<&MethodOutcome> = reps.iter().filter_map(|r| r.cells[si][mi].as_ref()).collect();
            let est: Vec<f64> = ok.iter().map(|o| o.report.estimate.delta_hat).collect();
            let se_u: Vec<f64> = ok.iter().map(|o| o.report.uncorrected.se).collect();
            let se_c: Vec<f64> = ok.iter().map(|o| o.report.corrected.se).collect();
            let cp_u = mean(&ok.iter().map(|o| covers(o.report.ci_uncorrected, truth)).collect::<Vec<_>>());
            let cp_c = mean(&ok.iter().map(|o| covers(o.report.ci_corrected, truth)).collect::<Vec<_>>());
            let corrected = method.uses_corrected_se(scheme);
            let var = sample_variance(&est);
            let is_reference = scheme == Scheme::Simple && method == MethodSpec::Emp;
            rows.push(MetricsRow {
                scenario: spec.scenario,
                outcome: spec.outcome,
                method,
                scheme,
                n: spec.n,
                replications: spec.replications,
                bias: mean(&est) - truth,
                sd: var.sqrt(),
                re: if is_reference { 1.0 } else { ref_var / var },
                median_se: if corrected { lower_median(&se_c) } else { lower_median(&se_u) },
                cp: if corrected { cp_c } else { cp_u },
                se_corrected: corrected,
                median_se_uncorrected: lower_median(&se_u),
                cp_uncorrected: cp_u,
                median_se_corrected: lower_median(&se_c),
                cp_corrected: cp_c,
                n_failed: spec.replications - ok.len(),
                n_fallback: ok.iter().filter(|o| o.fallback).count(),
            });
        }
    }
    Ok(rows)
}
