//! CSV ingestion of trial data and emission of result tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::data::{Scheme, SubjectRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::inference::EstimateReport;
use crate::sim::MetricsRow;
use crate::theory::IdentityCheckResult;

/// Column mapping for an input CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub outcomes: Vec<String>,
    pub treatment: String,
    pub stratum: String,
    /// Empty selects every column named `w<digits>`, in numeric order.
    pub covariates: Vec<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self { outcomes: vec!["y".into()], treatment: "a".into(), stratum: "s".into(), covariates: Vec::new() }
    }
}

/// Complete-case rows of an input CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisData {
    pub outcome_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// One vector per outcome column.
    pub outcomes: Vec<Vec<f64>>,
    pub assignments: Vec<u8>,
    /// Labels `1..=K` in sorted order of the raw stratum values.
    pub strata: Vec<usize>,
    pub stratum_labels: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
    pub dropped: usize,
}

impl AnalysisData {
    pub fn dataset(&self, outcome: usize, pi: f64, scheme: Scheme) -> Result<TrialDataset> {
        let subjects = (0..self.assignments.len())
            .map(|i| SubjectRecord::new(self.covariates[i].clone(), self.strata[i], self.assignments[i], self.outcomes[outcome][i]))
            .collect();
        TrialDataset::new(subjects, pi, scheme, self.stratum_labels.len())
    }
}

fn is_missing(v: &str) -> bool {
    matches!(v.trim(), "" | "NA" | "na" | "NaN" | "nan" | ".")
}

/// Reads a header-first CSV, dropping rows with any missing mapped field.
pub fn read_analysis_csv(reader: impl Read, map: &ColumnMap) -> Result<AnalysisData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let covariate_names: Vec<String> = if map.covariates.is_empty() {
        let mut w: Vec<(u32, String)> = headers
            .iter()
            .filter_map(|h| h.strip_prefix('w').and_then(|d| d.parse::<u32>().ok()).map(|k| (k, h.clone())))
            .collect();
        w.sort();
        w.into_iter().map(|(_, h)| h).collect()
    } else {
        map.covariates.clone()
    };
    let mut required: Vec<&str> = map.outcomes.iter().map(String::as_str).collect();
    required.push(&map.treatment);
    required.push(&map.stratum);
    required.extend(covariate_names.iter().map(String::as_str));
    let missing: Vec<String> = required.iter().filter(|c| find(c).is_none()).map(|c| c.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::Schema(missing));
    }
    let col = |name: &str| find(name).expect("checked above");
    let oc: Vec<usize> = map.outcomes.iter().map(|c| col(c)).collect();
    let wc: Vec<usize> = covariate_names.iter().map(|c| col(c)).collect();
    let (ac, sc) = (col(&map.treatment), col(&map.stratum));

    let mut outcomes = vec![Vec::new(); oc.len()];
    let mut assignments = Vec::new();
    let mut raw_strata = Vec::new();
    let mut covariates = Vec::new();
    let mut dropped = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let all: Vec<usize> = oc.iter().chain(&wc).copied().chain([ac, sc]).collect();
        if all.iter().any(|&j| is_missing(field(j))) {
            dropped += 1;
            continue;
        }
        let num = |j: usize| -> Result<f64> {
            field(j)
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("line {line}: column '{}' value '{}' is not numeric", headers[j], field(j))))
        };
        let a = match field(ac) {
            "0" => 0u8,
            "1" => 1u8,
            v => match v.parse::<f64>() {
                Ok(x) if x == 0.0 => 0,
                Ok(x) if x == 1.0 => 1,
                _ => return Err(Error::Data(format!("line {line}: treatment value '{v}' is not 0 or 1"))),
            },
        };
        for (k, &j) in oc.iter().enumerate() {
            outcomes[k].push(num(j)?);
        }
        covariates.push(wc.iter().map(|&j| num(j)).collect::<Result<Vec<f64>>>()?);
        assignments.push(a);
        raw_strata.push(field(sc).to_string());
    }

    // Numeric labels sort numerically, others lexically.
    let mut labels: Vec<String> = raw_strata.clone();
    labels.sort_by(|x, y| match (x.parse::<f64>(), y.parse::<f64>()) {
        (Ok(a), Ok(b)) => a.total_cmp(&b),
        _ => x.cmp(y),
    });
    labels.dedup();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i + 1)).collect();
    let strata = raw_strata.iter().map(|s| index[s.as_str()]).collect();
    Ok(AnalysisData {
        outcome_names: map.outcomes.clone(),
        covariate_names,
        outcomes,
        assignments,
        strata,
        stratum_labels: labels,
        covariates,
        dropped,
    })
}

/// Writes a dataset with columns `y, a, s, w1..wp`.
pub fn write_dataset_csv(ds: &TrialDataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "a".into(), "s".into()];
    header.extend((1..=ds.n_covariates()).map(|j| format!("w{j}")));
    w.write_record(&header)?;
    for s in &ds.subjects {
        let mut row = vec![format_full(s.outcome), s.assignment.to_string(), s.stratum.to_string()];
        row.extend(s.covariates.iter().map(|&x| format_full(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest text that parses back to exactly `x`.
pub fn format_full(x: f64) -> String {
    format!("{x:?}")
}

/// Six significant digits in the style of C's `%g`, locale independent.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..6).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{exp}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn csv_text(rows: Vec<Vec<String>>) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub const METRICS_HEADER: [&str; 18] = [
    "scenario", "outcome", "n", "replications", "scheme", "method", "bias", "sd", "re", "median_se", "cp", "se_type",
    "median_se_uncorrected", "cp_uncorrected", "median_se_corrected", "cp_corrected", "n_failed", "n_fallback",
];

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = vec![METRICS_HEADER.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        out.push(vec![
            r.scenario.to_string(),
            r.outcome.to_string(),
            r.n.to_string(),
            r.replications.to_string(),
            r.scheme.to_string(),
            r.method.to_string(),
            format_sig6(r.bias),
            format_sig6(r.sd),
            format_sig6(r.re),
            format_sig6(r.median_se),
            format_sig6(r.cp),
            if r.se_corrected { "corrected" } else { "uncorrected" }.into(),
            format_sig6(r.median_se_uncorrected),
            format_sig6(r.cp_uncorrected),
            format_sig6(r.median_se_corrected),
            format_sig6(r.cp_corrected),
            r.n_failed.to_string(),
            r.n_fallback.to_string(),
        ]);
    }
    csv_text(out)
}

/// Method rows with Bias/SD/RE/SE/CP grouped by scheme.
pub fn metrics_text(rows: &[MetricsRow]) -> String {
    let mut schemes: Vec<Scheme> = Vec::new();
    let mut methods = Vec::new();
    for r in rows {
        if !schemes.contains(&r.scheme) {
            schemes.push(r.scheme);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut s = String::new();
    if let Some(r) = rows.first() {
        s.push_str(&format!("Scenario {} ({}), n = {}, {} replicates\n", r.scenario, r.outcome, r.n, r.replications));
    }
    s.push_str(&format!("{:<8}", ""));
    for sch in &schemes {
        s.push_str(&format!(" | {:^34}", sch.to_string()));
    }
    s.push('\n');
    s.push_str(&format!("{:<8}", "method"));
    for _ in &schemes {
        s.push_str(&format!(" | {:>6} {:>6} {:>6} {:>6} {:>6}", "Bias", "SD", "RE", "SE", "CP"));
    }
    s.push('\n');
    for m in &methods {
        s.push_str(&format!("{:<8}", m.to_string()));
        for sch in &schemes {
            match rows.iter().find(|r| r.method == *m && r.scheme == *sch) {
                Some(r) => s.push_str(&format!(
                    " | {:>6.3} {:>6.3} {:>6.2} {:>6.3} {:>6.3}",
                    r.bias, r.sd, r.re, r.median_se, r.cp
                )),
                None => s.push_str(&format!(" | {:>34}", "")),
            }
        }
        s.push('\n');
    }
    let failed: usize = rows.iter().map(|r| r.n_failed).sum();
    let fallback: usize = rows.iter().map(|r| r.n_fallback).sum();
    if failed + fallback > 0 {
        s.push_str("\nnotes:\n");
        for r in rows.iter().filter(|r| r.n_failed + r.n_fallback > 0) {
            s.push_str(&format!(
                "  {} / {}: {} failed replicates excluded, {} regression fallbacks to emp\n",
                r.method, r.scheme, r.n_failed, r.n_fallback
            ));
        }
    }
    s
}

pub fn verify_csv(results: &[IdentityCheckResult]) -> String {
    let mut out = vec![vec!["name".into(), "lhs".into(), "rhs".into(), "mc_se".into(), "pass".into()]];
    for r in results {
        out.push(vec![
            format!("\"{}\"", r.name.replace('"', "\"\"")),
            format_sig6(r.lhs),
            format_sig6(r.rhs),
            format_sig6(r.mc_se),
            r.pass.to_string(),
        ]);
    }
    csv_text(out)
}

pub fn verify_text(results: &[IdentityCheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<width$}  {:>11} {:>11} {:>9}  {}\n", "name", "lhs", "rhs", "mc_se", "result");
    for r in results {
        s.push_str(&format!(
            "{:<width$}  {:>11.5} {:>11.5} {:>9.5}  {}\n",
            r.name,
            r.lhs,
            r.rhs,
            r.mc_se,
            if r.pass { "pass" } else { "FAIL" }
        ));
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    s.push_str(&format!("\n{} checks, {} failed\n", results.len(), failed));
    s
}

/// One analysed outcome: method reports (or the error text) in order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisEntry {
    pub outcome: String,
    pub n: usize,
    pub method: String,
    pub result: std::result::Result<(EstimateReport, bool, bool), String>,
}

pub const ANALYSIS_HEADER: [&str; 11] = [
    "outcome", "method", "n", "estimate", "se_uncorrected", "se_corrected", "se_used", "ci_lower", "ci_upper",
    "fallback", "error",
];

/// Rows of point estimates with both standard errors; the interval uses
/// the standard error named in `se_used`.
pub fn analysis_csv(entries: &[AnalysisEntry]) -> String {
    let mut out = vec![ANALYSIS_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for e in entries {
        let row = match &e.result {
            Ok((r, corrected, fallback)) => {
                let ci = if *corrected { r.ci_corrected } else { r.ci_uncorrected };
                vec![
                    e.outcome.clone(),
                    e.method.clone(),
                    e.n.to_string(),
                    format_sig6(r.estimate.delta_hat),
                    format_sig6(r.uncorrected.se),
                    format_sig6(r.corrected.se),
                    if *corrected { "corrected" } else { "uncorrected" }.into(),
                    format_sig6(ci.0),
                    format_sig6(ci.1),
                    fallback.to_string(),
                    String::new(),
                ]
            }
            Err(msg) => {
                let mut v = vec![e.outcome.clone(), e.method.clone(), e.n.to_string()];
                v.extend(["NaN", "NaN", "NaN", "", "NaN", "NaN", "false"].iter().map(|s| s.to_string()));
                v.push(format!("\"{}\"", msg.replace('"', "\"\"")));
                v
            }
        };
        out.push(row);
    }
    csv_text(out)
}

pub fn analysis_text(entries: &[AnalysisEntry], level: f64) -> String {
    let mut s = format!(
        "{:<12} {:<8} {:>5} {:>9} {:>11} {:>11}  {:>21}\n",
        "outcome",
        "method",
        "n",
        "estimate",
        "SE uncorr.",
        "SE corr.",
        format!("{:.0}% CI", 100.0 * level)
    );
    for e in entries {
        match &e.result {
            Ok((r, corrected, _)) => {
                let ci = if *corrected { r.ci_corrected } else { r.ci_uncorrected };
                s.push_str(&format!(
                    "{:<12} {:<8} {:>5} {:>9.3} {:>11.3} {:>11.3}  ({:>8.3}, {:>8.3})\n",
                    e.outcome, e.method, e.n, r.estimate.delta_hat, r.uncorrected.se, r.corrected.se, ci.0, ci.1
                ));
            }
            Err(msg) => s.push_str(&format!("{:<12} {:<8} {:>5} failed: {msg}\n", e.outcome, e.method, e.n)),
        }
    }
    s
}
