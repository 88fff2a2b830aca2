//! Investment-advice domain: return-of-investment formulas for savings
//! accounts and CDBs, result comparison, and the local definition and news
//! corpora.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;
use crate::nlu::topic::words;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("initial value must be positive, got {0}")]
    NonPositive(f64),
    #[error("no results to compare")]
    EmptyResults,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

/// Rates for one investment period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsParams {
    pub r: f64,
    pub tr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdbParams {
    pub id: f64,
    pub p: f64,
    pub d: u32,
    pub it: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdbMode {
    /// IV + IV·ID·P^d − IT
    #[default]
    Verbatim,
    /// IV·(1 + ID·P)^(d/252) − IT
    Compounding,
}

/// IV + IV·(R + TR)
pub fn roi_savings(iv: f64, params: &SavingsParams) -> Result<f64, DomainError> {
    if iv.is_nan() || iv <= 0.0 {
        return Err(DomainError::NonPositive(iv));
    }
    if params.r < 0.0 || params.tr < 0.0 {
        return Err(DomainError::InvalidParams("savings rates must be non-negative".into()));
    }
    Ok(iv + iv * (params.r + params.tr))
}

pub fn roi_cdb(iv: f64, params: &CdbParams) -> Result<f64, DomainError> {
    roi_cdb_with(iv, params, CdbMode::Verbatim)
}

pub fn roi_cdb_with(iv: f64, params: &CdbParams, mode: CdbMode) -> Result<f64, DomainError> {
    if iv.is_nan() || iv <= 0.0 {
        return Err(DomainError::NonPositive(iv));
    }
    if params.p.is_nan() || params.p <= 0.0 || params.d < 1 || params.it < 0.0 {
        return Err(DomainError::InvalidParams(format!("{params:?}")));
    }
    Ok(match mode {
        CdbMode::Verbatim => iv + (iv * params.id * params.p.powi(params.d as i32)) - params.it,
        CdbMode::Compounding => iv * (1.0 + params.id * params.p).powf(params.d as f64 / 252.0) - params.it,
    })
}

/// Rates profile. Savings rates apply per `savings_basis_days` and are
/// scaled by the number of whole bases in the period; ID is annual and
/// scaled by d/365; income tax is a flat share of the CDB earnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesProfile {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "TR")]
    pub tr: f64,
    #[serde(default = "default_basis")]
    pub savings_basis_days: f64,
    #[serde(rename = "ID")]
    pub id: f64,
    #[serde(rename = "P_default")]
    pub p_default: f64,
    #[serde(default)]
    pub mode: CdbMode,
    #[serde(default)]
    pub income_tax_rate: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_basis() -> f64 {
    30.0
}

fn default_epsilon() -> f64 {
    0.01
}

impl RatesProfile {
    pub fn from_json(src: &str) -> Result<Self, ConfigError> {
        let p: RatesProfile =
            serde_json::from_str(src).map_err(|e| ConfigError::Parse { line: e.line(), message: e.to_string() })?;
        if p.r < 0.0
            || p.tr < 0.0
            || p.id < 0.0
            || p.p_default.is_nan()
            || p.p_default <= 0.0
            || p.savings_basis_days.is_nan()
            || p.savings_basis_days <= 0.0
        {
            return Err(ConfigError::Invalid(format!("rates profile {p:?}")));
        }
        Ok(p)
    }

    pub fn savings_params(&self, days: f64) -> SavingsParams {
        let periods = days / self.savings_basis_days;
        SavingsParams { r: self.r * periods, tr: self.tr * periods }
    }

    pub fn savings(&self, iv: f64, days: f64) -> Result<f64, DomainError> {
        roi_savings(iv, &self.savings_params(days))
    }

    pub fn cdb(&self, iv: f64, days: f64) -> Result<f64, DomainError> {
        let d = days.round().max(1.0) as u32;
        let id = self.id * days / 365.0;
        let gross = iv * id * self.p_default.powi(d as i32);
        let params = CdbParams { id, p: self.p_default, d, it: gross * self.income_tax_rate };
        roi_cdb_with(iv, &params, self.mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub option: String,
    pub final_amount: f64,
    pub initial_value: f64,
    pub days: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    Better { option: String, amount: f64, gap: f64 },
    NoDifference { gap: f64 },
    ReportOnly { option: String, amount: f64 },
}

impl Comparison {
    pub fn template_id(&self) -> &'static str {
        match self {
            Comparison::Better { .. } => "compare_better",
            Comparison::NoDifference { .. } => "compare_no_difference",
            Comparison::ReportOnly { .. } => "compare_report",
        }
    }
}

/// Recommends the largest final amount unless the relative gap between the
/// best and the runner-up is within `epsilon`. Equal amounts keep the
/// earlier result.
pub fn compare_results(results: &[SimulationResult], epsilon: f64) -> Result<Comparison, DomainError> {
    let best = results
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.final_amount.total_cmp(&b.1.final_amount).then(b.0.cmp(&a.0)))
        .map(|(_, r)| r)
        .ok_or(DomainError::EmptyResults)?;
    if results.len() == 1 {
        return Ok(Comparison::ReportOnly { option: best.option.clone(), amount: best.final_amount });
    }
    let runner_up =
        results.iter().filter(|r| !std::ptr::eq(*r, best)).map(|r| r.final_amount).fold(f64::NEG_INFINITY, f64::max);
    let gap = (best.final_amount - runner_up).abs() / best.final_amount.abs().max(f64::MIN_POSITIVE);
    if gap <= epsilon {
        Ok(Comparison::NoDifference { gap })
    } else {
        Ok(Comparison::Better { option: best.option.clone(), amount: best.final_amount, gap })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Definition {
    pub term: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsDoc {
    pub id: u64,
    pub text: String,
    #[serde(default)]
    pub source: String,
}

pub fn parse_jsonl<T: serde::de::DeserializeOwned>(src: &str) -> Result<Vec<T>, ConfigError> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ConfigError::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

fn phrase_in(tokens: &[String], phrase: &str) -> Option<usize> {
    let p = words(phrase);
    (!p.is_empty() && tokens.windows(p.len()).any(|w| w == p.as_slice())).then_some(p.len())
}

/// Entry whose term or alias occurs in the query (case-folded, whole words).
/// The longest matching phrase wins; ties go to the earlier entry.
pub fn lookup_definition<'a>(query: &str, corpus: &'a [Definition]) -> Option<&'a Definition> {
    let tokens = words(query);
    let mut best: Option<(usize, &Definition)> = None;
    for d in corpus {
        let len = std::iter::once(&d.term).chain(&d.aliases).filter_map(|t| phrase_in(&tokens, t)).max();
        if let Some(len) = len {
            if best.is_none_or(|(b, _)| len > b) {
                best = Some((len, d));
            }
        }
    }
    best.map(|(_, d)| d)
}

/// Document sharing the most distinct query tokens; ties go to the smallest
/// id. Zero overlap yields nothing.
pub fn search_news<'a>(query: &str, corpus: &'a [NewsDoc]) -> Option<&'a NewsDoc> {
    let mut q = words(query);
    q.sort();
    q.dedup();
    corpus
        .iter()
        .map(|doc| {
            let dt = words(&doc.text);
            (q.iter().filter(|t| dt.contains(t)).count(), doc)
        })
        .filter(|(score, _)| *score > 0)
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.id.cmp(&a.1.id)))
        .map(|(_, d)| d)
}
