//! Choosing K. Each policy is a [`KSearch`] registered by name in a
//! [`SearchRegistry`] so the CLI (or a caller) can pick one at runtime.
//!
//! Built-ins:
//! - `accuracy` (alias `a`): smallest candidate K whose score is at least the
//!   original model's score. Every candidate is evaluated.
//! - `compression` (alias `c`): walks an increasing schedule and stops at the
//!   first K whose score is within `epsilon` of the original.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::blocking::breakup;
use crate::error::{Error, Result};
use crate::eval::Evaluator;
use crate::model::ModelBundle;
use crate::pipeline::{compress_and_evaluate, CompressParams, CompressionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Satisfied,
    /// No candidate matched the original score; the best-scoring K is returned.
    NotLossless,
    /// The schedule ran out before the tolerance was met; the best-scoring K is returned.
    ToleranceUnmet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub strategy: String,
    pub best_k: usize,
    pub status: SearchStatus,
    pub baseline_metric: f64,
    /// One report per evaluated candidate, in schedule order.
    pub reports: Vec<CompressionReport>,
}

impl SearchOutcome {
    pub fn best_report(&self) -> &CompressionReport {
        self.reports.iter().find(|r| r.k == self.best_k).expect("best K was evaluated")
    }
}

/// Inputs shared by every policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPolicy {
    /// Tolerated drop in score (percentage points for accuracy).
    pub epsilon: f64,
    /// Strictly increasing K values; `None` uses the policy's default schedule.
    pub k_candidates: Option<Vec<usize>>,
}

impl SearchPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if let Some(ks) = &self.k_candidates {
            if ks.is_empty() {
                return Err(Error::InvalidArgument("K candidate list is empty".into()));
            }
            if ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "K candidates must be >= 1 and strictly increasing: {ks:?}"
                )));
            }
        }
        Ok(())
    }
}

pub trait KSearch: Send + Sync {
    fn name(&self) -> &'static str;

    fn default_schedule(&self) -> Vec<usize>;

    fn search(
        &self,
        model: &ModelBundle,
        params: &CompressParams,
        evaluator: &dyn Evaluator,
        candidates: &[usize],
    ) -> Result<SearchOutcome>;
}

/// Powers of two from 4 to 256.
pub fn power_of_two_schedule() -> Vec<usize> {
    (2..=8).map(|e| 1usize << e).collect()
}

/// Every K from 2 to 256.
pub fn dense_schedule() -> Vec<usize> {
    (2..=256).collect()
}

fn best_scoring(reports: &[CompressionReport]) -> usize {
    let mut best = &reports[0];
    for r in &reports[1..] {
        if score(r) > score(best) {
            best = r;
        }
    }
    best.k
}

fn score(r: &CompressionReport) -> f64 {
    r.metric.as_ref().map_or(f64::NEG_INFINITY, |m| m.compressed)
}

pub struct AccuracyFirst;

impl KSearch for AccuracyFirst {
    fn name(&self) -> &'static str {
        "accuracy"
    }

    fn default_schedule(&self) -> Vec<usize> {
        power_of_two_schedule()
    }

    fn search(
        &self,
        model: &ModelBundle,
        params: &CompressParams,
        evaluator: &dyn Evaluator,
        candidates: &[usize],
    ) -> Result<SearchOutcome> {
        let baseline = evaluator.score(model)?;
        let reports = candidates
            .iter()
            .map(|&k| compress_and_evaluate(model, &params.with_k(k), evaluator, baseline).map(|r| r.1))
            .collect::<Result<Vec<_>>>()?;
        let (best_k, status) = match reports.iter().find(|r| score(r) >= baseline) {
            Some(r) => (r.k, SearchStatus::Satisfied),
            None => (best_scoring(&reports), SearchStatus::NotLossless),
        };
        Ok(SearchOutcome { strategy: self.name().into(), best_k, status, baseline_metric: baseline, reports })
    }
}

pub struct CompressionFirst {
    pub epsilon: f64,
}

impl KSearch for CompressionFirst {
    fn name(&self) -> &'static str {
        "compression"
    }

    fn default_schedule(&self) -> Vec<usize> {
        dense_schedule()
    }

    fn search(
        &self,
        model: &ModelBundle,
        params: &CompressParams,
        evaluator: &dyn Evaluator,
        candidates: &[usize],
    ) -> Result<SearchOutcome> {
        let baseline = evaluator.score(model)?;
        let mut reports = Vec::new();
        for &k in candidates {
            let (_, report) = compress_and_evaluate(model, &params.with_k(k), evaluator, baseline)?;
            let within = baseline - score(&report) <= self.epsilon;
            reports.push(report);
            if within {
                return Ok(SearchOutcome {
                    strategy: self.name().into(),
                    best_k: k,
                    status: SearchStatus::Satisfied,
                    baseline_metric: baseline,
                    reports,
                });
            }
        }
        Ok(SearchOutcome {
            strategy: self.name().into(),
            best_k: best_scoring(&reports),
            status: SearchStatus::ToleranceUnmet,
            baseline_metric: baseline,
            reports,
        })
    }
}

type Factory = Box<dyn Fn(&SearchPolicy) -> Box<dyn KSearch> + Send + Sync>;

/// Name -> policy constructor.
pub struct SearchRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for SearchRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl SearchRegistry {
    pub fn empty() -> Self {
        SearchRegistry { factories: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for name in ["accuracy", "a", "lego_a"] {
            r.register(name, |_| Box::new(AccuracyFirst));
        }
        for name in ["compression", "c", "lego_c"] {
            r.register(name, |p| Box::new(CompressionFirst { epsilon: p.epsilon }));
        }
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&SearchPolicy) -> Box<dyn KSearch> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, policy: &SearchPolicy) -> Result<Box<dyn KSearch>> {
        policy.validate()?;
        let f = self.factories.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown search mode {name:?} (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Ok(f(policy))
    }

    /// Builds the named policy and runs it. Candidates larger than the
    /// model's block count are dropped.
    pub fn run(
        &self,
        name: &str,
        policy: &SearchPolicy,
        model: &ModelBundle,
        params: &CompressParams,
        evaluator: &dyn Evaluator,
    ) -> Result<SearchOutcome> {
        let strategy = self.create(name, policy)?;
        let blocks = breakup(model, params.b)?.len();
        let candidates: Vec<usize> = policy
            .k_candidates
            .clone()
            .unwrap_or_else(|| strategy.default_schedule())
            .into_iter()
            .filter(|&k| k <= blocks)
            .collect();
        if candidates.is_empty() {
            return Err(Error::TooFewBlocks { k: policy.k_candidates.as_ref().map_or(2, |c| c[0]), blocks });
        }
        strategy.search(model, params, evaluator, &candidates)
    }
}

/// Accuracy-first search over `candidates`.
pub fn search_lego_a(
    model: &ModelBundle,
    params: &CompressParams,
    evaluator: &dyn Evaluator,
    candidates: &[usize],
) -> Result<SearchOutcome> {
    let policy = SearchPolicy { epsilon: 0.0, k_candidates: Some(candidates.to_vec()) };
    SearchRegistry::with_builtins().run("accuracy", &policy, model, params, evaluator)
}

/// Compression-first search with tolerance `epsilon` over the default 2..=256 schedule.
pub fn search_lego_c(
    model: &ModelBundle,
    params: &CompressParams,
    evaluator: &dyn Evaluator,
    epsilon: f64,
) -> Result<SearchOutcome> {
    let policy = SearchPolicy { epsilon, k_candidates: None };
    SearchRegistry::with_builtins().run("compression", &policy, model, params, evaluator)
}
