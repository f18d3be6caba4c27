use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::RankError;

/// Running statistic used to aggregate a document's batch positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    #[default]
    Mean,
    Median,
}

/// Estimator used to locate the partition point in a sorted score curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InflectionMethod {
    #[default]
    Elbow,
    Gap,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Median => "median",
        })
    }
}

impl FromStr for Statistic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            other => Err(format!("unknown statistic `{other}` (expected mean or median)")),
        }
    }
}

impl fmt::Display for InflectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Elbow => "elbow",
            Self::Gap => "gap",
        })
    }
}

impl FromStr for InflectionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "elbow" => Ok(Self::Elbow),
            "gap" => Ok(Self::Gap),
            other => Err(format!("unknown inflection method `{other}` (expected elbow or gap)")),
        }
    }
}

/// Parameters of a ranking run.
///
/// The defaults (`S = 10`, `T = 50`, `W = 5`) suit general-purpose corpora.
/// [`RankConfig::security_preset`] uses the smaller batch size that works
/// better for long decompiled-code documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    /// Documents per ranker call (`S`). Must fit in the model context.
    pub batch_size: usize,
    /// Upper bound on trials per iteration (`T`).
    pub max_trials: usize,
    /// Consecutive trials that must agree before convergence (`W`).
    pub stability_window: usize,
    pub statistic: Statistic,
    pub inflection_method: InflectionMethod,
    /// Allowed spread, in index units, between inflection points in the window.
    pub inflection_tolerance: usize,
    /// Maximum number of batches ranked at the same time.
    pub concurrency_cap: usize,
    pub rng_seed: u64,
    /// Extra attempts per batch after the first one fails.
    pub retry_limit: u32,
    /// Hard cap on ranker invocations for the whole run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_requests: Option<u64>,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            max_trials: 50,
            stability_window: 5,
            statistic: Statistic::Mean,
            inflection_method: InflectionMethod::Elbow,
            inflection_tolerance: 0,
            concurrency_cap: 1,
            rng_seed: 0,
            retry_limit: 3,
            max_requests: None,
        }
    }
}

impl RankConfig {
    /// Batch size 5 with the default trial budget.
    pub fn security_preset() -> Self {
        Self {
            batch_size: 5,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), RankError> {
        let fail = |msg: String| Err(RankError::InvalidConfig(msg));
        if self.batch_size < 2 {
            return fail(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if self.max_trials < 1 {
            return fail("max trials must be at least 1".into());
        }
        if self.stability_window < 2 {
            return fail(format!(
                "stability window must be at least 2, got {}",
                self.stability_window
            ));
        }
        if self.stability_window > self.max_trials {
            return fail(format!(
                "stability window {} exceeds max trials {}",
                self.stability_window, self.max_trials
            ));
        }
        if self.concurrency_cap < 1 {
            return fail("concurrency cap must be at least 1".into());
        }
        Ok(())
    }
}
