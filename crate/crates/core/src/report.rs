use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::RankConfig;
use crate::convergence::Inflection;
use crate::engine::{BatchExplanation, ConvergenceReason, IterationResult, RankOutcome, RankedDocument};
use crate::preprocess::SummaryReport;
use crate::rankers::UsageTotals;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub corpus_size: usize,
    pub convergence_trial: usize,
    pub reason: ConvergenceReason,
    pub inflection: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflection_score: Option<f64>,
    pub detected: Inflection,
    pub ranker_calls: u64,
}

impl From<&IterationResult> for IterationSummary {
    fn from(it: &IterationResult) -> Self {
        Self {
            iteration: it.iteration,
            corpus_size: it.corpus_size,
            convergence_trial: it.convergence_trial,
            reason: it.reason,
            inflection: it.inflection,
            inflection_score: it.inflection_score(),
            detected: it.detected,
            ranker_calls: it.ranker_calls,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerInfo {
    /// `llm` or `oracle`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

/// Everything a ranking run produced, in one serializable document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub query: String,
    pub config: RankConfig,
    pub ranker: RankerInfo,
    pub corpus_size: usize,
    pub iterations: Vec<IterationSummary>,
    pub ranked: Vec<RankedDocument>,
    pub usage: UsageTotals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summarization: Option<SummaryReport>,
    /// Omitted for runs meant to be reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explanations: Vec<BatchExplanation>,
}

impl RunReport {
    pub fn new(query: impl Into<String>, config: RankConfig, ranker: RankerInfo, outcome: RankOutcome) -> Self {
        Self {
            query: query.into(),
            config,
            ranker,
            corpus_size: outcome.ranked.len(),
            iterations: outcome.iterations.iter().map(IterationSummary::from).collect(),
            ranked: outcome.ranked,
            usage: outcome.usage,
            summarization: None,
            wall_time_ms: None,
            explanations: outcome.explanations,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<W: Write>(&self, mut out: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)
    }

    pub fn read_json<R: Read>(input: R) -> serde_json::Result<Self> {
        serde_json::from_reader(input)
    }

    /// Outcome view for downstream stages that only need the ranking.
    pub fn to_outcome(&self) -> RankOutcome {
        RankOutcome {
            ranked: self.ranked.clone(),
            iterations: Vec::new(),
            usage: self.usage,
            explanations: Vec::new(),
        }
    }
}
