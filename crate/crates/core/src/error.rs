use thiserror::Error;

use crate::engine::IterationResult;
use crate::rankers::RankerError;

/// Errors raised by a ranking run.
#[derive(Debug, Error)]
pub enum RankError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` has empty text")]
    EmptyText(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot place {owed} owed documents into {slots} batch slots")]
    PriorityOverflow { owed: usize, slots: usize },
    #[error("run aborted in iteration {}, trial {}: {}", .0.iteration, .0.trial, .0.cause)]
    Aborted(Box<AbortDiagnostic>),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

/// State captured when a run stops because a batch could not be ranked.
#[derive(Debug)]
pub struct AbortDiagnostic {
    pub iteration: usize,
    pub trial: usize,
    pub ranker_calls: u64,
    /// Iterations that finished before the failure.
    pub completed: Vec<IterationResult>,
    pub cause: BatchFailure,
}

#[derive(Debug, Error)]
pub enum BatchFailure {
    #[error("ranker failed after {attempts} attempt(s): {source}")]
    Ranker {
        attempts: u32,
        #[source]
        source: RankerError,
    },
    #[error("request budget of {0} ranker calls exhausted")]
    BudgetExhausted(u64),
}
