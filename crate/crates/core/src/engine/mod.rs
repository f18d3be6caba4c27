//! The ranking loop: trials of shuffled batches, score aggregation,
//! convergence, refinement of the top portion, and final reassembly.
//!
//! Each iteration works on a shrinking candidate set. Within an iteration,
//! trials run one after another so that convergence can cut the trial budget
//! short; the batches inside a trial may be ranked concurrently.

mod partition;
mod scores;

use std::collections::HashSet;
use std::hash::Hash;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use partition::{partition_into_batches, Partition};
pub use scores::{aggregate, update_scores, ScoreBoard, TrialRecord};

use crate::config::{InflectionMethod, RankConfig};
use crate::convergence::{
    check_stability, find_inflection_elbow, find_inflection_gap, Inflection, ScoreCurve, Stability, StabilityHistory,
};
use crate::document::{validate_corpus, Document};
use crate::error::{AbortDiagnostic, BatchFailure, RankError};
use crate::rankers::{generate_keys, repair_keys, BatchEntry, BatchRanker, BatchRequest, UsageLedger, UsageTotals, KEY_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceReason {
    OrderingStable,
    InflectionStable,
    MaxTrials,
}

/// What happened in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iteration: usize,
    pub corpus_size: usize,
    /// Ids ordered by score at the convergence trial, best first.
    pub ranking: Vec<String>,
    /// Scores aligned with `ranking`.
    pub scores: Vec<f64>,
    /// Partition index: the first `inflection` items of `ranking` advance.
    pub inflection: usize,
    /// Detector output before the forced-split fallback.
    pub detected: Inflection,
    pub convergence_trial: usize,
    pub reason: ConvergenceReason,
    /// Suffix of `ranking` after `inflection`, frozen in place.
    pub frozen: Vec<String>,
    pub ranker_calls: u64,
}

impl IterationResult {
    /// Score at the partition boundary (last advancing item).
    pub fn inflection_score(&self) -> Option<f64> {
        self.inflection.checked_sub(1).and_then(|i| self.scores.get(i)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub id: String,
    pub final_rank: usize,
    /// Statistic from the document's last active iteration; `None` if it was never ranked.
    pub last_score: Option<f64>,
    pub iterations_survived: usize,
    /// Total batch appearances across all iterations.
    pub exposures: usize,
}

/// Model explanation attached to one batch ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchExplanation {
    pub iteration: usize,
    pub trial: usize,
    pub ordered_ids: Vec<String>,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOutcome {
    /// Ordered by `final_rank`.
    pub ranked: Vec<RankedDocument>,
    pub iterations: Vec<IterationResult>,
    pub usage: UsageTotals,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explanations: Vec<BatchExplanation>,
}

impl RankOutcome {
    pub fn ranker_calls(&self) -> u64 {
        self.usage.requests
    }

    pub fn ids(&self) -> Vec<&str> {
        self.ranked.iter().map(|d| d.id.as_str()).collect()
    }
}

/// Rank `corpus` against `query`.
pub fn run_ranking<R>(
    corpus: &[Document],
    query: &str,
    config: &RankConfig,
    ranker: &R,
) -> Result<RankOutcome, RankError>
where
    R: BatchRanker + ?Sized,
{
    Engine::new(corpus, query, config.clone(), ranker)?.run()
}

/// Split a ranking into the advancing prefix of length `split` and the frozen suffix.
///
/// A split at or past the end yields an empty frozen part.
pub fn refine_partition<T: Clone>(ranking: &[T], split: usize) -> (Vec<T>, Vec<T>) {
    let split = split.min(ranking.len());
    (ranking[..split].to_vec(), ranking[split..].to_vec())
}

/// Concatenate the final ranking with the frozen tails, latest first.
///
/// `frozen_latest_first` is `F_{K-1}, ..., F_1`. Overlapping segments or a
/// total length different from `expected_len` is an invariant failure.
pub fn reassemble<T>(final_ranking: &[T], frozen_latest_first: &[Vec<T>], expected_len: usize) -> Result<Vec<T>, RankError>
where
    T: Clone + Eq + Hash + std::fmt::Debug,
{
    let mut out = Vec::with_capacity(expected_len);
    let mut seen = HashSet::with_capacity(expected_len);
    for item in final_ranking.iter().chain(frozen_latest_first.iter().flatten()) {
        if !seen.insert(item) {
            return Err(RankError::Invariant(format!("{item:?} appears in more than one segment")));
        }
        out.push(item.clone());
    }
    if out.len() != expected_len {
        return Err(RankError::Invariant(format!(
            "reassembled {} items, expected {expected_len}",
            out.len()
        )));
    }
    Ok(out)
}

/// Map a detector result to a usable split for a ranking of length `len`.
///
/// Degenerate or non-interior results drop the bottom tenth (at least one
/// item) so every refinement strictly shrinks the candidate set.
pub fn effective_split(len: usize, detected: Inflection) -> usize {
    match detected {
        Inflection::At(i) if i >= 1 && i < len => i,
        _ => len - (len / 10).max(1),
    }
}

/// Detect the inflection of an ascending score curve with the configured method.
pub fn detect_inflection(scores: &[f64], method: InflectionMethod) -> Inflection {
    let Ok(curve) = ScoreCurve::new(scores.to_vec()) else {
        return Inflection::Degenerate;
    };
    if curve.values()[curve.len() - 1] <= curve.values()[0] {
        return Inflection::Degenerate;
    }
    match method {
        InflectionMethod::Elbow if curve.len() >= 3 => {
            find_inflection_elbow(&curve).unwrap_or(Inflection::Degenerate)
        }
        _ => Inflection::At(find_inflection_gap(&curve)),
    }
}

/// Calls the ranker with retries and budget accounting. Shared by all
/// batch workers of a trial.
struct Dispatcher<'a, R: ?Sized> {
    corpus: &'a [Document],
    query: &'a str,
    ranker: &'a R,
    retry_limit: u32,
    max_requests: Option<u64>,
    calls: AtomicU64,
    ledger: UsageLedger,
}

struct RankedBatch {
    ordered: Vec<usize>,
    reasoning: Option<String>,
}

impl<R: BatchRanker + ?Sized> Dispatcher<'_, R> {
    fn reserve_call(&self) -> Result<(), BatchFailure> {
        match self.max_requests {
            None => {
                self.calls.fetch_add(1, Ordering::SeqCst);
                Ok(())
            }
            Some(max) => self
                .calls
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| (c < max).then_some(c + 1))
                .map(|_| ())
                .map_err(|_| BatchFailure::BudgetExhausted(max)),
        }
    }

    fn rank(&self, batch: &[usize], keys: Vec<String>) -> Result<RankedBatch, BatchFailure> {
        let mut request = BatchRequest {
            query: self.query,
            entries: batch
                .iter()
                .zip(&keys)
                .map(|(&doc, key)| BatchEntry {
                    key: key.clone(),
                    id: &self.corpus[doc].id,
                    text: self.corpus[doc].ranking_text(),
                })
                .collect(),
            attempt: 0,
        };
        loop {
            self.reserve_call()?;
            self.ledger.record_request();
            let outcome = self.ranker.rank_batch(&request).and_then(|ordering| {
                self.ledger.record_usage(ordering.usage);
                let repaired = repair_keys(&ordering.ordered_keys, &keys)?;
                Ok((repaired, ordering.reasoning))
            });
            let err = match outcome {
                Ok((ordered_keys, reasoning)) => {
                    let ordered = ordered_keys
                        .iter()
                        .map(|k| batch[keys.iter().position(|x| x == k).expect("repaired key is a batch key")])
                        .collect();
                    return Ok(RankedBatch { ordered, reasoning });
                }
                Err(e) => e,
            };
            if !err.is_retryable() || request.attempt >= self.retry_limit {
                return Err(BatchFailure::Ranker {
                    attempts: request.attempt + 1,
                    source: err,
                });
            }
            request.attempt += 1;
            log::warn!("batch attempt {} failed: {err}; retrying", request.attempt);
            let delay = self.ranker.retry_delay(request.attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
        }
    }
}

struct IterationState {
    ranking: Vec<usize>,
    scores: Vec<f64>,
    split: usize,
    detected: Inflection,
    trial: usize,
    reason: ConvergenceReason,
}

/// One ranking run. Owns all mutable run state; not shared across threads.
pub struct Engine<'a, R: ?Sized> {
    config: RankConfig,
    dispatcher: Dispatcher<'a, R>,
    shuffle_rng: ChaCha8Rng,
    key_rng: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
    exposures: Vec<usize>,
    explanations: Vec<BatchExplanation>,
}

impl<'a, R: BatchRanker + ?Sized> Engine<'a, R> {
    pub fn new(corpus: &'a [Document], query: &'a str, config: RankConfig, ranker: &'a R) -> Result<Self, RankError> {
        config.validate()?;
        validate_corpus(corpus)?;
        let shuffle_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut key_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        key_rng.set_stream(1);
        let pool = if config.concurrency_cap > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.concurrency_cap)
                    .thread_name(|i| format!("siftrank-batch-{i}"))
                    .build()
                    .map_err(|e| RankError::InvalidConfig(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            dispatcher: Dispatcher {
                corpus,
                query,
                ranker,
                retry_limit: config.retry_limit,
                max_requests: config.max_requests,
                calls: AtomicU64::new(0),
                ledger: UsageLedger::new(),
            },
            config,
            shuffle_rng,
            key_rng,
            pool,
            exposures: vec![0; corpus.len()],
            explanations: Vec::new(),
        })
    }

    pub fn ranker_calls(&self) -> u64 {
        self.dispatcher.calls.load(Ordering::SeqCst)
    }

    fn corpus(&self) -> &'a [Document] {
        self.dispatcher.corpus
    }

    pub fn run(mut self) -> Result<RankOutcome, RankError> {
        let corpus = self.corpus();
        let n = corpus.len();
        let mut survived = vec![1usize; n];
        let mut last_score: Vec<Option<f64>> = vec![None; n];
        let mut iterations: Vec<IterationResult> = Vec::new();
        let mut frozen_stack: Vec<Vec<usize>> = Vec::new();
        let mut current: Vec<usize> = (0..n).collect();

        let final_ranking = if n == 1 {
            current
        } else {
            let mut k = 1;
            loop {
                let calls_before = self.ranker_calls();
                let state = match self.run_iteration(k, &current) {
                    Ok(s) => s,
                    Err(RankError::Aborted(mut diag)) => {
                        diag.completed = iterations;
                        return Err(RankError::Aborted(diag));
                    }
                    Err(e) => return Err(e),
                };
                for (&doc, &score) in state.ranking.iter().zip(&state.scores) {
                    survived[doc] = k;
                    last_score[doc] = Some(score);
                }
                let (advance, frozen) = refine_partition(&state.ranking, state.split);
                log::info!(
                    "iteration {k}: {} docs, converged at trial {} ({:?}), {} advance",
                    current.len(),
                    state.trial,
                    state.reason,
                    advance.len()
                );
                iterations.push(IterationResult {
                    iteration: k,
                    corpus_size: current.len(),
                    ranking: self.ids(&state.ranking),
                    scores: state.scores.clone(),
                    inflection: state.split,
                    detected: state.detected,
                    convergence_trial: state.trial,
                    reason: state.reason,
                    frozen: self.ids(&frozen),
                    ranker_calls: self.ranker_calls() - calls_before,
                });
                if state.reason == ConvergenceReason::OrderingStable || advance.len() <= 1 {
                    break state.ranking;
                }
                if advance.len() >= current.len() {
                    return Err(RankError::Invariant(format!(
                        "iteration {k} did not shrink the candidate set ({} items)",
                        current.len()
                    )));
                }
                frozen_stack.push(frozen);
                current = advance;
                k += 1;
            }
        };

        frozen_stack.reverse();
        let order = reassemble(&final_ranking, &frozen_stack, n)?;
        let ranked = order
            .iter()
            .enumerate()
            .map(|(pos, &doc)| RankedDocument {
                id: corpus[doc].id.clone(),
                final_rank: pos + 1,
                last_score: last_score[doc],
                iterations_survived: survived[doc],
                exposures: self.exposures[doc],
            })
            .collect();
        Ok(RankOutcome {
            ranked,
            iterations,
            usage: self.dispatcher.ledger.totals(),
            explanations: self.explanations,
        })
    }

    fn ids(&self, docs: &[usize]) -> Vec<String> {
        docs.iter().map(|&d| self.corpus()[d].id.clone()).collect()
    }

    fn run_iteration(&mut self, k: usize, current: &[usize]) -> Result<IterationState, RankError> {
        let corpus = self.corpus();
        let mut board = ScoreBoard::new(corpus.len(), self.config.statistic);
        let mut history = StabilityHistory::new(self.config.stability_window);
        let mut owed = HashSet::new();

        for t in 1..=self.config.max_trials {
            self.run_trial(k, current, t, &mut board, &mut owed)?;

            let mut ranking = current.to_vec();
            ranking.sort_by(|&a, &b| {
                let (sa, sb) = (board.score(a), board.score(b));
                match (sa, sb) {
                    (Some(x), Some(y)) => x.total_cmp(&y),
                    (Some(_), None) => std::cmp::Ordering::Less,
                    (None, Some(_)) => std::cmp::Ordering::Greater,
                    (None, None) => std::cmp::Ordering::Equal,
                }
                .then_with(|| corpus[a].origin_index.cmp(&corpus[b].origin_index))
                .then_with(|| a.cmp(&b))
            });
            let curve: Vec<f64> = ranking.iter().map_while(|&d| board.score(d)).collect();
            let detected = detect_inflection(&curve, self.config.inflection_method);
            let split = effective_split(ranking.len(), detected);

            history.push(ranking.clone(), split);
            let verdict = check_stability(&history, self.config.stability_window, self.config.inflection_tolerance);
            let reason = match verdict {
                Stability::OrderingStable => Some(ConvergenceReason::OrderingStable),
                Stability::InflectionStable => Some(ConvergenceReason::InflectionStable),
                Stability::None if t == self.config.max_trials => Some(ConvergenceReason::MaxTrials),
                Stability::None => None,
            };
            if let Some(reason) = reason {
                if curve.len() != ranking.len() {
                    return Err(RankError::Invariant(format!(
                        "iteration {k} converged at trial {t} with unscored documents"
                    )));
                }
                return Ok(IterationState {
                    ranking,
                    scores: curve,
                    split,
                    detected,
                    trial: t,
                    reason,
                });
            }
        }
        unreachable!("the last trial always yields a convergence reason")
    }

    /// Shuffle, partition and rank one trial over `current`, then fold the
    /// observed positions into `board`. `owed` carries documents excluded by
    /// the previous trial and receives this trial's exclusions.
    pub fn run_trial(
        &mut self,
        iteration: usize,
        current: &[usize],
        trial: usize,
        board: &mut ScoreBoard,
        owed: &mut HashSet<usize>,
    ) -> Result<TrialRecord, RankError> {
        let mut shuffled = current.to_vec();
        shuffled.shuffle(&mut self.shuffle_rng);
        let partition = partition_into_batches(&shuffled, self.config.batch_size, owed)?;
        *owed = partition.remainder.iter().copied().collect();

        let jobs: Vec<(&[usize], Vec<String>)> = partition
            .batches
            .iter()
            .map(|b| (b.as_slice(), generate_keys(&mut self.key_rng, b.len(), KEY_LEN)))
            .collect();

        let dispatcher = &self.dispatcher;
        let results: Vec<Result<RankedBatch, BatchFailure>> = match &self.pool {
            Some(pool) if jobs.len() > 1 => {
                pool.install(|| jobs.into_par_iter().map(|(b, keys)| dispatcher.rank(b, keys)).collect())
            }
            _ => {
                let mut out = Vec::with_capacity(jobs.len());
                for (b, keys) in jobs {
                    let r = dispatcher.rank(b, keys);
                    let failed = r.is_err();
                    out.push(r);
                    if failed {
                        break;
                    }
                }
                out
            }
        };

        let mut record = TrialRecord::new(trial);
        for result in results {
            let ranked = result.map_err(|cause| {
                RankError::Aborted(Box::new(AbortDiagnostic {
                    iteration,
                    trial,
                    ranker_calls: self.ranker_calls(),
                    completed: Vec::new(),
                    cause,
                }))
            })?;
            for (pos, &doc) in ranked.ordered.iter().enumerate() {
                record.positions.insert(doc, pos as u32 + 1);
                self.exposures[doc] += 1;
            }
            if let Some(reasoning) = ranked.reasoning {
                self.explanations.push(BatchExplanation {
                    iteration,
                    trial,
                    ordered_ids: self.ids(&ranked.ordered),
                    reasoning,
                });
            }
        }
        board.update(&record);
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankers::{BatchOrdering, OracleRanker, RankerError};
    use std::sync::atomic::AtomicUsize;

    fn corpus(n: usize) -> Vec<Document> {
        (0..n).map(|i| Document::new(format!("d{i}"), format!("text {i}"), i)).collect()
    }

    #[test]
    fn refine_examples() {
        assert_eq!(refine_partition(&["a", "b"], 1), (vec!["a"], vec!["b"]));
        let ten: Vec<u8> = (0..10).collect();
        let (adv, frz) = refine_partition(&ten, 9);
        assert_eq!((adv.len(), frz.len()), (9, 1));
        let (adv, frz) = refine_partition(&ten, 12);
        assert_eq!((adv.len(), frz.len()), (10, 0));
    }

    #[test]
    fn reassemble_examples() {
        assert_eq!(reassemble(&["a"], &[vec!["b", "c"]], 3).unwrap(), ["a", "b", "c"]);
        assert_eq!(reassemble(&["x", "y"], &[], 2).unwrap(), ["x", "y"]);
        assert_eq!(
            reassemble(&[1], &[vec![2], vec![3, 4]], 4).unwrap(),
            [1, 2, 3, 4]
        );
        assert!(matches!(reassemble(&["a"], &[vec!["a"]], 2), Err(RankError::Invariant(_))));
        assert!(matches!(reassemble(&["a"], &[vec!["b"]], 3), Err(RankError::Invariant(_))));
    }

    #[test]
    fn forced_split_always_shrinks() {
        assert_eq!(effective_split(10, Inflection::Degenerate), 9);
        assert_eq!(effective_split(100, Inflection::Degenerate), 90);
        assert_eq!(effective_split(2, Inflection::Degenerate), 1);
        assert_eq!(effective_split(10, Inflection::At(10)), 9);
        assert_eq!(effective_split(10, Inflection::At(4)), 4);
    }

    #[test]
    fn flat_curve_is_degenerate_for_both_methods() {
        assert_eq!(detect_inflection(&[2.0, 2.0, 2.0], InflectionMethod::Gap), Inflection::Degenerate);
        assert_eq!(detect_inflection(&[2.0, 2.0, 2.0], InflectionMethod::Elbow), Inflection::Degenerate);
        assert_eq!(detect_inflection(&[1.0, 3.0], InflectionMethod::Elbow), Inflection::At(1));
    }

    #[test]
    fn single_document_needs_no_calls() {
        let docs = corpus(1);
        let ranker = OracleRanker::noiseless(["d0"]);
        let out = run_ranking(&docs, "q", &RankConfig::default(), &ranker).unwrap();
        assert_eq!(out.ranked.len(), 1);
        assert_eq!(out.ranked[0].final_rank, 1);
        assert_eq!(out.ranker_calls(), 0);
        assert!(out.iterations.is_empty());
    }

    #[test]
    fn identical_orderings_stop_at_window() {
        let docs = corpus(6);
        let ranker = OracleRanker::noiseless((0..6).rev().map(|i| format!("d{i}")));
        let out = run_ranking(&docs, "q", &RankConfig::default(), &ranker).unwrap();
        assert_eq!(out.iterations.len(), 1);
        let it = &out.iterations[0];
        assert_eq!(it.reason, ConvergenceReason::OrderingStable);
        assert_eq!(it.convergence_trial, 5);
        assert_eq!(out.ranker_calls(), 5);
        assert_eq!(out.ids(), ["d5", "d4", "d3", "d2", "d1", "d0"]);
        assert!(out.ranked.iter().all(|d| d.iterations_survived == 1 && d.exposures == 5));
    }

    #[test]
    fn frozen_documents_record_their_iteration() {
        let docs = corpus(57);
        let ranker = OracleRanker::noiseless((0..57).map(|i| format!("d{i}")));
        let out = run_ranking(&docs, "q", &RankConfig::default().with_seed(3), &ranker).unwrap();
        let by_id: std::collections::HashMap<_, _> = out.ranked.iter().map(|d| (d.id.as_str(), d)).collect();
        let k_final = out.iterations.len();
        for it in &out.iterations {
            let expected = if it.iteration == k_final { k_final } else { it.iteration };
            for id in &it.frozen {
                if it.iteration < k_final {
                    assert_eq!(by_id[id.as_str()].iterations_survived, expected);
                }
            }
            assert_eq!(it.ranking[it.inflection..], it.frozen[..]);
        }
        assert_eq!(out.ranked[0].id, "d0");
        let ranks: Vec<usize> = out.ranked.iter().map(|d| d.final_rank).collect();
        assert_eq!(ranks, (1..=57).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let docs = vec![Document::new("a", "x", 0), Document::new("a", "y", 1)];
        let ranker = OracleRanker::noiseless(["a"]);
        assert!(matches!(
            run_ranking(&docs, "q", &RankConfig::default(), &ranker),
            Err(RankError::DuplicateId(_))
        ));
    }

    struct Flaky {
        inner: OracleRanker,
        failures_left: AtomicUsize,
        calls: AtomicUsize,
    }

    impl BatchRanker for Flaky {
        fn rank_batch(&self, request: &BatchRequest<'_>) -> Result<BatchOrdering, RankerError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |f| f.checked_sub(1))
                .is_ok()
            {
                return Err(RankerError::Unrepairable { raw: "nope".into() });
            }
            self.inner.rank_batch(request)
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let docs = corpus(4);
        let ranker = Flaky {
            inner: OracleRanker::noiseless(["d0", "d1", "d2", "d3"]),
            failures_left: AtomicUsize::new(2),
            calls: AtomicUsize::new(0),
        };
        let out = run_ranking(&docs, "q", &RankConfig::default(), &ranker).unwrap();
        assert_eq!(out.ids(), ["d0", "d1", "d2", "d3"]);
        assert_eq!(out.ranker_calls(), 7);
        assert_eq!(ranker.calls.load(Ordering::SeqCst), 7);
    }

    #[test]
    fn exhausted_retries_abort_with_diagnostic() {
        let docs = corpus(4);
        let ranker = Flaky {
            inner: OracleRanker::noiseless(["d0", "d1", "d2", "d3"]),
            failures_left: AtomicUsize::new(100),
            calls: AtomicUsize::new(0),
        };
        let config = RankConfig { retry_limit: 2, ..RankConfig::default() };
        let err = run_ranking(&docs, "q", &config, &ranker).unwrap_err();
        let RankError::Aborted(diag) = err else { panic!("expected abort, got {err}") };
        assert_eq!((diag.iteration, diag.trial, diag.ranker_calls), (1, 1, 3));
        assert!(matches!(diag.cause, BatchFailure::Ranker { attempts: 3, source: RankerError::Unrepairable { .. } }));
    }

    #[test]
    fn request_budget_is_never_exceeded() {
        let docs = corpus(200);
        let ranker = OracleRanker::noiseless((0..200).map(|i| format!("d{i}")));
        let config = RankConfig { max_requests: Some(33), concurrency_cap: 4, ..RankConfig::default() };
        let err = run_ranking(&docs, "q", &config, &ranker).unwrap_err();
        let RankError::Aborted(diag) = err else { panic!("expected abort") };
        assert!(matches!(diag.cause, BatchFailure::BudgetExhausted(33)));
        assert_eq!(diag.ranker_calls, 33);
    }

    #[test]
    fn trial_places_previous_remainders() {
        let docs = corpus(23);
        let ranker = OracleRanker::noiseless((0..23).map(|i| format!("d{i}")));
        for seed in 0..50 {
            let mut engine = Engine::new(&docs, "q", RankConfig::default().with_seed(seed), &ranker).unwrap();
            let current: Vec<usize> = (0..23).collect();
            let mut board = ScoreBoard::new(23, crate::config::Statistic::Mean);
            let mut owed = HashSet::new();
            let first = engine.run_trial(1, &current, 1, &mut board, &mut owed).unwrap();
            assert_eq!(first.positions.len(), 20);
            let excluded: HashSet<usize> = current.iter().copied().filter(|d| !first.positions.contains_key(d)).collect();
            assert_eq!(excluded, owed);
            let second = engine.run_trial(1, &current, 2, &mut board, &mut owed).unwrap();
            assert!(excluded.iter().all(|d| second.positions.contains_key(d)), "seed {seed}");
            assert!(current.iter().all(|&d| board.exposure(d) >= 1));
            assert!(second.positions.values().all(|&p| (1..=10).contains(&p)));
        }
    }
}
