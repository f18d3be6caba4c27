//! Optional summarization pass that replaces long document text with a short
//! summary for ranking. Originals are kept on the document.

use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::rankers::{ChatPrompt, RankerError, TextModel, UsageLedger, UsageTotals};

const SUMMARY_SYSTEM: &str = "You write short, accurate summaries of code and documents.";

const FUNCTION_INSTRUCTIONS: &str = "Summarize the function below. Write three sentences \
aimed at an engineer describing what it does and how, then one plain-language sentence on \
why it matters to the product. Reply with the summary only.";

const QUERY_INSTRUCTIONS: &str = "Summarize the document below in at most four sentences, \
keeping the details that bear on the query and leaving out the rest. Reply with the summary only.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryTemplate {
    /// General technical-plus-business summary of a code unit.
    #[default]
    Function,
    /// Summary steered toward a query.
    QueryFocused,
}

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("document {0:?} has empty text")]
    EmptyText(String),
    #[error("query-focused summaries need a query")]
    MissingQuery,
    #[error("model returned an empty summary")]
    EmptySummary,
    #[error("summary request failed after {attempts} attempt(s): {source}")]
    Model {
        attempts: u32,
        #[source]
        source: RankerError,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryJob {
    pub id: String,
    pub text: String,
    pub template: SummaryTemplate,
    pub query: Option<String>,
}

impl SummaryJob {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        template: SummaryTemplate,
        query: Option<String>,
    ) -> Result<Self, PreprocessError> {
        let (id, text) = (id.into(), text.into());
        if text.trim().is_empty() {
            return Err(PreprocessError::EmptyText(id));
        }
        if template == SummaryTemplate::QueryFocused && query.as_deref().is_none_or(|q| q.trim().is_empty()) {
            return Err(PreprocessError::MissingQuery);
        }
        Ok(Self { id, text, template, query })
    }

    pub fn prompt(&self) -> ChatPrompt {
        let user = match self.template {
            SummaryTemplate::Function => format!("{FUNCTION_INSTRUCTIONS}\n\n{}", self.text),
            SummaryTemplate::QueryFocused => format!(
                "{QUERY_INSTRUCTIONS}\n\nQuery: {}\n\nDocument:\n{}",
                self.query.as_deref().unwrap_or_default(),
                self.text
            ),
        };
        ChatPrompt {
            system: SUMMARY_SYSTEM.to_string(),
            user,
        }
    }
}

/// Summarize one job, retrying retryable model errors up to `retry_limit` times.
pub fn summarize<M: TextModel + ?Sized>(
    job: &SummaryJob,
    model: &M,
    retry_limit: u32,
    retry_delay: Duration,
    ledger: &UsageLedger,
) -> Result<String, PreprocessError> {
    let prompt = job.prompt();
    let mut attempt = 0;
    loop {
        ledger.record_request();
        let err = match model.complete(&prompt) {
            Ok(c) => {
                ledger.record_usage(c.usage);
                let text = c.text.trim();
                if !text.is_empty() {
                    return Ok(text.to_string());
                }
                RankerError::Malformed("empty summary".into())
            }
            Err(e) => e,
        };
        if !err.is_retryable() || attempt >= retry_limit {
            return Err(match err {
                RankerError::Malformed(_) => PreprocessError::EmptySummary,
                source => PreprocessError::Model {
                    attempts: attempt + 1,
                    source,
                },
            });
        }
        attempt += 1;
        if !retry_delay.is_zero() {
            std::thread::sleep(retry_delay.saturating_mul(attempt));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryOptions {
    pub template: SummaryTemplate,
    pub query: Option<String>,
    pub concurrency: usize,
    pub retry_limit: u32,
    pub retry_delay: Duration,
    /// Re-summarize documents that already carry a summary.
    pub force: bool,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            template: SummaryTemplate::Function,
            query: None,
            concurrency: 1,
            retry_limit: 3,
            retry_delay: Duration::from_millis(500),
            force: false,
        }
    }
}

/// Outcome of a corpus pass; usage is tracked apart from ranking spend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub summarized: usize,
    pub skipped: usize,
    /// Documents left unsummarized after model failure.
    pub failed: Vec<String>,
    pub usage: UsageTotals,
}

/// Attach summaries to `docs` in place. A document whose summary cannot be
/// produced keeps its original text for ranking and is listed in `failed`.
pub fn summarize_corpus<M: TextModel + ?Sized>(
    docs: &mut [Document],
    model: &M,
    options: &SummaryOptions,
) -> Result<SummaryReport, PreprocessError> {
    if options.template == SummaryTemplate::QueryFocused
        && options.query.as_deref().is_none_or(|q| q.trim().is_empty())
    {
        return Err(PreprocessError::MissingQuery);
    }
    let ledger = UsageLedger::new();
    let mut skipped = 0;
    let mut jobs = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        let has_summary = doc.summary.as_deref().is_some_and(|s| !s.trim().is_empty());
        if has_summary && !options.force {
            skipped += 1;
            continue;
        }
        jobs.push((i, SummaryJob::new(&doc.id, &doc.text, options.template, options.query.clone())?));
    }

    let failed = Mutex::new(Vec::new());
    let run = |(i, job): &(usize, SummaryJob)| -> Option<(usize, String)> {
        match summarize(job, model, options.retry_limit, options.retry_delay, &ledger) {
            Ok(s) => Some((*i, s)),
            Err(e) => {
                log::warn!("summary for {:?} failed, ranking original text: {e}", job.id);
                failed.lock().expect("failure list lock").push(*i);
                None
            }
        }
    };
    let results: Vec<(usize, String)> = if options.concurrency > 1 && jobs.len() > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.concurrency)
            .build()
            .map_err(|e| PreprocessError::Pool(e.to_string()))?
            .install(|| jobs.par_iter().filter_map(run).collect())
    } else {
        jobs.iter().filter_map(run).collect()
    };

    let summarized = results.len();
    for (i, summary) in results {
        docs[i].summary = Some(summary);
    }
    let mut failed = failed.into_inner().expect("failure list lock");
    failed.sort_unstable();
    Ok(SummaryReport {
        summarized,
        skipped,
        failed: failed.into_iter().map(|i| docs[i].id.clone()).collect(),
        usage: ledger.totals(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankers::{Completion, TokenUsage};

    struct Echo;

    impl TextModel for Echo {
        fn complete(&self, prompt: &ChatPrompt) -> Result<Completion, RankerError> {
            let body = prompt.user.rsplit("\n\n").next().unwrap_or_default();
            if body.contains("FAIL") {
                return Err(RankerError::Transport("down".into()));
            }
            Ok(Completion {
                text: format!("summary of {}", body.trim()),
                usage: TokenUsage { input_tokens: 3, output_tokens: 1 },
            })
        }
    }

    fn opts() -> SummaryOptions {
        SummaryOptions {
            retry_delay: Duration::ZERO,
            retry_limit: 1,
            concurrency: 4,
            ..SummaryOptions::default()
        }
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(
            SummaryJob::new("f", "  ", SummaryTemplate::Function, None),
            Err(PreprocessError::EmptyText(_))
        ));
        assert!(matches!(
            SummaryJob::new("f", "x", SummaryTemplate::QueryFocused, None),
            Err(PreprocessError::MissingQuery)
        ));
    }

    #[test]
    fn query_focused_prompt_carries_query() {
        let job = SummaryJob::new("f", "body", SummaryTemplate::QueryFocused, Some("auth bypass".into())).unwrap();
        let p = job.prompt();
        assert!(p.user.contains("Query: auth bypass") && p.user.ends_with("body"));
    }

    #[test]
    fn corpus_pass_preserves_documents() {
        let mut docs: Vec<Document> = (0..200).map(|i| Document::new(format!("f{i}"), format!("code {i}"), i)).collect();
        docs[7].text = "FAIL".into();
        docs[9].summary = Some("already".into());
        let report = summarize_corpus(&mut docs, &Echo, &opts()).unwrap();
        assert_eq!(report.summarized, 198);
        assert_eq!(report.skipped, 1);
        assert_eq!(report.failed, ["f7"]);
        // one failing document retried once, everything else a single call
        assert_eq!(report.usage.requests, 200);
        assert_eq!(report.usage.input_tokens, 3 * 198);
        assert_eq!(docs.len(), 200);
        assert_eq!(docs[3].summary.as_deref(), Some("summary of code 3"));
        assert_eq!(docs[3].text, "code 3");
        assert_eq!(docs[9].summary.as_deref(), Some("already"));
        assert_eq!(docs[7].ranking_text(), "FAIL");
    }

    #[test]
    fn force_resummarizes() {
        let mut docs = vec![Document::new("a", "x", 0)];
        docs[0].summary = Some("old".into());
        let report = summarize_corpus(&mut docs, &Echo, &SummaryOptions { force: true, ..opts() }).unwrap();
        assert_eq!((report.summarized, report.skipped), (1, 0));
        assert_eq!(docs[0].summary.as_deref(), Some("summary of x"));
    }
}
