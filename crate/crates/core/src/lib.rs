//! Listwise relevance ranking of large document sets by repeated small-batch
//! comparisons, with iterative refinement of the top of the ranking.

pub mod config;
pub mod convergence;
pub mod document;
pub mod engine;
pub mod error;
pub mod graphrank;
pub mod preprocess;
pub mod rankers;
pub mod report;

pub use config::{InflectionMethod, RankConfig, Statistic};
pub use document::{load_documents, read_documents, Document, InputError, InputFormat};
pub use engine::{run_ranking, ConvergenceReason, Engine, IterationResult, RankOutcome, RankedDocument};
pub use error::{AbortDiagnostic, BatchFailure, RankError};
pub use rankers::{BatchRanker, OracleRanker, RankerError};
pub use report::RunReport;
