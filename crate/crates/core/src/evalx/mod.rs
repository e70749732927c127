//! Evaluation arithmetic: classification metrics, seed aggregation,
//! lexical overlap and rater agreement, plus the run-directory report.

mod agreement;
mod classify;
mod lexical;
mod report;

use thiserror::Error;

pub use agreement::{
    fleiss_kappa, ingest_ratings, ingest_ratings_str, RatingMatrix, RatingRow, RatingSheet,
    CATEGORIES,
};
pub use classify::{
    aggregate_seeds, aggregate_seeds_with, classification_report, ClassMetrics,
    ClassificationReport, Deviation, SeedAggregate,
};
pub use lexical::{bleu, rouge_l, rouge_n, tokenize, Prf};
pub use report::{
    eval_run, eval_run_with, render_ablation_table, render_text, write_report, EvalReport,
    LexicalScores, SeedEval, NOT_COMPUTED,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions and gold labels differ in length ({preds} vs {golds})")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no labels to evaluate")]
    Empty,
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("reference text is empty")]
    EmptyReference,
    #[error("n-gram order must be at least 1")]
    BadOrder,
    #[error("kappa is undefined: every rating falls in a single category")]
    UndefinedKappa,
    #[error("invalid rating matrix: {0}")]
    BadMatrix(String),
    #[error("ratings: {0}")]
    Ratings(String),
    #[error("{path}: {message}")]
    Run { path: String, message: String },
    #[error("no case in the run overlaps the gold corpus")]
    NoOverlap,
}

/// `x` as a percentage with two decimals.
pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}
