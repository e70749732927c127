//! Appellate judgment prediction with structured explanations.
//!
//! A case document flows through six stages: rhetorical role labelling
//! ([`textprep`]), case context construction, decision point extraction,
//! present court ruling generation, judgment prediction and explanation
//! generation ([`pipeline`]). Every LLM interaction goes through
//! [`llmgate`], which caches responses and offers two offline providers so
//! the whole flow can be exercised without network access. [`evalx`] holds
//! the evaluation arithmetic.

pub mod corpus;
pub mod evalx;
pub mod json;
pub mod llmgate;
pub mod pipeline;
pub mod prompts;
pub mod runner;
pub mod textprep;

pub use corpus::{CaseRecord, RunManifest};
pub use pipeline::{
    Ablation, CaseContext, Configuration, CourtRuling, DecisionPoint, Explanation, Prediction,
    RunArtifacts,
};
pub use textprep::{LabeledSentence, RhetoricalRole, Sentence};
