//! Claim classification pipeline and evaluation harness for false or
//! misleading climate claims.
//!
//! The crate is organised around the stages of a classification run:
//!
//! - [`taxonomy`]: the claim label space and label parsing.
//! - [`corpus`]: article ingestion, keyword and credibility filters, paragraph
//!   segmentation.
//! - [`prompts`]: rendering of the rubric, compact QA and fine-tuning prompts.
//! - [`gateway`]: chat-completion backends with retry, rate limiting and a
//!   deterministic mock.
//! - [`codec`]: response parsing, seeded replacement of invalid responses and
//!   validity reporting.
//! - [`sampler`]: stratified sampling for expert review.
//! - [`metrics`]: confusion matrices, precision/recall/F1 and Krippendorff's
//!   alpha.
//! - [`finetune`]: chat-message JSONL export.
//! - [`annotation`]: the dual-annotator store behind the annotation API.
//! - [`pipeline`] and [`report`]: end-to-end runs and their reports.

pub mod annotation;
pub mod codec;
pub mod corpus;
pub mod finetune;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod taxonomy;

pub use taxonomy::{ClaimLabel, Taxonomy, TaxonomyEntry};
