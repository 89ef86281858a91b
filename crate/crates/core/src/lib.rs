//! Uncertainty scores for long-form generations.
//!
//! An anchor response is checked sentence by sentence against sampled
//! references with an NLI model. Sentences the references neither support
//! nor refute are broken into atomic facts. Units are then softly clustered
//! by meaning and the per-unit uncertainties are averaged theme by theme.

pub mod corpus;
pub mod error;
pub mod providers;
pub mod scoring;
pub mod routing;
pub mod timing;
pub mod clustering;
pub mod aggregation;
pub mod eval;
pub mod pipeline;

pub use aggregation::{AggregationMode, FinalScore};
pub use corpus::{load_dataset, Dataset, SampleSet};
pub use error::{Error, Result};
pub use eval::MethodVariant;
pub use pipeline::{build_providers, run_corpus, run_prompt, PipelineConfig, PromptReport};
pub use providers::Providers;
pub use timing::TimingBreakdown;
