//! Few-shot, retrieval-augmented extraction of MOF synthesis conditions.

pub mod coref;
pub mod corpus;
pub mod curation;
pub mod detector;
pub mod evalkit;
pub mod extractor;
pub mod llmgate;
pub mod normalize;
pub mod pipeline;
pub mod promptkit;
pub mod record;
pub mod retrieval;
pub mod searchql;
pub mod store;
pub mod text;

pub use record::{ConditionGroup, Slot, SynthesisRecord};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/normalize.md")]
    mod normalize {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/http.md")]
    mod http {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
