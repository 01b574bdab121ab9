//! Building blocks for multilingual controllable lexical simplification.
//!
//! The pipeline runs corpus ingestion ([`corpus`]), control-token computation
//! ([`control_tokens`], backed by [`lexicon`]), model input construction
//! ([`serializer`]), candidate generation and filtering ([`generation`]),
//! evaluation with the TSAR-2022 metric suite ([`metrics`]) and the
//! inference-time token-value search ([`token_search`]). Model inference is
//! reached through the HTTP client in [`sidecar`].

pub mod control_tokens;
pub mod corpus;
pub mod generation;
pub mod lexicon;
pub mod manifest;
pub mod metrics;
pub mod serializer;
pub mod sidecar;
pub mod token_search;

pub use control_tokens::{compute_token_vector, EmbeddingProvider, HashingEmbedder, TokenValue, TokenVector};
pub use corpus::{DatasetStats, GoldEntry, Instance, InstanceFormat, Language, SplitSpec};
pub use generation::{CandidateGenerator, CandidateList, FillMaskClient, GenerationRequest};
pub use lexicon::{FrequencyLexicon, Syllabifier};
pub use manifest::RunManifest;
pub use metrics::{normalize_term, GoldView, MetricReport, Ratio};
pub use serializer::{SerializationOptions, SerializedExample};
pub use token_search::{SearchConfig, SearchResult, TokenValueSet};
