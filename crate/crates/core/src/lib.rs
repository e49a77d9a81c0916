//! Diagnostic decision support by knowledge-graph elicited retrieval-augmented
//! generation.
//!
//! The numeric core ([`embedding`], [`index`], [`kg::cluster`]) is generic
//! over the [`Scalar`] type; the aliases below fix it to `f64` (and `f32`
//! where single precision is useful).

pub mod corpus;
pub mod eval;
pub mod embedding;
mod http;
pub mod index;
pub mod kg;
pub mod llm;
pub mod orchestrator;
pub mod scalar;
pub mod transcribe;

pub use http::HttpEndpoint;
pub use scalar::Scalar;

pub type Embedding = embedding::EmbeddingVector<f64>;
pub type Embedding32 = embedding::EmbeddingVector<f32>;
pub type Index = index::VectorIndex<f64>;
pub type Index32 = index::VectorIndex<f32>;
pub type Record = corpus::EhrRecord<f64>;
pub type Corpus = corpus::Corpus<f64>;
pub type Kg = kg::DiagnosticKg<f64>;
pub type Kg32 = kg::DiagnosticKg<f32>;
pub type OfflineEncoder = embedding::HashingEncoder<f64>;
pub type Engine = orchestrator::Engine<f64>;
