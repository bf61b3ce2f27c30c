//! Proverb sentiment analytics.
//!
//! The pipeline runs from corpus ingestion through annotator agreement,
//! ordinal sentiment labels, few-shot prompting of language models,
//! evaluation, dialect linking by edit distance, and regional GeoJSON maps.
//!
//! Statistical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to [`Real`] for everyday use.

pub mod annotation;
pub mod client;
pub mod corpus;
pub mod dialect;
pub mod evaluation;
pub mod geomap;
pub mod pipeline;
pub mod prompting;
pub mod scalar;
pub mod sentiment;
pub mod shots;
pub mod stats;

pub use scalar::Scalar;
pub use sentiment::Sentiment;

/// Default scalar type.
pub type Real = f64;

pub type AgreementReport = annotation::AgreementReport<Real>;
pub type CorrelationMatrix = annotation::CorrelationMatrix<Real>;
pub type SelfAgreement = annotation::SelfAgreement<Real>;
pub type Distribution = prompting::Distribution<Real>;
pub type ModelPrediction = prompting::ModelPrediction<Real>;
pub type PredictionRecord = client::PredictionRecord<Real>;
pub type EvalReport = evaluation::EvalReport<Real>;
pub type DistributionEvalReport = evaluation::DistributionEvalReport<Real>;
pub type MatchResult = dialect::MatchResult<Real>;
pub type RegionAggregate = geomap::RegionAggregate<Real>;
