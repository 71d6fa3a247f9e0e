//! Survey exploration engine: categorical records become a dense frequency
//! table, tables become seriated SVG plots and evidence-backed leading
//! questions, and a per-therapy nearest-neighbor recommender sits alongside.
//!
//! The numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the plots, server and CLI use.

pub mod freqtable;
pub mod ingest;
pub mod knn;
pub mod library;
pub mod plots;
pub mod questions;
pub mod scalar;
pub mod seriation;
pub mod synth;

pub use freqtable::{build_table, replay, FreqTable, TableError, TableOp};
pub use ingest::{
    apply_codebook, infer_schema, parse_csv, Codebook, CsvConfig, IngestError, RecordSet, Schema,
    Variable,
};
pub use knn::{Direction, FeatureKind, KnnError, RecommendParams, Weighting};
pub use library::{load_table, LoadError};
pub use plots::{PlotError, PlotKind, PlotOptions, PlotSpec, SvgDoc};
pub use questions::{generate_questions, Question, QuestionConfig, QuestionKind};
pub use scalar::Real;
pub use seriation::SeriationError;

pub type ProportionMatrix = freqtable::ProportionMatrix<f64>;
pub type Ordering = seriation::Ordering<f64>;
pub type BoxStats = plots::BoxStats<f64>;
pub type FeatureSchema = knn::FeatureSchema<f64>;
pub type SchemaFile = knn::SchemaFile<f64>;
pub type PatientRecord = knn::PatientRecord<f64>;
pub type Patient = knn::Patient<f64>;
pub type Cohort = knn::Cohort<f64>;
pub type Recommendation = knn::Recommendation<f64>;
