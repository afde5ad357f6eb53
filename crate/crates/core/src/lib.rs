pub mod cli;
pub mod config;
pub mod corpus;
pub mod crf;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod scores;
pub mod span;
pub mod system;
pub mod train;

pub use config::{EncoderMode, SpanSegConfig};
pub use crf::CrfModel;
pub use data::{Dataset, Segmenter, SentenceInput};
pub use error::{Error, Result};
pub use model::SpanSegModel;
pub use scores::{OracleScorer, ScoreTable, SpanScorer};
pub use system::{System, SystemKind};
