//! Forecasting hero deaths a few seconds ahead in 10-player MOBA matches.
//!
//! The pipeline reads line-delimited match telemetry ([`match_data`]),
//! turns every sampled frame into per-hero feature vectors ([`features`]),
//! labels and shards them ([`dataset`]), trains a network whose encoder is
//! shared by all ten heroes ([`model`], [`train`]) and scores it with
//! precision-recall metrics ([`eval`]). [`synth`] generates matches from a
//! known hazard so results can be checked against the exact optimum, and
//! [`cli`] wires the stages into one command.

pub mod cli;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod match_data;
pub mod model;
pub mod synth;
pub mod train;

pub use dataset::{LabeledSample, ShardPool};
pub use eval::{EvalReport, PrCurve};
pub use features::{FeatureSchema, FrameFeatures, SchemaVariant};
pub use match_data::{MatchRecord, TickFrame};
pub use model::{Checkpoint, ModelConfig, ModelParams};
pub use synth::SynthConfig;
