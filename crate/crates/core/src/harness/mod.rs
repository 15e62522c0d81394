//! Synthetic corpora, the experiment protocols run over them, and their
//! CSV and SVG outputs.

pub mod experiment;
pub mod generator;
pub mod output;

pub use experiment::{
    partition_splits, run_experiment, run_partition_sweep, run_rq1, run_rq4, run_rq6, select_records, ExperimentError,
    ExperimentSpec, Rq, Rq1Config, GraphCache,
};
pub use generator::{generate_corpus, GeneratorSpec, NoiseKind, VulnTemplate};
pub use output::emit_outputs;
