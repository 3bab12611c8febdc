//! Datasets, metrics, batching, baselines and end-to-end experiments.

mod batch;
mod dataset;
mod experiment;
mod metrics;
mod probe;

pub use crate::decode::{TaskKind, TaskSpec};
pub use batch::{in_batch_infer, BatchItem};
pub use dataset::{
    bind_to_task, fewshot_subsample, load_dataset, save_dataset, split_continuation, Dataset, Example,
    SCHEMA_VERSION,
};
pub use experiment::{
    cache_dir_from_env, load_splits, prepare_backbone, run_experiment, BackboneSection, CorpusKind,
    ExperimentConfig, MetricsReport, Prepared, TaskSection, Tuned, VerbalizerKind, VerbalizerSection, CACHE_ENV,
};
pub use metrics::{
    accuracy, auto_bleu, bleu, corpus_error_rate, edit_distance, edit_distance_rate, extract_slots, slot_f1,
};
pub use probe::{linear_probe_baseline, mean_embedding, ProbeConfig, ProbeReport};
