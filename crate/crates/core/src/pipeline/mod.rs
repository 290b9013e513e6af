//! Data handling, training and the nested evaluation protocol.

mod dataset;
mod evaluate;
mod grid;
mod ingest;
mod protocol;
mod split;
mod synth;
mod train;

pub use dataset::{Dataset, Sample};
pub use evaluate::{evaluate, Classifier, Evaluation, MajorityClass};
pub use grid::{grid_search_with, GridOutcome, HyperGrid, HyperPoint};
pub use ingest::{dataset_files, load_dataset, resample_linear, write_dataset, LoadOptions};
pub use protocol::{
    run_protocol, AccessAudit, AccessEvent, ExperimentReport, FittedModel, IterationReport, Phase, ProtocolOutcome,
    ProtocolSettings,
};
pub use split::{nested_split, InnerSplit, OuterSplit, SplitPlan, HOLDOUT_FRACTION, MIN_SAMPLES};
pub use synth::{series_statistics, synth_dataset, synth_fusion_dataset, LabelRule, SynthSpec, SynthTruth, Synthetic};
pub use train::{batch_gradient, train, Adam, TrainSettings, DEFAULT_BATCH_SIZE};
