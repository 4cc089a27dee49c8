//! Domain types, dataset ingestion, and the source-pair split protocol.

mod dataset;
mod split;
mod types;

pub use dataset::{
    load_dataset, load_manifest, read_problem_csv, write_manifest, write_problem_csv,
    DatasetManifest, ProblemEntry,
};
pub use split::{split_by_source_pair, validate_arity};
pub use types::{ERProblem, FeatureVector, ProblemId, RecordRef, SourcePair};
