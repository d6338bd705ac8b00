//! Diversity analysis for manual test repositories.
//!
//! The pipeline turns each test into a text document (requirements, name or
//! steps), compares documents through character k-gram Jaccard distances,
//! orders or samples tests by diversity, scores the resulting subsets with
//! APFD and word redundancy, and projects distance matrices onto 2-D
//! similarity maps with classical multidimensional scaling.
//!
//! ```text
//! corpus ──> similarity ──> prioritize ──> metrics
//!                 │                            │
//!                 └──────> mds ──> study <─────┘ ──> export
//! ```

pub mod corpus;
pub mod export;
pub mod mds;
pub mod metrics;
pub mod prioritize;
pub mod rng;
pub mod similarity;
pub mod study;

pub use corpus::{
    build_version_snapshots, extract_document, load_repository, CorpusError, DiversitySource,
    ExecutionRecord, Outcome, PoolMode, Requirement, Step, TestCase, TestRepository,
    VersionSnapshot,
};

pub use mds::{classical_mds, stress, Embedding, MdsError};
pub use metrics::{apfd, redundancy, tokenize, FailureProfile, MetricResult, MetricsError};
pub use prioritize::{
    dbp_prioritize, manual_subset, random_select, PrioritizeError, PrioritizedSubset,
    SelectionTechnique,
};
pub use study::{run_study, StudyConfig, StudyError, StudyReport};
pub use similarity::{
    build_distance_matrix, jaccard_distance, shingle, DistanceMatrix, ShingleConfig, ShingleSet,
    SimilarityError,
};

