//! Joint object categorization and viewpoint estimation from multi-view
//! images, with per-image viewpoint labels treated as latent variables that
//! are aligned during training instead of supervised.
//!
//! The crate is organized around the training-time mechanism:
//!
//! * [`geometry`] — discrete camera rigs and their admissible image-to-viewpoint
//!   assignment candidates (cyclic groups for turntable rigs, the 60-element
//!   rotation group for the dodecahedral rig);
//! * [`model`] — a small dense/conv network with exact analytic gradients, a
//!   grouped-softmax head producing one (N+1)-way distribution per viewpoint,
//!   and momentum SGD;
//! * [`alignment`] — candidate scoring, target construction and the alternating
//!   training loop that re-estimates the latent assignments every step;
//! * [`inference`] — aggregation of partial view sets into category and pose
//!   predictions, sequential updating, and the evaluation harness;
//! * [`data`] — a synthetic multi-view dataset generator with a documented
//!   container format;
//! * [`baselines`] — late view-pooling and joint fine-grained classifiers for
//!   comparison, plus the rig-orientation experiment.

pub mod alignment;
pub mod baselines;
pub mod data;
pub mod geometry;
pub mod inference;
pub mod model;

pub use alignment::{
    alignment_variance, build_targets, score_candidate, select_assignment, train,
    AssignmentResult, TargetMatrix, TrainConfig, TrainHistory,
};
pub use data::{generate_dataset, Dataset, DatasetConfig, MultiViewSample, SyntheticObject};
pub use geometry::{
    angular_error_deg, enumerate_candidates, RotationCandidate, SetupCase, ViewpointSetup,
};
pub use inference::{evaluate, predict, Metrics, PoseTable, Prediction, SequentialState};
pub use model::{
    loss_fixed_assignment, Image, Network, NetworkConfig, PredictionMatrix, SgdMomentum,
};
