//! Training text classifiers on noisily labelled data with help from LLM
//! confidence estimates.
//!
//! The pipeline: inject or load label noise ([`noise`]), produce augmented
//! views ([`augment`]), query an LLM for per-class confidences ([`oracle`]),
//! split training samples into easy-clean, hard-clean and true-noisy subsets
//! ([`separate`]), and train with a subset-specific objective ([`objective`],
//! [`trainer`]). [`harness`] wires the stages into reproducible experiments.

pub mod augment;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod noise;
pub mod objective;
pub mod oracle;
pub mod rng;
pub mod separate;
pub mod trainer;

pub use augment::{Augmentation, AugmentationKind, Augmenter};
pub use corpus::{ClassSet, Dataset, Sample, SplitTag};
pub use error::{LaftError, Result};
pub use noise::{FlipRecord, NoiseKind, NoiseSpec};
pub use objective::{LossBreakdown, LossWeights};
pub use oracle::{ConfidenceVector, OracleCache, OracleClient, OracleOutputs, SimulatedOracle};
pub use separate::{Subset, SubsetAssignment, ThresholdSchedule};
pub use trainer::{fit, Ablation, Method, RunRecord, TextClassifier, TrainConfig};
