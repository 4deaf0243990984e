//! Active learning with calibrated confidence estimates and uncertainty
//! clipping.
//!
//! The crate bundles a small multilayer perceptron learner with several
//! training objectives, a family of confidence estimators, uncertainty-based
//! query strategies, a pool-based active learning simulator, and post-hoc
//! analyses over the simulator's result files.

pub mod analysis;
pub mod confidence;
pub mod data;
pub mod error;
pub mod learner;
pub mod math;
pub mod rng;
pub mod simulator;
pub mod strategy;

pub use confidence::ConfidenceReport;
pub use data::{generate_blobs, BlobConfig, Dataset, PoolState, SyntheticData};
pub use error::{Error, Result};
pub use learner::{train, HeadKind, LearnerConfig, LearnerModel, LossKind};
pub use simulator::{
    run_experiment, run_repetition, Clock, ExperimentConfig, ExperimentResult, Method, MethodParams, StepClock,
    WallClock,
};
pub use strategy::{QueryRequest, StrategyKind};
