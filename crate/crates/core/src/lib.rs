pub mod config;
pub mod data;
pub mod efficiency;
pub mod encoder;
pub mod evaluation;
pub mod error;
pub mod integrator;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod training;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{
    BatchGradients, BranchLosses, BranchScores, CompositionalModel, LossTerms, ModelConfig, ModelKind, PromptInit,
    TrainableParams,
};
