//! Model zoo, training loops, bucketed evaluation, and experiment
//! orchestration for the flood-nowcasting benchmark.
//!
//! The crate sits on top of `floodbench-core` (terrain, rainfall, CA
//! simulator, feature assembly) and `floodbench-nn` (tape autodiff,
//! layers, Adam) and adds everything between "simulated frames" and
//! "box-plot report": the model families, the three training methods,
//! the sigma-normalized metric M, and the experiment presets.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod report;
pub mod rollout;
pub mod spec;
pub mod training;

pub use error::ZooError;
pub use experiment::{preset, preset_names, run_experiment, ExperimentConfig};
pub use model::Model;
pub use spec::{Family, ModelSpec, TrainConfig, TrainMethod};
