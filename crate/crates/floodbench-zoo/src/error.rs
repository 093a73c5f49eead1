use thiserror::Error;

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("model '{model}': {detail}")]
    Model { model: String, detail: String },
    #[error("split: {0}")]
    Split(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error(transparent)]
    Nn(#[from] floodbench_nn::NnError),
    #[error(transparent)]
    Feature(#[from] floodbench_core::features::FeatureError),
    #[error(transparent)]
    Raster(#[from] floodbench_core::raster::RasterError),
    #[error(transparent)]
    Sim(#[from] floodbench_core::sim::SimError),
    #[error(transparent)]
    Rainfall(#[from] floodbench_core::rainfall::RainfallError),
    #[error("serialization: {0}")]
    Serde(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for ZooError {
    fn from(e: serde_json::Error) -> Self {
        ZooError::Serde(e.to_string())
    }
}

impl From<csv::Error> for ZooError {
    fn from(e: csv::Error) -> Self {
        ZooError::Serde(e.to_string())
    }
}
