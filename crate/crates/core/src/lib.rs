pub mod analysis;
pub mod compression;
pub mod data;
pub mod evaluation;
pub mod scalar;
pub mod tensor;
pub mod training;
pub mod ttn;

pub use scalar::Scalar;
pub use tensor::DenseTensor;
pub use ttn::{TtnModel, TreeTopology, FeatureSpec};

/// Double-precision tensor.
pub type Tensor = DenseTensor<f64>;
/// Double-precision classifier.
pub type Model = TtnModel<f64>;
