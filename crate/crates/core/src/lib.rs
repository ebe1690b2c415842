//! Lottery-ticket experiments on small networks: training, magnitude pruning,
//! subnetwork protocols, ticket verdicts and loss landscapes.

pub mod adjudicate;
pub mod data;
pub mod error;
pub mod landscape;
pub mod nn;
pub mod optim;
pub mod protocol;
pub mod prune;
pub mod scalar;
pub mod store;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Snapshot32 = nn::WeightSnapshot<f32>;
pub type Snapshot64 = nn::WeightSnapshot<f64>;
