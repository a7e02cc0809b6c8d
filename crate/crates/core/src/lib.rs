//! Topic models trained by spiking neural networks.
//!
//! The network has one neuron per word, per document and per topic. Word and
//! document neurons drive topic neurons through log-space synapses `M^α`
//! and `M^β`; topic neurons compete in a Poisson race whose winner is a
//! sample from the topic posterior. Local learning rules on the synapses then
//! implement collapsed Gibbs sampling (SpikeCGS), online MAP estimation for
//! LDA (ed-, du- and semi-SpikeLDA) or maximum likelihood for pLSI
//! (SpikePLSI).
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases below
//! fix the common `f64` instantiation.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod online;
pub mod pruning;
pub mod scalar;
pub mod snn;
pub mod synth;
pub mod verify;

pub use corpus::{Corpus, FoldInSplit};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use snn::{Hyperparams, NetworkWeights};

pub type Weights = snn::NetworkWeights<f64>;
pub type Weights32 = snn::NetworkWeights<f32>;
pub type Hyper = snn::Hyperparams<f64>;
pub type Hyper32 = snn::Hyperparams<f32>;
pub type TopicModel = eval::DenseTopicModel<f64>;
pub type Checkpoint = checkpoint::Checkpoint<f64>;
