//! VGG-style convolutional trunk: forward evaluation with feature capture,
//! backpropagation to the input pixels, and VGGW weight ingestion.

pub mod layers;
mod network;
mod topology;
pub mod weights;

pub use layers::{conv2d, pool2, relu};
pub use network::{backprop_to_input, forward_collect, random_weights, FeatureSet, Network, Tape};
pub use topology::{LayerKind, LayerSpec, NetworkTopology, PoolMode};
pub use weights::{layer_checksum, load_weights, save_weights, ConvParams, WeightStore};
