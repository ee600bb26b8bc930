//! Grayscale image colorization by Gram-matrix style transfer.
//!
//! The content of a grayscale image (deep features of a VGG-19 trunk) is
//! combined with the style of a color image (Gram matrices of shallower
//! features) by minimizing a weighted loss over the pixels of a canvas
//! image. The style weight decays by 0.25% per iteration and the default
//! optimizer is L-BFGS.

pub mod cli;
pub mod colorpipe;
pub mod convnet;
pub mod error;
pub mod optim;
pub mod styleloss;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
