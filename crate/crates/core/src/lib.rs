//! Generative semantic coding at desk scale.
//!
//! An image is sent as a short caption plus a few quantized latent channels
//! chosen by structural similarity. The receiver regenerates the image with a
//! rectified-flow model whose frozen caption-conditioned trunk is steered by a
//! zero-initialized control branch fed with the transmitted channels.

pub mod bitstream;
pub mod codec;
pub mod config;
pub mod error;
pub mod eval;
pub mod flow;
pub mod image;
pub mod modelfile;
pub mod numerics;
pub mod par;
pub mod scene;
pub mod pipeline;
pub mod select;
pub mod sweep;
pub mod theory;
mod wire;

pub use error::{GscError, Result};
pub use par::Exec;
