//! amparse: semantic graph parsing with latent word-concept alignments.

pub mod error;
pub mod cli;
pub mod corpus;
pub mod decode;
pub mod eval;
pub mod graph;
pub mod model;
pub mod preprocess;
pub mod sinkhorn;
pub mod training;
pub mod verify;
pub mod tensor;

pub use error::{Error, Result};
