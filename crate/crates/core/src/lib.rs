pub mod a2c;
pub mod agent;
pub mod environment;
pub mod error;
pub mod grounding;
pub mod harness;
pub mod image;
pub mod nn;
pub mod teacher;
pub mod tensor;

pub use error::{Error, Result};
