pub mod container;
pub mod decode;
pub mod error;
pub mod harness;
pub mod numcore;
pub mod prompts;
pub mod unitizer;
pub mod unitlm;
pub mod verbalizer;

pub use error::{Error, Result};
