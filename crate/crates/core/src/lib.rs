//! Trace-based dependency analysis and source-level repair for EVM contracts.
//!
//! The pipeline enumerates bounded symbolic traces of a decoded program,
//! builds a CFG from them, derives control and data dependency, checks four
//! vulnerability definitions and rewrites the contract source.

pub mod bundle;
pub mod cfg;
pub mod dependency;
pub mod detect;
pub mod error;
pub mod evm;
pub mod patch;
pub mod pipeline;
pub mod replay;
pub mod symbolic;
pub mod word;

pub use error::{Error, Result};
pub use word::Word;
