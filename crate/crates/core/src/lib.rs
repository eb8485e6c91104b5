//! Symbolic engine for parametrized p-adic integrals over Q_p.

pub mod cells;
pub mod cli;
pub mod decompose;
pub mod error;
pub mod expr;
pub mod integrate;
pub mod oracle;
pub mod padic;
pub mod poly;
pub mod sums;

pub use error::{Error, Result, SourceSpan};
