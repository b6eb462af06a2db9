//! Budgeted active learning for right-censored survival data.

pub mod acquisition;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mtlr;
pub mod oracle;
pub mod select;

pub use error::{Error, Result};
