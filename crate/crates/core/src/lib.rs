//! Runtime and toolchain for knowledge-augmented agent planning in text
//! environments: offline synthesis of task and state knowledge into a
//! retrievable knowledge base plus training corpora, and an online planner
//! fusing agent action probabilities with knowledge-base retrieval.

pub mod env;
pub mod error;
pub mod fusion;
pub mod kb;
pub mod pipeline;
pub mod planner;
pub mod provider;
pub mod trajectory;

pub use error::{Error, Result};
