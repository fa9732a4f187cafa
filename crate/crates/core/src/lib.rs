//! Graph layout from random-walk skip-gram embeddings.
//!
//! The pipeline samples uniform random walks, trains skip-gram node vectors
//! with negative sampling, turns them into cosine dissimilarities and draws
//! the graph by stochastic gradient descent on a weighted stress against
//! those dissimilarities. Layouts are scored with scale-normalized stress
//! against hop distances. A per-node residual MLP ([`neural`]) learns to
//! predict layouts directly from embeddings.

pub mod bench;
pub mod embed;
pub mod error;
pub mod graph;
pub mod layout;
pub mod methods;
pub mod metrics;
pub mod neural;
pub mod pairs;
pub mod render;
pub mod seed;
pub mod walks;

pub use error::{Error, Result};
