//! Multi-view graph convolutional recommender for internal talent search.
//!
//! Email logs yield two views of the organization: a structure network of
//! who exchanges mail with whom, and a semantic network linking employees
//! whose subject-line topics are similar. Dual GCN towers learn node
//! embeddings over each view, a fusion head (gating by default) combines
//! them, and candidates for a departing employee are ranked by cosine
//! similarity in the fused space. Training uses weak labels: two employees
//! sharing a job family and role form a positive pair.

pub mod baseline;
pub mod centrality;
pub mod embed;
pub mod error;
pub mod eval;
pub mod features;
pub mod graphs;
pub mod linalg;
pub mod model;
pub mod orgdata;
pub mod pipeline;
pub mod textprep;
pub mod trainer;

pub use error::{Error, Result};
