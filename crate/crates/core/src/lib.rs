//! Node classification by label propagation on sparse graphs.
//!
//! Includes one-step and two-step propagation, propagation over a truncated
//! eigenbasis of neighbour cosine similarity, the linBP and ghost-edge
//! baselines, a stochastic block model generator and an evaluation harness.

pub mod baselines;
pub mod dense;
pub mod error;
pub mod eval;
pub mod graph;
pub mod methods;
pub mod propagation;
pub mod sbm;
pub mod spectral;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use graph::{Directedness, LabelAssignment, SparseGraph};
pub use methods::{Classifier, Method, MethodParams};
pub use propagation::{PriorMatrix, PropagationConfig, ScoreMatrix};
pub use sbm::{BlockModelSpec, StructureTemplate};
pub use spectral::{EigenBasis, ProjectionWeighting, SimilarityMode};
