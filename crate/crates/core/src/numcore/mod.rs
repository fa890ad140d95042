//! Dense linear algebra, fully-connected networks and Adam.

mod adam;
mod matrix;
mod mlp;

pub use adam::AdamState;
pub use matrix::{euclidean, squared_euclidean, DenseMatrix};
pub use mlp::{logistic, Activation, Layer, MlpDocument, MlpGrads, MlpParams, Tape};
