//! The trainable field: hash-grid encoding and MLP producing one logit per
//! retained simplex, and the coordinate evaluator built on top of it.

pub mod checkpoint;
mod field;
mod hash_grid;
mod mlp;
mod params;

pub use checkpoint::{load_params, read_params, save_params, write_params, CheckpointHeader};
pub(crate) use field::Mixture;
pub use field::{sigmoid, softplus, BakedWeights, BatchTape, CoordinateField, WEIGHTS_FORMAT};
pub use hash_grid::{HashGrid, HashGridConfig};
pub use mlp::{LayerShape, Mlp};
pub use params::{FieldConfig, FieldParams, ForwardCache};
