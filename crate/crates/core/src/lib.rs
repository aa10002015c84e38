//! Variational generalized barycentric coordinates.
//!
//! A trainable field maps interior points of a polygon or polyhedron cage to
//! a masked categorical distribution over virtual simplices spanned by cage
//! vertices. Mixing the simplices' barycentric coordinates through that
//! distribution yields coordinates that satisfy non-negativity, partition of
//! unity and reproduction by construction, while the field itself is
//! optimized for smoothness or deformation-aware energies.

pub mod deform;
pub mod energies;
pub mod error;
pub mod geometry;
pub mod neural_field;
pub mod oracle;
mod scalar;
pub mod simplex_enum;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

/// Training precision.
pub type Cage32 = geometry::Cage<f32>;
/// Reference precision used by the oracles and gradient checks.
pub type Cage64 = geometry::Cage<f64>;
pub type Field32 = neural_field::CoordinateField<f32>;
pub type Field64 = neural_field::CoordinateField<f64>;
pub type Mesh32 = geometry::InteriorMesh<f32>;
pub type Mesh64 = geometry::InteriorMesh<f64>;
