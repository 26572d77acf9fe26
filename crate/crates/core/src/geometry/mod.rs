//! Meshes, point sets, spatial queries and the exact indicator.
//!
//! Sign convention used throughout the crate: the indicator is 1 inside a
//! closed surface and 0 outside, and signed distances are **positive inside**.
//! This is the opposite of most SDF libraries.

mod bvh;
mod distance;
mod kdtree;
mod mesh;
mod points;
pub mod primitives;
mod sampling;
mod winding;

pub use bvh::TriangleBvh;
pub use distance::{closest_point_on_triangle, point_triangle_distance_squared, signed_distance};
pub use kdtree::KdTree;
pub use mesh::{normalize_mesh, Aabb, TriangleMesh, MIN_TRIANGLE_AREA};
pub use points::OrientedPointSet;
pub use sampling::sample_surface;
pub use winding::{solid_angle_winding, triangle_solid_angle, ON_SURFACE_WINDING};

/// Points and vectors in world units.
pub type Vec3 = nalgebra::Vector3<f64>;
