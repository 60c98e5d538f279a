//! Curve-skeleton extraction for closed tubular triangle meshes and fused
//! segmentation of a second solid against that skeleton.
//!
//! The pipeline runs in three phases:
//!
//! 1. tetrahedralize the tube interior ([`tetrahedralize`]), build the dual
//!    adjacency graph of the cells ([`graph`]) and extract an adjacency tree by
//!    forward/backward shortest paths ([`tree`]);
//! 2. refine the tree into a medial axis: drop nodes outside the surface, shave
//!    hairs and straighten bumpy nodes ([`refine`]);
//! 3. assign every cell of both solids to its nearest axis node and aggregate
//!    mass properties per branch ([`segmentation`]).
//!
//! [`pipeline`] wires the phases together and emits a self-contained JSON
//! analysis bundle.

pub mod error;
pub mod fixtures;
pub mod geom;
pub mod graph;
pub mod mesh;
pub mod pipeline;
pub mod refine;
pub mod segmentation;
pub mod spatial;
pub mod tet;
pub mod tetrahedralize;
pub mod tree;

pub use error::{Error, Result};
pub use geom::{Point3, Vector3};
pub use graph::{LinkMetric, RootMode, RootSelection, SkeletonGraph};
pub use mesh::TriangleMesh;
pub use segmentation::{MedialAxis, SegmentationMap};
pub use spatial::{BucketGrid, SurfaceIndex};
pub use tet::TetComplex;
pub use tree::SkeletonTree;

/// Index of a node in a [`SkeletonGraph`]; equal to the index of the
/// tetrahedral cell the node is dual to.
pub type NodeId = usize;
