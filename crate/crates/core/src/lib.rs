//! Geometric reconstruction losses and mesh-fitting tools.
//!
//! The centerpiece is the quadric loss: every input vertex carries the sum of
//! the plane quadrics of its incident triangles, and a reconstructed point is
//! penalised by the quadratic form of its corresponding vertex. Chamfer,
//! normal and point-to-triangle surface losses are provided alongside it, all
//! with analytic per-point gradients, together with the machinery needed to
//! exercise them: mesh I/O and preprocessing, exact nearest-neighbour
//! correspondences, a direct Adam fit of point positions, Metro-style
//! evaluation and QEM edge-collapse simplification.
//!
//! All geometry is `f64`. Points and vectors are [`nalgebra::Vector3`].

pub mod error;
pub mod fit;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod quadric;
pub mod shapes;
pub mod simplify;
pub mod spatial;
pub mod triangle;

pub use error::{Error, Result};
pub use fit::{default_config, fit_points, FitConfig, FitError, FitTrace, InitKind, LossKind};
pub use losses::{
    chamfer_loss, combined_loss, normal_loss, quadric_loss, surface_loss, CombinedLoss, LossValue,
    LossWeights, TargetBundle,
};
pub use mesh::{Plane, PointCloud, TriangleMesh};
pub use metrics::{eval_cd, eval_metro, EvalReport};
pub use quadric::{accumulate_vertex_quadrics, plane_quadric, QuadricMatrix, VertexQuadrics};
pub use simplify::{optimal_placement, simplify_to, SimplifyResult};
pub use spatial::{correspondences, CorrespondenceMap, KdTree};
pub use triangle::{point_triangle_sqdist, Region, TriangleProjection};

/// 3D point or vector in model units.
pub type Vec3 = nalgebra::Vector3<f64>;
