//! Combinatorial Yamabe flow on triangulated closed surfaces.
//!
//! Geometry lives entirely in edge lengths: a [`mesh::Triangulation`] carries
//! the combinatorics, a [`metric::PLMetric`] the lengths, and a conformal
//! factor `u = e^w` rescales edge `ij` by `u_i u_j`. The [`flow`] module
//! integrates `dw_i/dt = -(K_i - K_av)` (or the unnormalized `-K_i`), watches
//! for degenerating triangles and flips edges when one collapses.
//! [`admissibility`] decides, through a bounded circulation problem, whether
//! a triangulation carries any constant-curvature metric at all.

pub mod admissibility;
pub mod curvature;
pub mod flow;
pub mod io;
pub mod maxflow;
pub mod mesh;
pub mod metric;
pub mod shapes;
pub mod triangle;

pub use curvature::{CoefficientMatrix, CurvatureVector, TargetAngles};
pub use mesh::Triangulation;
pub use metric::{ConformalFactor, PLMetric};
