//! Static pose of a rigid multi-wheel vehicle over uneven terrain.
//!
//! The vehicle is held at a planar position and yaw and dropped under
//! gravity onto a B-spline terrain. Wheel contact forces come from the SVD
//! pseudo-inverse of the contact matrix at every step; the drop ends when
//! gravity and contact forces are in static equilibrium, yielding the height,
//! roll and pitch of the vehicle together with the loaded wheels. A Lemke
//! LCP solver over the same contact problems serves as a reference.
//!
//! Modules, bottom up:
//! - [`terrain`]: bicubic B-spline surface, height/normal queries, paths.
//! - [`vehicle`]: vehicle model, wheel placement, wrench matrices.
//! - [`contact`]: contact problem assembly and the SVD force solve.
//! - [`lcp`]: Lemke's method and the LCP form of the contact problem.
//! - [`pose`]: the drop simulation and path sweeps.
//! - [`scenario`], [`bench`]: file-driven runs and timing comparisons.

pub mod bench;
pub mod contact;
pub mod error;
pub mod lcp;
pub mod pose;
pub mod scenario;
pub mod terrain;
pub mod vehicle;

pub use contact::{assemble, pseudo_inverse, solve_forces, ContactProblem, SvdThreshold};
pub use error::{Error, Result};
pub use lcp::{lcp_contact_forces, lemke_solve, LcpProblem, LcpSolution, LcpStatus};
pub use pose::{estimate_pose, pose_along_path, DropState, PoseResult, SolverParams};
pub use terrain::{eval_patch, eval_path, ControlGrid, SurfacePath, TerrainSurface};
pub use vehicle::{ForceMode, FullConfiguration, Heading, VehicleModel, GRAVITY};
