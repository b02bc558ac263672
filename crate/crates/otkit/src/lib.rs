//! Solvers for discrete and semi-discrete optimal transport built on
//! Kantorovich duality.
//!
//! The crate covers four routes to a dual potential:
//!
//! - [`auction`]: Bertsekas' auction algorithm with eps-scaling for the
//!   linear assignment problem.
//! - [`sinkhorn`]: entropic regularization of discrete transport, solved by
//!   Sinkhorn-Knopp block coordinate ascent in the log domain.
//! - [`geometry`] + [`semidiscrete`]: exact Laguerre tessellations in the
//!   plane for the quadratic cost, driving the Oliker-Prussner coordinate
//!   decrement scheme and a damped Newton method.
//! - [`sd_entropic`]: the entropic variant of the semi-discrete problem,
//!   with smoothed cells integrated by triangle quadrature.
//!
//! [`oracles`] holds independent ground-truth generators (exhaustive
//! enumeration, finite differences, grid scans) used by the test suites;
//! they deliberately avoid the solver code paths.

pub mod auction;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mat;
pub mod measures;
pub mod oracles;
pub mod sd_entropic;
pub mod semidiscrete;
pub mod sinkhorn;
pub mod svg;

pub use error::{Error, Result};
pub use mat::Mat;
pub use measures::{
    c_transform, kantorovich_value, osc_norm, plan_diagnostics, CostMatrix, DiscreteMeasure,
    PlanReport, Potential, TransportPlan,
};
