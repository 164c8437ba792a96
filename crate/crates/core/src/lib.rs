//! First-order solvers for composite objectives `F(Kx) + G(x)` where `F` and
//! `G` may be nonconvex, built around the mirrored convex/concave (MOCCA)
//! primal-dual iteration.
//!
//! The crate is organised bottom-up:
//!
//! * [`linops`] - the linear map `K`, diagonal step-size matrices and the
//!   row/column-sum preconditioners.
//! * [`funcs`] - convex building blocks with metric proximal maps, smooth
//!   terms, and the local convex approximation families `F_v` / `G_z`.
//! * [`solver`] - MOCCA (basic and inner-loop forms), Chambolle-Pock, the
//!   ADMM form, proximal gradient and approximate proximal gradient.
//! * [`diagnostics`] - change norms, the optimality gap and iteration traces.
//! * [`experiments`] - seeded generators and runners for the two
//!   total-variation simulations.

pub mod diagnostics;
pub mod experiments;
pub mod funcs;
pub mod linops;
pub mod solver;
pub mod vector;

pub use diagnostics::{IterationTrace, Status, TraceRecord};
pub use funcs::{ApproxFamily, CompositeProblem, ConvexFunction, FuncError, SmoothFunction};
pub use linops::{BlockStructure, DiagonalScaling, LinearOperator, LinopError};
pub use solver::{SolveError, SolverConfig};
