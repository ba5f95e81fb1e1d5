//! Dense linear algebra and ODE time stepping shared by the other modules.

pub mod linalg;
pub mod ode;

pub use linalg::{gram, outer_gram, reg_pinv_apply, solve_spd, tikhonov_solve, DenseMatrix};
pub use ode::{integrate, integrate_recorded, IntegratorConfig, Scheme, Trajectory};
