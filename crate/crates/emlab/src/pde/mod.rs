//! Heat-semigroup solver for the Kolmogorov equation on a truncated box,
//! with the kernel blow-up and gradient-scaling verification suite.

pub mod fft;
pub mod kernel;
pub mod solve;

pub use kernel::{verify_kernel_blowup, HeatKernel, KernelBlowupReport};
pub use solve::{
    backward_drift_solve_1d, discover_t0, drift_pde_solve_1d, drift_pde_solve_2d,
    heat_mild_solve_2d, DriftSolveStats, GridField, GridField2, GridSpec, HeatSolver1, SourceFn,
};
