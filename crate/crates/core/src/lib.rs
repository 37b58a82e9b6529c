//! Single time-scale stochastic subgradient method with subgradient averaging
//! for constrained nonsmooth nonconvex problems `min_{x in X} f(x)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`], [`feasible`], [`schedule`]: numeric types, boxes, stepsizes.
//! - [`gap`]: the gap function `eta(x, z)` and its minimiser `ybar(x, z)`.
//! - [`oracle`]: stochastic subgradient oracles and convex test problems.
//! - [`relu`]: the ReLU network loss and its backward-pass selection.
//! - [`optimizer`]: the averaged method and the plain projected baseline.
//! - [`chain`]: numerical checks of the chain rule along paths.
//! - [`dynamics`]: Euler integration of the limiting flow with a Lyapunov monitor.
//! - [`data`]: datasets, traces and experiment configs.
//! - [`experiment`], [`validate`]: the pieces the command-line driver runs.

pub mod chain;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod feasible;
pub mod gap;
pub mod linalg;
pub mod optimizer;
pub mod oracle;
pub mod problems;
pub mod relu;
pub mod schedule;
pub mod validate;

pub use error::{Error, Result};
pub use feasible::{project_box, BoxConstraint, FeasibleSet};
pub use gap::{eta, stationarity_ok, ybar, GapResult};
pub use linalg::{Matrix, Vector};
pub use optimizer::{IterateState, Method, Trace, TraceRow};
pub use oracle::{NoiseSpec, Oracle, Selection, SubgradientEstimate};
pub use schedule::{AlgoParams, StepLaw, StepSchedule};
