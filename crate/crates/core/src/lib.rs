//! Numerical solver for backward multivalued McKean-Vlasov SDEs.
//!
//! The equation solved is of the form
//! ```text
//! dY_t ∈ A(Y_t) dt − G(t, Y_t, Z_t, L_{(Y_t,Z_t)}) dt + Z_t dW_t,   Y_T = ξ,
//! ```
//! where `A` is a maximal monotone operator on R^d and the driver `G` may
//! depend on the joint law of `(Y, Z)`. The multivalued drift is handled by
//! Yosida penalization: `A` is replaced by its single-valued Lipschitz
//! approximation `A_ε` and the penalized equation is solved by regression
//! based backward induction over a particle cloud, with an exact resolvent
//! step for the stiff monotone term. A mean-field Picard loop resolves the
//! law dependence, and an ε-sweep estimates the distance to the multivalued
//! limit.
//!
//! The induced value function `u(t, x, μ) = Y_t^{t,x,μ}` of the decoupled
//! forward-backward system is exposed through [`pvi::evaluate_u`] and cross
//! checked, in the measure-independent one-dimensional case, against an
//! implicit finite-difference solution of the penalized parabolic PDE.
//!
//! Modules:
//! - [`monotone`]: closed-form maximal monotone operators, resolvents and
//!   Yosida approximations, coercivity certificates.
//! - [`measure`]: empirical measures with finite second moment and the
//!   Wasserstein-2 metric.
//! - [`forward`]: particle Euler-Maruyama simulation of forward
//!   McKean-Vlasov SDEs and decoupled flows.
//! - [`regression`]: least-squares conditional expectation estimators.
//! - [`backward`]: the penalized backward solver, Picard loop, ε-sweep,
//!   tree oracle and Skorokhod-condition verification.
//! - [`pvi`]: the value function and the finite-difference oracle for the
//!   penalized PDE.
//! - [`harness`]: configuration, presets, reproducible experiment runs.

pub mod backward;
pub mod error;
pub mod forward;
pub mod grid;
pub mod harness;
pub mod measure;
pub mod monotone;
pub mod pvi;
pub mod regression;
pub mod rng;

pub use error::{Error, Result};
