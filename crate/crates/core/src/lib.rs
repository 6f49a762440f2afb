//! Exact and Monte Carlo computations for moments of two-dimensional directed
//! polymers in a Gaussian environment, in the subcritical regime
//! `β_N = β̂ / √R_N`, `β̂ < 1`.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernel`]: simple-random-walk kernels `p_n(x)`, `p_n*`, `R_n`.
//! - [`scaling`]: [`PolymerParams`] and the scalar functions `λ_{T,N}`, `F`, `f`.
//! - [`polymer`]: the environment, partition-function DP and exact moment transfers.
//! - [`collisions`]: Monte Carlo over independent walks.
//! - [`renewal`]: the overlap weights `U_N(n)` and their renewal structure.
//! - [`diagrams`]: diagram enumeration, classification and the bound chain.
//! - [`khasminskii`]: discrete Khas'minskii bounds checked by exact transfer.

pub mod collisions;
pub mod diagrams;
pub mod error;
pub mod kernel;
pub mod khasminskii;
pub mod lattice;
pub mod polymer;
pub mod renewal;
pub mod rng;
pub mod scaling;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::Site;
pub use scaling::PolymerParams;
