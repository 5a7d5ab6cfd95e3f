//! Numerical core for a three-species reaction-cross-diffusion system
//!
//! ```text
//!   d_t u_i - Lap F_i(u) = Q_i(u),   i = 1, 2, 3,   no-flux boundary,
//! ```
//!
//! with the reversible reaction `A <-> B + C` at relaxation time `eps`, on a
//! one-dimensional cell-centred finite-volume grid. The crate provides:
//!
//! * [`model`]: the nonlinearity bundles (power-law family, identity preset,
//!   user callbacks) and numeric validators for the structural assumptions;
//! * [`maps`]: the diffusion map `F`, the equilibrium map `g`, their
//!   inverses, and the entropy flux `J_i`;
//! * [`grid`]: the no-flux Laplacian and discrete integration;
//! * [`stepper`]: the implicit Euler scheme with regularized reactions;
//! * [`entropy`]: entropy functionals, dissipation terms and the duality
//!   monitor;
//! * [`fastlimit`]: the reduced two-variable system and the `eps -> 0` sweep.
//!
//! The crate is `no_std` (it needs `alloc`). Elementary functions come from
//! `libm` so results do not depend on the platform math library.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod entropy;
mod error;
pub mod fastlimit;
pub mod grid;
pub mod linalg;
pub mod maps;
pub mod model;
pub(crate) mod num;
pub mod quad;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::Grid1D;
pub use maps::{Pair, Triple};
pub use model::{CustomModel, Identity, ModelFunctions, PowerLaw, PowerLawParams};
pub use stepper::{SchemeParams, State};
