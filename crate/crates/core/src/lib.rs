//! Leray-α dynamics on the periodic torus and synthesis of local null
//! controls that stay bounded as the filter width `α` shrinks.
//!
//! The crate is organized bottom-up:
//!
//! * [`spectral`]: Stokes eigenbasis, transforms, operator powers, semigroup.
//! * [`filter`]: the Helmholtz smoothing `(I + α²A)⁻¹`.
//! * [`dynamics`]: Leray-α, Oseen and adjoint integrators plus diagnostics.
//! * [`control`]: penalized HUM controls for the Oseen system.
//! * [`nonlinear`]: fixed-point null control of the full Leray-α system.
//! * [`experiments`]: α-sweeps and the acceptance suite.
//! * [`io`]: run configuration, artifacts and manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod acceptance;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod io;
pub mod nonlinear;
pub mod oracle;
pub mod spectral;

pub use error::{Error, Result};
