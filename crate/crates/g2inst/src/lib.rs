//! Cohomogeneity-one G₂-instantons on the asymptotically conical G₂-manifold
//! M(1,1): metric profiles, singular initial value problems at the singular
//! orbit, the reduced instanton system and heteroclinic shooting in the
//! rescaled (conical) time.

// `!(x <= tol)` is used on purpose: NaN must land on the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cone_dynamics;
pub mod error;
pub mod exec;
pub mod instanton_system;
pub mod jet;
pub mod metric_profiles;
pub mod ode;
pub mod reference_solutions;
pub mod singular_ivp;
pub mod su2_invariant_algebra;

pub use error::{Error, Result};
pub use exec::Exec;
