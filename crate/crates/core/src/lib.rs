//! Utility maximization and indifference pricing in one-period incomplete
//! markets, via convex duality on Orlicz spaces.

// Negated comparisons are deliberate: they reject NaN along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admissibility;
pub mod distribution;
pub mod dual;
pub mod error;
pub mod exp_mixture;
pub mod ext;
pub mod files;
pub mod finite_market;
pub mod indifference;
pub mod linalg;
pub mod newton;
pub mod oracle;
pub mod orlicz;
pub mod primal;
pub mod quadrature;
pub mod random;
pub mod roots;
pub mod utility;
pub mod verify;

pub use error::{Error, Result};
pub use ext::ExtReal;
