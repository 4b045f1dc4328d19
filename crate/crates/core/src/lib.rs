//! Majorants, Green functions, Kudla-Millson forms and theta generating
//! series for quadratic lattices over `Q` and real quadratic fields.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clifford;
pub mod error;
pub mod genseries;
pub mod greens;
pub mod io;
pub mod kmform;
pub mod lattice;
pub mod linalg;
pub mod numberfield;
pub mod perioddomain;
pub mod quadspace;
pub mod whittaker;

pub use error::{Error, Result};
pub use numberfield::{FieldElement, TotallyRealField};
