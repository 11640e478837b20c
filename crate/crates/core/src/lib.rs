//! Finite-dimensional laboratory for noncommutative maximal inequalities.
//!
//! Operators live in direct sums of weighted matrix blocks. On top of the
//! operator calculus sit singular value step functions, the dyadic projection
//! decomposition, weak-type oracles (Cuculescu's construction for matrix
//! martingales), the Marcinkiewicz majorant engine, weak maximal Λ-norms and
//! a convex solver for strong maximal norms.

pub mod algebra;
pub mod cli;
pub mod dyadic;
pub mod envelope;
pub mod error;
pub mod facto;
pub mod families;
pub mod io;
pub mod lambda;
pub mod marcin;
pub mod oracle;
pub mod random;
pub mod stepfn;
pub mod suite;

pub use algebra::{Algebra, Block, Operator, Projection, C64};
pub use error::{NcError, Result};
