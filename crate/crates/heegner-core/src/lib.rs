//! Exact arithmetic for imaginary quadratic orders and p-adic height identities.
//!
//! The crate is organised bottom-up:
//!
//! - [`arith`]: integer utilities (factorization, Kronecker symbols, Hensel
//!   lifting, truncated p-adic residues, formal logarithm sums, binary form
//!   representation counts);
//! - [`forms`]: reduced binary quadratic forms of negative discriminant;
//! - [`klattice`]: rank-2 lattices in an imaginary quadratic field K given by
//!   exact rational bases, with HNF normalisation, products, inverses and
//!   intersections — the working representation for fractional ideals;
//! - [`orders`]: orders `Z + c·O_K`, their Picard groups via reduced forms,
//!   ideal-class bookkeeping, counting functions and genus characters;
//! - [`hecke`]: the Hecke action `T_m` on classes of CM lattices, with an
//!   independent sublattice-enumeration oracle and norm-compatibility checks
//!   along conductor towers;
//! - [`lfun`]: divisor-sum coefficients with genus-character twists and the
//!   coefficient formulas they feed into;
//! - [`quat`]: local data of definite quaternion algebras, Eichler-type
//!   lattices, and the three independent evaluation routes for the arithmetic
//!   intersection sums they control;
//! - [`qexp`]: truncated q-expansions, p-stabilisation of a newform and the
//!   ordinary-projection linear functional.

pub mod arith;
pub mod error;
pub mod forms;
pub mod hecke;
pub mod klattice;
pub mod lfun;
pub mod orders;
pub mod qexp;
pub mod quat;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
