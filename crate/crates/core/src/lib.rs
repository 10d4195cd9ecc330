//! Finite-scale laboratory for approximate homomorphisms `G -> Sym(d)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`group`] — a closed catalog of countable groups with exact normal forms
//!   and finite windows (balls in the word metric).
//! * [`perm`] — permutations of `{0, .., d-1}` and the normalized Hamming metric.
//! * [`approx`] — approximate homomorphisms: construction from exact actions,
//!   evaluation, perturbation, block sums, padding and defect measurement.
//! * [`irs`] — empirical stabilizer-pattern statistics on windows.
//! * [`bernoulli`] — cylinder functions, the labelled microstate map, closed-form
//!   integrals against the IRS-Bernoulli measure and exact mean/variance oracles.
//! * [`relation`] — defect metrics for sequential sofic approximations of the
//!   orbit equivalence relation.
//! * [`conjugacy`] — search for a conjugating permutation between two
//!   approximate homomorphisms.
//!
//! All counting statistics are exact rationals ([`Frac`]); real-valued
//! reductions go through [`sum::ExactSum`] so results do not depend on the
//! number of worker threads.

pub mod approx;
pub mod bernoulli;
pub mod conjugacy;
mod error;
pub mod group;
pub mod irs;
pub mod perm;
pub mod relation;
pub mod rng;
pub mod sum;

pub use approx::{ActionSpec, ApproxHom, DefectReport};
pub use bernoulli::{CylinderFunction, Labels, StepFunction};
pub use conjugacy::{AlignParams, AlignmentProblem, AlignmentResult};
pub use error::{Error, Result};
pub use group::{Element, GroupKind, GroupSpec, Window};
pub use irs::{IrsWindowSpec, Pattern, PatternMeasure};
pub use perm::Permutation;
pub use relation::{CylinderSet, SoficApproxData};

/// Exact rational used for every counting statistic.
pub type Frac = num_rational::Ratio<i128>;

/// `num / den` as a [`Frac`].
pub fn frac(num: i128, den: i128) -> Frac {
    Frac::new(num, den)
}

/// Lossy conversion used when an exact statistic meets a real tolerance.
pub fn frac_to_f64(x: &Frac) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Default cap on the number of points of a permutation.
pub const DEGREE_CAP: usize = 10_000_000;
