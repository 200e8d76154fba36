//! Finite-probability engine for anonymized risk sharing.
//!
//! Everything is computed on finite probability spaces with strictly positive
//! outcome weights. The crate provides:
//!
//! - [`prob_core`]: spaces, random variables, partitions (discrete σ-fields),
//!   conditional expectation, convex order, comonotonicity.
//! - [`rules`]: the catalog of risk-sharing rules (identity, all-in-one,
//!   mean-adjusted, uniform, CMRS, mean-proportional, covariance, Q-CMRS,
//!   generalized CMRS, mixtures, gated rules, comonotonic improvement).
//! - [`axiom_engine`]: mechanical checkers for the fairness/anonymity axioms
//!   (AF, RF, RA, OA) and related properties (CP, ZP, UI, CM, SM, BT, IA, IB),
//!   with witness-bearing reports, plus the axiom-independence battery.
//! - [`applications`]: mining-pool, multi-pool, multi-coin and streaming
//!   revenue allocators, each with a CMRS-equivalence construction.
//!
//! Core math is generic over the scalar type through the [`Real`] trait;
//! concrete `f64` aliases live at the crate root.

pub mod applications;
pub mod axiom_engine;
pub mod prob_core;
pub mod rules;

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the engine computes with. `f32` and `f64` qualify.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + fmt::Debug + fmt::Display + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + fmt::Debug + fmt::Display + 'static
{
}

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("scalar type must represent f64 constants")
}

/// Absolute tolerance for validating that probabilities sum to one.
pub const PROB_TOL: f64 = 1e-12;

/// Tolerance used to group nearby values into one level set and to test
/// measurability: `v` and `w` fall in the same level iff
/// `|v - w| <= GROUP_TOL * max(1, |v|, |w|)`.
pub const GROUP_TOL: f64 = 1e-9;

/// Absolute tolerance for numeric comparisons in invariants and checkers.
pub const NUM_TOL: f64 = 1e-9;

/// `|v - w| <= tol * max(1, |v|, |w|)` — the level-grouping comparison.
pub(crate) fn grouped_eq<T: Real>(v: T, w: T, tol: T) -> bool {
    let scale = T::one().max(v.abs()).max(w.abs());
    (v - w).abs() <= tol * scale
}

// Concrete aliases for the common double-precision case.
pub type Space = prob_core::FiniteSpace<f64>;
pub type Var = prob_core::RandVar<f64>;
pub type Blocks = prob_core::Partition<f64>;
pub type Risks = prob_core::RiskVector<f64>;
pub type Rule = rules::RuleSpec<f64>;
pub type Alloc = rules::Allocation<f64>;
