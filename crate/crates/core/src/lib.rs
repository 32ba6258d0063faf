//! Online selection of proportionally representative committees.
//!
//! Candidates described by categorical features arrive one at a time from a
//! stationary distribution, and each must be accepted or rejected on the
//! spot until `K` have been accepted. The crate provides
//!
//! * a quota-based [`policies::GreedyState`] strategy,
//! * the constrained-MDP strategy for a known distribution, whose stationary
//!   policy comes from an occupation-measure linear program ([`cmdp`]),
//! * optimistic learners for an unknown distribution that re-plan on
//!   ℓ1-ball or empirical-Bernstein confidence sets ([`policies::LearnerState`]),
//! * a seeded Monte-Carlo [`simulator`] measuring sample complexity,
//!   representation loss and regret.

pub mod brexit;
pub mod cmdp;
pub mod distribution;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod lp;
pub mod policies;
pub mod simulator;

pub use error::{Error, Result};
