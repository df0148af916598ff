//! Bayesian multi-armed bandits with the asymptotic randomised control (ARC)
//! policy, six baseline policies, a value-iteration oracle for the
//! one-and-a-half-armed bandit and a reproducible regret harness.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arc;
pub mod baselines;
pub mod belief;
pub mod envs;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod smoothmax;

pub use error::{BanditError, Result};
