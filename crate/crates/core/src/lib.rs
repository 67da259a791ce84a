//! Difference-in-differences under local network interference.
//!
//! The crate estimates two causal quantities from a two-period panel whose
//! units sit on an observed network:
//!
//! - the average direct treatment effect on the treated (ADTT), the effect
//!   of a unit's own treatment holding its neighbourhood treatment vector
//!   fixed;
//! - the average indirect treatment effect on the treated (AITT), the
//!   outward spillover of treating a unit onto its neighbours' outcomes.
//!
//! Propensity scores condition on the full distance-ranked vector of
//! neighbour treatments rather than on a pre-specified exposure mapping.
//! Both inverse-probability-weighted and doubly robust estimators are
//! provided, with network-HAC standard errors.
//!
//! Module map:
//!
//! - [`graph`]: networks, BFS distances, L-nearest neighbourhoods, distance shells.
//! - [`numerics`]: Cholesky, multivariate normal draws, logistic and OLS fits.
//! - [`estimators`]: panel type, nuisance models, IPW and DR estimators.
//! - [`variance`]: kernel-weighted network HAC variance and Wald intervals.
//! - [`dgp`]: the synthetic spatial data-generating process and true effects.
//! - [`benchmarks`]: exposure-mapping and interference-ignoring comparators.
//! - [`sim`]: Monte Carlo harness and table/sweep replication.
//! - [`io`]: CSV and JSON formats plus the `estimate` workflow.

pub mod benchmarks;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod io;
pub mod numerics;
pub mod rng;
pub mod sim;
pub mod variance;

pub use error::{Error, Result};
