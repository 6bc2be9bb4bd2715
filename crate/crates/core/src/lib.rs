//! Policy-mix evaluation with propensity-score matching.
//!
//! The crate covers the whole path from survey microdata to ATT tables:
//!
//! - [`dataset`]: parse delimited survey files and apply the family-farm,
//!   outcome and private-service filters;
//! - [`lattice`]: the eight Pronaf/ATER/Seeds cells and the ten contrasts;
//! - [`propensity`]: binary and multinomial logit propensity scores;
//! - [`matching`]: common support plus kernel, nearest-neighbour and radius
//!   matching;
//! - [`inference`]: bootstrap standard errors and normal-reference tests;
//! - [`diagnostics`]: group summaries, commercialisation shares and balance;
//! - [`synthetic`]: populations with known effects and a brute-force
//!   matching oracle;
//! - [`pipeline`]: the configured end-to-end run behind the `mixeval` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod lattice;
pub mod matching;
pub mod pipeline;
pub mod propensity;
pub mod synthetic;
pub mod table;

pub use error::{Error, Result};
