//! Clearing prices for an asset with outstanding short interest when the
//! short seller is subject to margin calls.
//!
//! External buyers purchase `c` (a fraction of average daily volume) of the
//! asset. Prices follow a linear inverse demand `f(x) = 1 + beta x`, and a
//! short seller whose margin account no longer covers the maintenance
//! requirement buys shares back, pushing the price further up. The crate
//! computes the realized clearing price in closed form ([`analytic`]),
//! checks it by bisection ([`oracle`]), locates the capital threshold `c*`
//! that triggers a margin call and the short-interest threshold `s*` above
//! which the price jumps at `c*`, and produces sweeps and per-ticker
//! reports ([`scenario`]).

// `!(x >= 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod error;
pub mod model;
pub mod oracle;
pub mod scenario;

pub use error::{Error, Result, Violation};
pub use model::{Branch, ClearingOutcome, MarketParams, PhysicalSnapshot, SqueezeReport};
