//! Straggler-resilient federated linear regression.
//!
//! Two coded training schemes and a conventional baseline, all driven by a
//! seeded latency simulator:
//!
//! * **CodedPaddedFL** ([`protocols::padded`]): devices one-time pad their
//!   precomputed gradient and Gram matrices, share them with `α − 1` peers
//!   according to a cyclic gradient code, and the server decodes the global
//!   gradient from the `D − α + 1` fastest devices.
//! * **CodedSecAgg** ([`protocols::secagg`]): devices Shamir-share the same
//!   matrices over a prime field; the server reconstructs only the global
//!   aggregate from the `k'` fastest shares, with hierarchical relaying when
//!   devices are grouped.
//! * **Conventional FL** ([`protocols::conventional`]): mini-batch federated
//!   gradient descent that optionally drops the slowest devices.
//!
//! Device-side arithmetic is fixed point ([`fxp`]); secret sharing lives in
//! [`secret`]; the gradient code in [`coding`]; data handling and the real
//! valued reference path in [`learning`]; the stochastic latency model in
//! [`latency`]; and the experiment runner behind the `codedfl` binary in
//! [`harness`].

pub mod coding;
pub mod error;
pub mod fxp;
pub mod harness;
pub mod latency;
pub mod learning;
pub mod protocols;
pub mod secret;

pub use error::{Error, Result};
