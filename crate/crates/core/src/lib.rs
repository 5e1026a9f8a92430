// SPDX-License-Identifier: Apache-2.0

//! Ring-oscillator PUF toolkit: chip modelling, characterization, oscillator
//! selection, placement, response generation and evaluation.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characterize;
pub mod chipmodel;
pub mod error;
pub mod metrics;
pub mod nist;
pub mod pipeline;
pub mod placement;
pub mod puf;
pub mod rng;
pub mod select;

pub use error::{Error, Result};
