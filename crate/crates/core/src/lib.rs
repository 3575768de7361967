// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod gibbs;
pub mod hermite;
pub mod mehler;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use hermite::{QuadratureGrid, SpectralState, C64};
