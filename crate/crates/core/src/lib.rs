//! Normalizing flows built from strictly increasing Bernstein-type
//! polynomials.
//!
//! The crate is organised bottom-up: [`bernstein`] evaluates and converts
//! polynomials and measures their conditioning, [`monotone`] maps
//! unconstrained vectors to strictly increasing coefficients, [`rootfind`]
//! inverts the resulting polynomials, [`flow`] stacks them into
//! autoregressive layers, [`train`] fits them by maximum likelihood with
//! exact gradients and [`datasets`] supplies data.

// Checks such as `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bernstein;
pub mod datasets;
pub mod error;
pub mod flow;
pub mod monotone;
pub mod rootfind;
pub mod train;

pub use bernstein::{BernsteinPoly, DomainPolicy, Interval, PowerPoly};
pub use datasets::{Dataset, MixtureSpec1D};
pub use error::{Error, Result};
pub use flow::{FlowConfig, FlowModel, PriorKind, PriorSpec, TargetDiffeo};
pub use monotone::{CoeffVector, MonotoneParams, Scheme};
pub use rootfind::{RootConfig, RootMethod};
pub use train::{TrainConfig, TrainHistory};
