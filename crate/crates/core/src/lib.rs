//! Strategic source coding over a Gray-Wyner network.
//!
//! An encoder commits to an information disclosure policy before two
//! cost-coupled decoders act; the decoders then play a Bayesian Nash
//! equilibrium of the induced game, and the encoder is scored against the
//! worst equilibrium. This crate provides the probability and information
//! primitives, the single-letter game construction, equilibrium search,
//! value bounds for factorized and unrestricted policies, and a
//! finite-blocklength simulator for the coded block game.

pub mod equilibria;
pub mod error;
pub mod game;
pub mod model;
pub mod optimizer;
pub mod probcore;
pub mod simulator;

pub use error::{Error, Result};
