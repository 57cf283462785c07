//! Post-selection inference for multiverse analysis.
//!
//! Sign-flip score tests for a GLM coefficient of interest, combined across a
//! multiverse of model specifications through shared sign flips. Provides
//! global p-values, maxT-adjusted per-specification p-values, lower confidence
//! bounds on the true discovery proportion, competitor methods, and Monte
//! Carlo scenario harnesses.

pub mod competitors;
pub mod config;
pub mod data;
pub mod error;
pub mod glm;
pub mod multiverse;
pub mod signflip;
pub mod sim;
pub mod spline;

pub use error::{Error, Result};
