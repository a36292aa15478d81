//! Bayesian decision trees on a behavioral analog CAM.
//!
//! Train DT/BDT models ([`training`]), map them to ACAM arrays
//! ([`mapping`]), search them under device non-idealities ([`sim`]) with
//! Gaussian query perturbations from a pulse-width GRNG ([`grng`]), and
//! aggregate iterations into a class and confidence ([`inference`]).
//! [`experiments`] runs the robustness sweeps and the cost model.
//!
//! The guide in `book/` walks through each stage; its code blocks run as
//! doc-tests of this crate.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod grng;
pub mod inference;
pub mod mapping;
pub mod seed;
pub mod sim;
pub mod training;
pub mod tree;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/mapping.md")]
    mod mapping {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/grng.md")]
    mod grng {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
