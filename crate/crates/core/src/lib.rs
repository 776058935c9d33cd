//! Numerical core for measuring and bounding the uniform argument stability
//! of stochastic (sub)gradient descent on η-approximately smooth losses,
//! including adversarial surrogates `h(θ, z) = max_{‖z' − z‖_p ≤ ε} g(θ, z')`.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function
//! of its inputs and a seed; IO, configuration files and parallel fan-out
//! live in the `stablab` companion crate.
//!
//! Layout:
//! - [`objective`]: loss families, subgradient oracles, analytic constants.
//! - [`smoothness`]: empirical constant estimation and randomized lemma checks.
//! - [`schedule`] and [`engine`]: step-size rules and projected SGD runs.
//! - [`stability`]: neighboring datasets, coupled runs, gap estimates.
//! - [`bounds`]: closed-form upper/lower bounds and trade-off curves.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod bounds;
pub mod engine;
pub mod error;
pub mod math;
pub mod objective;
pub mod rng;
pub mod schedule;
pub mod smoothness;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
pub use objective::{
    AdversarialConfig, ConstantsRecord, Example, ExampleDistribution, Family, HardInstanceParams,
    InnerSolver, Objective, PNorm, Provenance,
};
pub use schedule::ScheduleSpec;
