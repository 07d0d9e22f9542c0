//! Monotonic groves of neural additive models.
//!
//! A grove is an additive model whose terms are small networks over groups of
//! features. This crate trains groves under individual, weak pairwise and
//! strong pairwise monotonicity constraints, certifies trained models on
//! lattices, and tests whether two feature sets can sit in separate groups.
//!
//! - [`schema`]: features, constraint specs and group derivation.
//! - [`diffcore`]: subnets with closed-form input derivatives.
//! - [`grove`]: the additive model.
//! - [`grid`]: evaluation lattices.
//! - [`penalty`]: the three constraint penalties and their gradients.
//! - [`trainer`]: penalty escalation training.
//! - [`certifier`]: derivative and value checks.
//! - [`separability`]: grouping tests.
//! - [`dataio`], [`metrics`]: loading, splitting, scaling and scoring.

pub mod certifier;
pub mod dataio;
pub mod diffcore;
pub mod error;
pub mod grid;
pub mod grove;
pub mod metrics;
pub mod penalty;
pub mod schema;
pub mod separability;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    struct Intro;
    #[doc = include_str!("../../../book/src/schema.md")]
    struct Schema;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/penalties.md")]
    struct Penalties;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/certification.md")]
    struct Certification;
    #[doc = include_str!("../../../book/src/separability.md")]
    struct Separability;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
