//! Exact moment dynamics of polynomial ODEs in truncated Fock space.

pub mod error;
pub mod dynamics;
pub mod ecs;
pub mod fock;
pub mod gains;
pub mod ops;
pub mod oracle;
pub mod sysspec;

pub use error::{Error, Result};
pub use fock::C64;

/// The guide under `book/`, compiled here so its examples run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/basis.md")]
    pub struct Basis;
    #[doc = include_str!("../../../book/src/operators.md")]
    pub struct Operators;
    #[doc = include_str!("../../../book/src/gains.md")]
    pub struct Gains;
    #[doc = include_str!("../../../book/src/evolution.md")]
    pub struct Evolution;
    #[doc = include_str!("../../../book/src/coupling_series.md")]
    pub struct CouplingSeries;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
    #[doc = include_str!("../../../book/src/limits.md")]
    pub struct Limits;
}
