//! Bounded checking and proving of contextual equivalence for a small
//! ML-like language with higher-order functions and local references.
//!
//! The pipeline: [`parser`] turns source into [`lang`] terms, [`semantics`]
//! reduces them symbolically, [`lts`] exposes the game between a program and
//! its context, [`upto`] holds the up-to rewrites and [`engine`] explores the
//! synchronised game of two programs.

pub mod constraints;
pub mod engine;
pub mod fresh;
pub mod lang;
pub mod lts;
pub mod oracle;
pub mod parser;
pub mod semantics;
pub mod upto;
