//! Problem registry, expression language, and experiment drivers for the
//! `wg` command-line tool.

pub mod driver;
pub mod expr;
pub mod problems;
