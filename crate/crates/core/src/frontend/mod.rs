//! Query frontends. Both lower to the same [`LogicalDag`](crate::ir::LogicalDag).

mod cypher;
mod equiv;
mod lexer;
mod steps;
mod unparse;

use std::fmt;

use serde::Serialize;

pub use cypher::{cypher_parse, parse_pattern};
pub use equiv::{canonical_form, frontend_equivalence};
pub use steps::{steps_to_dag, AggSpec, OrderKey, Step, Steps};
pub use unparse::unparse;

/// A user-facing error with a 1-based source position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: u32, col: u32, message: impl Into<String>) -> Self {
        Diagnostic { line, col, message: message.into() }
    }

    pub fn at(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic::new(pos.line, pos.col, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}
