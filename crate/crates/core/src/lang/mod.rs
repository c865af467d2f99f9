//! The task language: lexing, parsing, validation, printing, and CFGs.

pub mod cfg;
pub mod error;
pub mod ir;
mod lexer;
mod parser;
pub mod printer;
mod resolve;

pub use error::{Diagnostic, DiagnosticKind, Pos};
pub use ir::*;
pub use printer::print_program;

/// Parses and validates a `.at` source file.
pub fn parse_program(src: &str) -> Result<Program, Diagnostic> {
    resolve::resolve(parser::parse_surface(src)?)
}
