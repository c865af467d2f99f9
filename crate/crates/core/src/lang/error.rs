use std::fmt;

use thiserror::Error;

/// 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{pos}: {kind}")]
pub struct Diagnostic {
    pub pos: Pos,
    pub kind: DiagnosticKind,
}

impl Diagnostic {
    pub fn new(pos: Pos, kind: DiagnosticKind) -> Self {
        Self { pos, kind }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DiagnosticKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("missing entry task")]
    MissingEntry,
    #[error("multiple entry tasks (`{0}` and `{1}`)")]
    MultipleEntry(String, String),
    #[error("path without transition at the end of task `{0}`")]
    PathWithoutTransition(String),
    #[error("recursion detected: {0}")]
    Recursion(String),
    #[error("local `{0}` may be read before it is written")]
    ReadBeforeWrite(String),
    #[error("duplicate {0} `{1}`")]
    Duplicate(&'static str, String),
    #[error("unreachable statement after transition_to or halt")]
    Unreachable,
    #[error("{0}")]
    Invalid(String),
}
