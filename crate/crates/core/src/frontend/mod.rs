//! Surface syntax: lexer, recursive-descent parser and canonical printer.
//!
//! The printer output parses back to the same tree, which is what the golden
//! tests rely on.

mod lexer;
mod parser;
mod pretty;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ir::{well_formed, Diagnostic, Program, Stmt};

pub use pretty::{pretty, pretty_expr, pretty_stmt};

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ill-formed program:\n{}", render(.0))]
    IllFormed(Vec<Diagnostic>),
}

fn render(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl FrontendError {
    pub fn syntax(line: usize, col: usize, message: impl Into<String>) -> Self {
        FrontendError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }
}

/// Source text with the path it came from (used in error messages).
#[derive(Clone, Debug)]
pub struct SourceFile {
    pub path: PathBuf,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<PathBuf>, text: impl Into<String>) -> Self {
        SourceFile {
            path: path.into(),
            text: text.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, FrontendError> {
        let text = std::fs::read_to_string(path).map_err(|source| FrontendError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(SourceFile::new(path, text))
    }
}

/// Parses and checks a source file.
pub fn parse(src: &SourceFile) -> Result<Program, FrontendError> {
    parse_str(&src.text)
}

/// Parses and checks program text.
pub fn parse_str(text: &str) -> Result<Program, FrontendError> {
    let program = parse_unchecked(text)?;
    let diags = well_formed(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(FrontendError::IllFormed(diags))
    }
}

/// Parses without running the well-formedness checks.
pub fn parse_unchecked(text: &str) -> Result<Program, FrontendError> {
    let mut p = parser::Parser::new(text)?;
    let program = p.program()?;
    p.expect_eof()?;
    Ok(program)
}

/// Parses a statement list (the inside of a block), e.g. for tests.
pub fn parse_stmt(text: &str) -> Result<Stmt, FrontendError> {
    let wrapped = format!("{{ {text} }}");
    let mut p = parser::Parser::new(&wrapped)?;
    let s = p.stmt()?;
    p.expect_eof()?;
    Ok(s)
}

/// Loads, parses and checks a file from disk.
pub fn load(path: &Path) -> Result<Program, FrontendError> {
    parse(&SourceFile::load(path)?)
}
