//! Source text to IR in one call.

use std::path::Path;

use thiserror::Error;

use crate::ir::{lower, IrProgram};
use crate::parser::{parse_source, SyntaxError};
use crate::sema::{analyze, Analysis, DataProvider, Diagnostic, FsData};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{} semantic error(s)", .0.len())]
    Semantic(Vec<Diagnostic>),
}

impl CompileError {
    /// One `<file>:<line>:<col>: error <code>: <message>` line per problem.
    pub fn render(&self, file: &str) -> Vec<String> {
        match self {
            CompileError::Syntax(e) => {
                let s = e.span();
                vec![format!("{file}:{}:{}: error {}: {e}", s.line, s.col, e.code())]
            }
            CompileError::Semantic(ds) => ds.iter().map(|d| d.render(file)).collect(),
        }
    }
}

pub fn check(source: &str, provider: &dyn DataProvider) -> Result<Analysis, CompileError> {
    let exp = parse_source(source)?;
    analyze(&exp, provider).map_err(CompileError::Semantic)
}

pub fn compile(source: &str, provider: &dyn DataProvider) -> Result<IrProgram, CompileError> {
    Ok(lower(&check(source, provider)?))
}

/// Compiles with data headers read from files relative to `base_dir`.
pub fn compile_in(source: &str, base_dir: &Path) -> Result<IrProgram, CompileError> {
    compile(source, &FsData::new(base_dir))
}
