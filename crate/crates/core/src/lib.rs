//! Front end and reference interpreter for the Layers neural-network
//! experiment language.
//!
//! The pipeline is `lexer` → `parser` → `sema` → `ir` → `engine`, with
//! `data_io` handling dataset files and data-level script commands.

pub mod ast;
mod compile;
pub mod data_io;
pub mod dot;
pub mod engine;
pub mod ir;
pub mod lexer;
pub mod parser;
pub mod sema;

pub use compile::{check, compile, compile_in, CompileError};
