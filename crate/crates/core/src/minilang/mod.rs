//! MiniLang: a small C-like language and its toolchain (parser, resolver,
//! code generator, assembler) targeting the guest ISA, plus a reference
//! interpreter used as a differential oracle. The grammar is documented in
//! `docs/minilang.md`.

mod asm;
mod ast;
mod codegen;
mod interp;
mod parse;
mod resolve;

use std::fmt;

use thiserror::Error;

use crate::isa::GuestImage;

pub use asm::{AsmItem, AsmOp, AsmUnit, Operand};
pub use ast::{BinOp, Expr, Function, Program, Slot, Stmt, UnOp};
pub use interp::{interpret_minilang, interpret_program, interpret_with_fuel, Fault, Interpretation, DEFAULT_FUEL};

/// First word of the globals block, just past the largest input.
pub const GLOBAL_BASE: u32 = 0x8100;
/// One past the last global word.
pub const GLOBAL_LIMIT: u32 = 0x8200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Lex,
    Parse,
    Resolve,
    Assemble,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Lex => "lex",
            Stage::Parse => "parse",
            Stage::Resolve => "resolve",
            Stage::Assemble => "assemble",
        })
    }
}

/// A toolchain diagnostic. `line` is 1-based; assembler errors that are not
/// tied to a text line use 0.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{stage} error at line {line}: {message}")]
pub struct MiniError {
    pub stage: Stage,
    pub line: usize,
    pub message: String,
}

impl MiniError {
    pub fn new(stage: Stage, line: usize, message: impl Into<String>) -> Self {
        MiniError {
            stage,
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Mload,
    Mstore,
    Write,
    Halt,
    InputLen,
    InputByte,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "mload" => Builtin::Mload,
            "mstore" => Builtin::Mstore,
            "write" => Builtin::Write,
            "halt" => Builtin::Halt,
            "input_len" => Builtin::InputLen,
            "input_byte" => Builtin::InputByte,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::InputLen => 0,
            Builtin::Mload | Builtin::Write | Builtin::Halt | Builtin::InputByte => 1,
            Builtin::Mstore => 2,
        }
    }
}

/// Parses and resolves a program.
pub fn frontend(source: &[u8]) -> Result<Program, MiniError> {
    let mut prog = parse::parse(source)?;
    resolve::resolve(&mut prog)?;
    Ok(prog)
}

/// Compiles to symbolic assembly without laying it out.
pub fn compile_to_asm(source: &[u8]) -> Result<AsmUnit, MiniError> {
    Ok(codegen::generate(&frontend(source)?))
}

pub fn compile_minilang(source: &[u8]) -> Result<GuestImage, MiniError> {
    compile_to_asm(source)?.assemble()
}

pub fn assemble(unit: &AsmUnit) -> Result<GuestImage, MiniError> {
    unit.assemble()
}
