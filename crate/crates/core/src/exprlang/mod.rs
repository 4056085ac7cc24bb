//! ExprLang, the language compiled under proof, with its tooling: the host
//! reference compiler, the guest compiler `exprcc` (MiniLang source shipped
//! in `assets/`), a StackAsm interpreter, an AST evaluator used as a
//! semantic oracle, and a random program generator.
//!
//! ```text
//! program := stmt*
//! stmt    := "let" ident "=" expr ";" | ident "=" expr ";" | "print" expr ";"
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | primary
//! primary := number | ident | "(" expr ")"
//! ```
//!
//! Identifiers match `[a-z][a-z0-9_]{0,15}` and may not be `let` or
//! `print`; numbers are decimal below 2^31; whitespace is space, tab, CR
//! and LF. Parentheses and unary minus nest at most [`MAX_NESTING`] deep.

pub mod ast;
mod gen;
mod reference;
mod stackvm;

use std::sync::OnceLock;

use crate::isa::GuestImage;
use crate::minilang::compile_minilang;

pub use gen::{gen_program, MAX_EXPR_DEPTH};
pub use reference::reference_compile;
pub use stackvm::{stackvm_run, VmTrap};

pub const MAX_IDENT_LEN: usize = 16;
pub const MAX_NESTING: usize = 256;

/// MiniLang source of the guest compiler.
pub const EXPRCC_SOURCE: &[u8] = include_bytes!("../../assets/exprcc.mini");

/// Output of a compiler run, host or guest: StackAsm text with exit code
/// 0, or a single `error: line L` line with exit code 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Compiled {
    pub output: Vec<u8>,
    pub exit_code: u32,
}

impl Compiled {
    pub fn is_ok(&self) -> bool {
        self.exit_code == 0
    }

    /// The reported line, for failed compilations.
    pub fn error_line(&self) -> Option<usize> {
        let text = std::str::from_utf8(&self.output).ok()?;
        text.strip_prefix("error: line ")?.strip_suffix('\n')?.parse().ok()
    }
}

/// The guest compiler image, built once from [`EXPRCC_SOURCE`].
pub fn exprcc_image() -> &'static GuestImage {
    static IMAGE: OnceLock<GuestImage> = OnceLock::new();
    IMAGE.get_or_init(|| compile_minilang(EXPRCC_SOURCE).expect("bundled exprcc.mini compiles"))
}
