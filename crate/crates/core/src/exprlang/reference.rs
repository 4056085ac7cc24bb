//! Host reference compiler for ExprLang, the oracle the guest compiler is
//! held byte-identical to.
//!
//! The lexer is lazy with one token of lookahead, refilled as soon as a
//! token is consumed. Errors are therefore reported in source order: the
//! first offending token wins, whether the problem is lexical, syntactic or
//! an undefined name.

use std::collections::HashMap;
use std::fmt::Write;

use super::{Compiled, MAX_IDENT_LEN, MAX_NESTING};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Eof,
    Num(u32),
    Ident,
    Let,
    Print,
    Punct(u8),
}

#[derive(Debug, Clone, Copy)]
struct Token {
    kind: Kind,
    start: usize,
    end: usize,
    line: usize,
}

/// Error line.
type Fail = usize;

struct Compiler<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    tok: Token,
    slots: HashMap<&'a [u8], usize>,
    depth: usize,
    out: String,
}

impl<'a> Compiler<'a> {
    fn advance(&mut self) -> Result<(), Fail> {
        let src = self.src;
        while let Some(&c) = src.get(self.pos) {
            match c {
                b'\n' => self.line += 1,
                b' ' | b'\t' | b'\r' => {}
                _ => break,
            }
            self.pos += 1;
        }
        let start = self.pos;
        let line = self.line;
        let Some(&c) = src.get(start) else {
            self.tok = Token {
                kind: Kind::Eof,
                start,
                end: start,
                line,
            };
            return Ok(());
        };
        let kind = match c {
            b'0'..=b'9' => {
                let mut v: u64 = 0;
                while let Some(d @ b'0'..=b'9') = src.get(self.pos) {
                    v = (v * 10 + (d - b'0') as u64).min(1 << 31);
                    self.pos += 1;
                }
                if v >= 1 << 31 {
                    return Err(line);
                }
                Kind::Num(v as u32)
            }
            b'a'..=b'z' => {
                while let Some(b'a'..=b'z' | b'0'..=b'9' | b'_') = src.get(self.pos) {
                    self.pos += 1;
                }
                match &src[start..self.pos] {
                    b"let" => Kind::Let,
                    b"print" => Kind::Print,
                    w if w.len() > MAX_IDENT_LEN => return Err(line),
                    _ => Kind::Ident,
                }
            }
            b'+' | b'-' | b'*' | b'/' | b'(' | b')' | b'=' | b';' => {
                self.pos += 1;
                Kind::Punct(c)
            }
            _ => return Err(line),
        };
        self.tok = Token {
            kind,
            start,
            end: self.pos,
            line,
        };
        Ok(())
    }

    fn fail<T>(&self) -> Result<T, Fail> {
        Err(self.tok.line)
    }

    fn expect(&mut self, p: u8) -> Result<(), Fail> {
        if self.tok.kind != Kind::Punct(p) {
            return self.fail();
        }
        self.advance()
    }

    fn name(&self) -> &'a [u8] {
        &self.src[self.tok.start..self.tok.end]
    }

    fn enter(&mut self) -> Result<(), Fail> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.fail();
        }
        Ok(())
    }

    fn program(&mut self) -> Result<(), Fail> {
        self.advance()?;
        while self.tok.kind != Kind::Eof {
            self.statement()?;
        }
        self.out.push_str("HALT\n");
        Ok(())
    }

    fn statement(&mut self) -> Result<(), Fail> {
        match self.tok.kind {
            Kind::Let => {
                self.advance()?;
                if self.tok.kind != Kind::Ident {
                    return self.fail();
                }
                let name = self.name();
                self.advance()?;
                self.expect(b'=')?;
                self.expr()?;
                let next = self.slots.len();
                let k = *self.slots.entry(name).or_insert(next);
                self.expect(b';')?;
                writeln!(self.out, "STORE {k}").unwrap();
            }
            Kind::Ident => {
                let Some(&k) = self.slots.get(self.name()) else {
                    return self.fail();
                };
                self.advance()?;
                self.expect(b'=')?;
                self.expr()?;
                self.expect(b';')?;
                writeln!(self.out, "STORE {k}").unwrap();
            }
            Kind::Print => {
                self.advance()?;
                self.expr()?;
                self.expect(b';')?;
                self.out.push_str("PRINT\n");
            }
            _ => return self.fail(),
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<(), Fail> {
        self.term()?;
        while let Kind::Punct(op @ (b'+' | b'-')) = self.tok.kind {
            self.advance()?;
            self.term()?;
            self.out.push_str(if op == b'+' { "ADD\n" } else { "SUB\n" });
        }
        Ok(())
    }

    fn term(&mut self) -> Result<(), Fail> {
        self.unary()?;
        while let Kind::Punct(op @ (b'*' | b'/')) = self.tok.kind {
            self.advance()?;
            self.unary()?;
            self.out.push_str(if op == b'*' { "MUL\n" } else { "DIV\n" });
        }
        Ok(())
    }

    fn unary(&mut self) -> Result<(), Fail> {
        if self.tok.kind != Kind::Punct(b'-') {
            return self.primary();
        }
        self.enter()?;
        self.advance()?;
        self.unary()?;
        self.out.push_str("NEG\n");
        self.depth -= 1;
        Ok(())
    }

    fn primary(&mut self) -> Result<(), Fail> {
        match self.tok.kind {
            Kind::Num(v) => writeln!(self.out, "PUSH {v}").unwrap(),
            Kind::Ident => {
                let Some(&k) = self.slots.get(self.name()) else {
                    return self.fail();
                };
                writeln!(self.out, "LOAD {k}").unwrap();
            }
            Kind::Punct(b'(') => {
                self.enter()?;
                self.advance()?;
                self.expr()?;
                if self.tok.kind != Kind::Punct(b')') {
                    return self.fail();
                }
                self.depth -= 1;
            }
            _ => return self.fail(),
        }
        self.advance()
    }
}

/// Compiles ExprLang source to StackAsm text, or to the single line
/// `error: line L` for the first error. Never panics.
pub fn reference_compile(source: &[u8]) -> Compiled {
    let mut c = Compiler {
        src: source,
        pos: 0,
        line: 1,
        tok: Token {
            kind: Kind::Eof,
            start: 0,
            end: 0,
            line: 1,
        },
        slots: HashMap::new(),
        depth: 0,
        out: String::new(),
    };
    match c.program() {
        Ok(()) => Compiled {
            output: c.out.into_bytes(),
            exit_code: 0,
        },
        Err(line) => Compiled {
            output: format!("error: line {line}\n").into_bytes(),
            exit_code: 1,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(src: &str) -> String {
        String::from_utf8(reference_compile(src.as_bytes()).output).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(text("print 1+2*3;"), "PUSH 1\nPUSH 2\nPUSH 3\nMUL\nADD\nPRINT\nHALT\n");
        assert_eq!(text("let x = 4; print x;"), "PUSH 4\nSTORE 0\nLOAD 0\nPRINT\nHALT\n");
        assert_eq!(text("print (1+;"), "error: line 1\n");
        assert_eq!(reference_compile(b"print (1+;").exit_code, 1);
    }

    #[test]
    fn associativity_and_unary() {
        assert_eq!(text("print 8-2-1;"), "PUSH 8\nPUSH 2\nSUB\nPUSH 1\nSUB\nPRINT\nHALT\n");
        assert_eq!(text("print 8/2/2;"), "PUSH 8\nPUSH 2\nDIV\nPUSH 2\nDIV\nPRINT\nHALT\n");
        assert_eq!(text("print --3*2;"), "PUSH 3\nNEG\nNEG\nPUSH 2\nMUL\nPRINT\nHALT\n");
        assert_eq!(text("print -(1+2);"), "PUSH 1\nPUSH 2\nADD\nNEG\nPRINT\nHALT\n");
    }

    #[test]
    fn slots_follow_first_let() {
        let t = text("let b = 1; let a = 2; let b = a; a = b; print a;");
        assert_eq!(
            t,
            "PUSH 1\nSTORE 0\nPUSH 2\nSTORE 1\nLOAD 1\nSTORE 0\nLOAD 0\nSTORE 1\nLOAD 1\nPRINT\nHALT\n"
        );
    }

    #[test]
    fn error_lines() {
        let cases: &[(&str, usize)] = &[
            ("print x;", 1),
            ("let x = 1;\n\nprint y;", 3),
            ("let x = x;", 1),
            ("print 1\n", 2),
            ("print 1\n\n;;", 3),
            ("\n\nprint 2147483648;", 3),
            ("print 1; $", 1),
            ("print ; $", 1),
            ("let abcdefghijklmnopq = 1;", 1),
            ("let print = 1;", 1),
            ("Print 1;", 1),
            ("y = 2;", 1),
            ("print (1\n+2", 2),
            ("print 1 +\n\n", 3),
            ("let x = 1;\nx + 1;", 2),
        ];
        for (src, line) in cases {
            assert_eq!(text(src), format!("error: line {line}\n"), "{src:?}");
        }
    }

    #[test]
    fn literal_and_identifier_limits() {
        assert_eq!(text("print 2147483647;"), "PUSH 2147483647\nPRINT\nHALT\n");
        assert_eq!(text("print 007;"), "PUSH 7\nPRINT\nHALT\n");
        assert!(text("let abcdefghijklmnop = 1;").starts_with("PUSH 1\nSTORE 0"));
        assert_eq!(text(""), "HALT\n");
        assert_eq!(text(" \t\r\n"), "HALT\n");
    }

    #[test]
    fn nesting_limit() {
        let ok = format!("print {}1{};", "(".repeat(MAX_NESTING), ")".repeat(MAX_NESTING));
        assert_eq!(reference_compile(ok.as_bytes()).exit_code, 0);
        let deep = format!("print {}1{};", "(".repeat(MAX_NESTING + 1), ")".repeat(MAX_NESTING + 1));
        assert_eq!(text(&deep), "error: line 1\n");
        let negs = format!("print\n{}1;", "-".repeat(MAX_NESTING + 1));
        assert_eq!(text(&negs), "error: line 2\n");
    }
}
