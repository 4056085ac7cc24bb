//! MiniLang lexer and recursive-descent parser.

use super::ast::{BinOp, Expr, Function, Program, Stmt, UnOp};
use super::{MiniError, Stage};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(u32),
    Ident(String),
    Func,
    Var,
    If,
    Else,
    While,
    Return,
    Punct(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".into(),
            kw => format!("keyword `{}`", format!("{kw:?}").to_lowercase()),
        }
    }
}

// Longest operators first so that `<=` wins over `<`.
const PUNCT: &[&str] = &[
    "||", "&&", "==", "!=", "<=", ">=", "<<", ">>", "|", "^", "&", "<", ">", "+", "-", "*", "/", "%", "!", "(",
    ")", "{", "}", ",", ";", "=",
];

fn lex_error(line: usize, msg: impl Into<String>) -> MiniError {
    MiniError::new(Stage::Lex, line, msg)
}

fn lex(src: &[u8]) -> Result<Vec<(Tok, usize)>, MiniError> {
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < src.len() {
        let c = src[i];
        match c {
            b'\n' => {
                line += 1;
                i += 1;
            }
            b' ' | b'\t' | b'\r' => i += 1,
            b'/' if src.get(i + 1) == Some(&b'/') => {
                while i < src.len() && src[i] != b'\n' {
                    i += 1;
                }
            }
            b'0'..=b'9' => {
                let start = i;
                let (radix, digits_at) = if c == b'0' && matches!(src.get(i + 1), Some(b'x' | b'X')) {
                    (16, i + 2)
                } else {
                    (10, i)
                };
                i = digits_at;
                while i < src.len() && src[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let text = std::str::from_utf8(&src[digits_at..i]).unwrap();
                let value = u32::from_str_radix(text, radix).map_err(|_| {
                    lex_error(
                        line,
                        format!("bad number `{}`", String::from_utf8_lossy(&src[start..i])),
                    )
                })?;
                toks.push((Tok::Num(value), line));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < src.len() && (src[i].is_ascii_alphanumeric() || src[i] == b'_') {
                    i += 1;
                }
                let word = std::str::from_utf8(&src[start..i]).unwrap();
                let tok = match word {
                    "func" => Tok::Func,
                    "var" => Tok::Var,
                    "if" => Tok::If,
                    "else" => Tok::Else,
                    "while" => Tok::While,
                    "return" => Tok::Return,
                    _ => Tok::Ident(word.to_string()),
                };
                toks.push((tok, line));
            }
            b'\'' => {
                let (value, len) = match (src.get(i + 1), src.get(i + 2), src.get(i + 3)) {
                    (Some(b'\\'), Some(e), Some(b'\'')) => {
                        let v = match e {
                            b'n' => b'\n',
                            b't' => b'\t',
                            b'r' => b'\r',
                            b'0' => 0,
                            b'\\' => b'\\',
                            b'\'' => b'\'',
                            _ => return Err(lex_error(line, format!("unknown escape `\\{}`", *e as char))),
                        };
                        (v, 4)
                    }
                    (Some(&ch), Some(b'\''), _) if ch != b'\\' && ch != b'\n' => (ch, 3),
                    _ => return Err(lex_error(line, "malformed character literal")),
                };
                toks.push((Tok::Num(value as u32), line));
                i += len;
            }
            _ => {
                let rest = &src[i..];
                let p = PUNCT
                    .iter()
                    .find(|p| rest.starts_with(p.as_bytes()))
                    .ok_or_else(|| lex_error(line, format!("unexpected character {:?}", c as char)))?;
                toks.push((Tok::Punct(p), line));
                i += p.len();
            }
        }
    }
    toks.push((Tok::Eof, line));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

type PResult<T> = Result<T, MiniError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn line(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, what: &str) -> PResult<T> {
        Err(MiniError::new(
            Stage::Parse,
            self.line(),
            format!("expected {what}, found {}", self.peek().describe()),
        ))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(&format!("`{p}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.error("identifier"),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(prog),
                Tok::Func => prog.functions.push(self.function()?),
                Tok::Var => {
                    let line = self.line();
                    self.bump();
                    let name = self.ident()?;
                    self.expect_punct(";")?;
                    prog.globals.push((name, line));
                }
                _ => return self.error("`func` or `var`"),
            }
        }
    }

    fn function(&mut self) -> PResult<Function> {
        let line = self.line();
        self.bump();
        let name = self.ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.eat_punct(")") {
            loop {
                params.push(self.ident()?);
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        let body = self.block()?;
        Ok(Function {
            name,
            params,
            body,
            line,
            locals: Vec::new(),
        })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.eat_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.error("`}`");
            }
            stmts.push(self.statement()?);
        }
        Ok(stmts)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let line = self.line();
        match self.peek() {
            Tok::Var => {
                self.bump();
                let name = self.ident()?;
                let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
                self.expect_punct(";")?;
                Ok(Stmt::Var {
                    name,
                    init,
                    line,
                    slot: None,
                })
            }
            Tok::If => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let then = self.block()?;
                let els = if *self.peek() == Tok::Else {
                    self.bump();
                    if *self.peek() == Tok::If {
                        vec![self.statement()?]
                    } else {
                        self.block()?
                    }
                } else {
                    Vec::new()
                };
                Ok(Stmt::If { cond, then, els })
            }
            Tok::While => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let body = self.block()?;
                Ok(Stmt::While { cond, body })
            }
            Tok::Return => {
                self.bump();
                let value = if self.is_punct(";") { None } else { Some(self.expr()?) };
                self.expect_punct(";")?;
                Ok(Stmt::Return { value })
            }
            Tok::Ident(_) if matches!(self.toks.get(self.pos + 1), Some((Tok::Punct("="), _))) => {
                let name = self.ident()?;
                self.bump();
                let value = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Assign {
                    name,
                    value,
                    line,
                    slot: None,
                })
            }
            _ => {
                let e = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Expr(e))
            }
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> PResult<Expr> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("||", BinOp::LogOr)],
            &[("&&", BinOp::LogAnd)],
            &[("|", BinOp::Or)],
            &[("^", BinOp::Xor)],
            &[("&", BinOp::And)],
            &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[("<", BinOp::Lt), ("<=", BinOp::Le), (">", BinOp::Gt), (">=", BinOp::Ge)],
            &[("<<", BinOp::Shl), (">>", BinOp::Shr)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        'outer: loop {
            for (p, op) in LEVELS[level] {
                if self.eat_punct(p) {
                    let rhs = self.binary(level + 1)?;
                    lhs = Expr::Binary(*op, Box::new(lhs), Box::new(rhs));
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("-") {
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat_punct("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let line = self.line();
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Num(n))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat_punct("(") {
                    let mut args = Vec::new();
                    if !self.eat_punct(")") {
                        loop {
                            args.push(self.expr()?);
                            if self.eat_punct(")") {
                                break;
                            }
                            self.expect_punct(",")?;
                        }
                    }
                    Ok(Expr::Call { name, args, line })
                } else {
                    Ok(Expr::Name { name, line, slot: None })
                }
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => self.error("expression"),
        }
    }
}

/// Parses MiniLang source into an unresolved program.
pub fn parse(src: &[u8]) -> Result<Program, MiniError> {
    let toks = lex(src)?;
    Parser { toks, pos: 0 }.program()
}
