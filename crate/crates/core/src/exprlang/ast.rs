//! Tree-walking evaluator for ExprLang: the semantic oracle for
//! `stackvm_run(compile(p))`. Shares no code with the compiler; it tokenizes
//! eagerly and builds a tree before evaluating.

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(u32),
    Var(String),
    Neg(Box<Expr>),
    Bin(u8, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Let(String, Expr),
    Assign(String, Expr),
    Print(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(u32),
    Word(String),
    Sym(u8),
}

fn tokenize(src: &str) -> Result<Vec<Tok>, String> {
    let mut toks = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_ascii_whitespace() {
            continue;
        }
        if c.is_ascii_digit() {
            let mut end = i + 1;
            while let Some(&(j, d)) = chars.peek() {
                if !d.is_ascii_digit() {
                    break;
                }
                end = j + 1;
                chars.next();
            }
            let v: u64 = src[i..end].parse().map_err(|e| format!("{e}"))?;
            toks.push(Tok::Num(u32::try_from(v).map_err(|_| "literal too large")?));
        } else if c.is_ascii_lowercase() {
            let mut end = i + 1;
            while let Some(&(j, d)) = chars.peek() {
                if !(d.is_ascii_lowercase() || d.is_ascii_digit() || d == '_') {
                    break;
                }
                end = j + 1;
                chars.next();
            }
            toks.push(Tok::Word(src[i..end].to_string()));
        } else if "+-*/()=;".contains(c) {
            toks.push(Tok::Sym(c as u8));
        } else {
            return Err(format!("unexpected {c:?}"));
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at)
    }

    fn next(&mut self) -> Result<Tok, String> {
        let t = self.toks.get(self.at).cloned().ok_or("unexpected end")?;
        self.at += 1;
        Ok(t)
    }

    fn sym(&mut self, s: u8) -> Result<(), String> {
        match self.next()? {
            Tok::Sym(c) if c == s => Ok(()),
            t => Err(format!("expected {:?}, got {t:?}", s as char)),
        }
    }

    fn word(&mut self) -> Result<String, String> {
        match self.next()? {
            Tok::Word(w) if w != "let" && w != "print" => Ok(w),
            t => Err(format!("expected a name, got {t:?}")),
        }
    }

    fn stmt(&mut self) -> Result<Stmt, String> {
        let s = match self.peek() {
            Some(Tok::Word(w)) if w == "let" => {
                self.at += 1;
                let name = self.word()?;
                self.sym(b'=')?;
                Stmt::Let(name, self.expr()?)
            }
            Some(Tok::Word(w)) if w == "print" => {
                self.at += 1;
                Stmt::Print(self.expr()?)
            }
            _ => {
                let name = self.word()?;
                self.sym(b'=')?;
                Stmt::Assign(name, self.expr()?)
            }
        };
        self.sym(b';')?;
        Ok(s)
    }

    fn binary(&mut self, ops: &[u8], operand: fn(&mut Self) -> Result<Expr, String>) -> Result<Expr, String> {
        let mut lhs = operand(self)?;
        while let Some(&Tok::Sym(c)) = self.peek() {
            if !ops.contains(&c) {
                break;
            }
            self.at += 1;
            lhs = Expr::Bin(c, Box::new(lhs), Box::new(operand(self)?));
        }
        Ok(lhs)
    }

    fn expr(&mut self) -> Result<Expr, String> {
        self.binary(b"+-", |p| p.binary(b"*/", Self::unary))
    }

    fn unary(&mut self) -> Result<Expr, String> {
        match self.next()? {
            Tok::Sym(b'-') => Ok(Expr::Neg(Box::new(self.unary()?))),
            Tok::Sym(b'(') => {
                let e = self.expr()?;
                self.sym(b')')?;
                Ok(e)
            }
            Tok::Num(v) if v < 1 << 31 => Ok(Expr::Num(v)),
            Tok::Word(w) if w != "let" && w != "print" => Ok(Expr::Var(w)),
            t => Err(format!("unexpected {t:?}")),
        }
    }
}

pub fn parse_program(src: &str) -> Result<Vec<Stmt>, String> {
    let mut p = Parser {
        toks: tokenize(src)?,
        at: 0,
    };
    let mut stmts = Vec::new();
    while p.peek().is_some() {
        stmts.push(p.stmt()?);
    }
    Ok(stmts)
}

fn eval(e: &Expr, env: &HashMap<String, u32>) -> Result<u32, String> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Var(name) => *env.get(name).ok_or_else(|| format!("undefined {name}"))?,
        Expr::Neg(inner) => eval(inner, env)?.wrapping_neg(),
        Expr::Bin(op, a, b) => {
            let (x, y) = (eval(a, env)?, eval(b, env)?);
            match op {
                b'+' => x.wrapping_add(y),
                b'-' => x.wrapping_sub(y),
                b'*' => x.wrapping_mul(y),
                _ => x.checked_div(y).ok_or("division by zero")?,
            }
        }
    })
}

/// Evaluates a program: 32-bit wrapping arithmetic, unsigned division,
/// each `print` emitting a signed decimal line.
pub fn evaluate(stmts: &[Stmt]) -> Result<Vec<u8>, String> {
    let mut env = HashMap::new();
    let mut out = String::new();
    for s in stmts {
        match s {
            Stmt::Let(name, e) => {
                let v = eval(e, &env)?;
                env.insert(name.clone(), v);
            }
            Stmt::Assign(name, e) => {
                let v = eval(e, &env)?;
                *env.get_mut(name).ok_or_else(|| format!("assignment to undefined {name}"))? = v;
            }
            Stmt::Print(e) => out.push_str(&format!("{}\n", eval(e, &env)? as i32)),
        }
    }
    Ok(out.into_bytes())
}

pub fn evaluate_source(src: &str) -> Result<Vec<u8>, String> {
    evaluate(&parse_program(src)?)
}
