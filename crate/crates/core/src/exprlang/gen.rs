//! Random ExprLang programs, valid by construction.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::MAX_IDENT_LEN;

pub const MAX_EXPR_DEPTH: usize = 6;
const MAX_VARS: usize = 10;
const FINAL_PRINTS: usize = 5;

#[derive(Debug, Clone)]
enum Node {
    Num(u32),
    Var(String),
    Neg(Box<Node>),
    Paren(Box<Node>),
    Bin(u8, Box<Node>, Box<Node>),
}

fn prec(op: u8) -> u8 {
    if matches!(op, b'*' | b'/') {
        2
    } else {
        1
    }
}

struct Gen {
    rng: SplitMix64,
    vars: Vec<String>,
}

impl Gen {
    fn below(&mut self, n: u64) -> u64 {
        self.rng.next_u64() % n
    }

    fn chance(&mut self, tenths: u64) -> bool {
        self.below(10) < tenths
    }

    fn pick<T: Clone>(&mut self, xs: &[T]) -> T {
        xs[self.below(xs.len() as u64) as usize].clone()
    }

    fn fresh_name(&mut self) -> String {
        const FIRST: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
        const REST: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
        loop {
            let len = if self.chance(1) {
                1 + self.below(MAX_IDENT_LEN as u64) as usize
            } else {
                1 + self.below(5) as usize
            };
            let mut name = String::new();
            name.push(self.pick(FIRST) as char);
            while name.len() < len {
                name.push(self.pick(REST) as char);
            }
            if name != "let" && name != "print" && !self.vars.contains(&name) {
                return name;
            }
        }
    }

    fn literal(&mut self) -> Node {
        Node::Num(match self.below(10) {
            0..=6 => self.below(100) as u32,
            7 | 8 => self.below(100_000) as u32,
            _ => self.below(1 << 31) as u32,
        })
    }

    fn leaf(&mut self) -> Node {
        if !self.vars.is_empty() && self.chance(6) {
            let vars = self.vars.clone();
            Node::Var(self.pick(&vars))
        } else {
            self.literal()
        }
    }

    fn expr(&mut self, depth: usize) -> Node {
        if depth >= MAX_EXPR_DEPTH || self.chance(3) {
            return self.leaf();
        }
        match self.below(10) {
            0..=5 => {
                let op = self.pick(b"++--**/");
                let lhs = self.expr(depth + 1);
                // Division only by a nonzero literal, so runs never trap.
                let rhs = if op == b'/' {
                    Node::Num(1 + self.below(9) as u32)
                } else {
                    self.expr(depth + 1)
                };
                Node::Bin(op, Box::new(lhs), Box::new(rhs))
            }
            6 | 7 => Node::Neg(Box::new(self.expr(depth + 1))),
            _ => Node::Paren(Box::new(self.expr(depth + 1))),
        }
    }

    fn space(&mut self, out: &mut String) {
        if self.chance(5) {
            out.push(' ');
        }
    }

    fn render(&mut self, n: &Node, out: &mut String) {
        match n {
            Node::Num(v) => out.push_str(&v.to_string()),
            Node::Var(name) => out.push_str(name),
            Node::Neg(inner) => {
                out.push('-');
                if matches!(**inner, Node::Bin(..)) {
                    out.push('(');
                    self.render(inner, out);
                    out.push(')');
                } else {
                    self.render(inner, out);
                }
            }
            Node::Paren(inner) => {
                out.push('(');
                self.render(inner, out);
                out.push(')');
            }
            Node::Bin(op, lhs, rhs) => {
                let p = prec(*op);
                let wrap_l = matches!(**lhs, Node::Bin(o, ..) if prec(o) < p);
                let wrap_r = matches!(**rhs, Node::Bin(o, ..) if prec(o) <= p);
                self.render_wrapped(lhs, wrap_l, out);
                self.space(out);
                out.push(*op as char);
                self.space(out);
                self.render_wrapped(rhs, wrap_r, out);
            }
        }
    }

    fn render_wrapped(&mut self, n: &Node, wrap: bool, out: &mut String) {
        if wrap {
            out.push('(');
        }
        self.render(n, out);
        if wrap {
            out.push(')');
        }
    }

    fn statement(&mut self, out: &mut String) {
        if self.chance(1) {
            out.push_str(if self.chance(5) { "\n" } else { "\t" });
        }
        let kind = if self.vars.len() < 2 { 0 } else { self.below(10) };
        match kind {
            0..=3 if self.vars.len() < MAX_VARS => {
                let e = self.expr(0);
                let name = self.fresh_name();
                out.push_str("let ");
                out.push_str(&name);
                self.space(out);
                out.push('=');
                self.space(out);
                self.render(&e, out);
                self.vars.push(name);
            }
            0..=7 => {
                let vars = self.vars.clone();
                let name = self.pick(&vars);
                let e = self.expr(0);
                if self.chance(2) {
                    out.push_str("let ");
                }
                out.push_str(&name);
                out.push_str(" = ");
                self.render(&e, out);
            }
            _ => {
                let e = self.expr(0);
                out.push_str("print ");
                self.render(&e, out);
            }
        }
        out.push_str(";\n");
    }
}

/// Program of `size` statements followed by a print of each of the last
/// (up to five) defined variables. Deterministic in `seed`.
pub fn gen_program(seed: u64, size: usize) -> String {
    let mut g = Gen {
        rng: SplitMix64::seed_from_u64(seed),
        vars: Vec::new(),
    };
    let mut out = String::new();
    for _ in 0..size.max(1) {
        g.statement(&mut out);
    }
    let live = g.vars.len().saturating_sub(FINAL_PRINTS);
    for v in &g.vars[live..] {
        out.push_str(&format!("print {v};\n"));
    }
    out
}
