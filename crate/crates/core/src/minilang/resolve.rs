//! Name resolution: binds every name to a slot and checks calls.
//!
//! Locals are visible from their declaration to the end of the function;
//! a local may shadow a global but not a parameter or an earlier local.

use std::collections::HashMap;

use super::ast::{Expr, Program, Slot, Stmt};
use super::{Builtin, MiniError, Stage, GLOBAL_BASE, GLOBAL_LIMIT};

fn err(line: usize, msg: impl Into<String>) -> MiniError {
    MiniError::new(Stage::Resolve, line, msg)
}

struct Scope<'a> {
    globals: &'a HashMap<String, u32>,
    arities: &'a HashMap<String, usize>,
    names: HashMap<String, Slot>,
    locals: Vec<String>,
}

impl Scope<'_> {
    fn lookup(&self, name: &str, line: usize) -> Result<Slot, MiniError> {
        if let Some(s) = self.names.get(name) {
            return Ok(*s);
        }
        if let Some(a) = self.globals.get(name) {
            return Ok(Slot::Global(*a));
        }
        Err(err(line, format!("undefined variable `{name}`")))
    }

    fn expr(&mut self, e: &mut Expr) -> Result<(), MiniError> {
        match e {
            Expr::Num(_) => Ok(()),
            Expr::Name { name, line, slot } => {
                *slot = Some(self.lookup(name, *line)?);
                Ok(())
            }
            Expr::Unary(_, inner) => self.expr(inner),
            Expr::Binary(_, a, b) => {
                self.expr(a)?;
                self.expr(b)
            }
            Expr::Call { name, args, line } => {
                let expected = match Builtin::from_name(name) {
                    Some(b) => b.arity(),
                    None => *self
                        .arities
                        .get(name.as_str())
                        .ok_or_else(|| err(*line, format!("undefined function `{name}`")))?,
                };
                if args.len() != expected {
                    return Err(err(
                        *line,
                        format!("`{name}` takes {expected} arguments, {} given", args.len()),
                    ));
                }
                args.iter_mut().try_for_each(|a| self.expr(a))
            }
        }
    }

    fn block(&mut self, stmts: &mut [Stmt]) -> Result<(), MiniError> {
        stmts.iter_mut().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &mut Stmt) -> Result<(), MiniError> {
        match s {
            Stmt::Var { name, init, line, slot } => {
                // The initializer cannot see the variable it initializes.
                if let Some(e) = init {
                    self.expr(e)?;
                }
                if self.names.contains_key(name.as_str()) {
                    return Err(err(*line, format!("`{name}` is already declared")));
                }
                let s = Slot::Local(self.locals.len() as u32);
                self.locals.push(name.clone());
                self.names.insert(name.clone(), s);
                *slot = Some(s);
                Ok(())
            }
            Stmt::Assign { name, value, line, slot } => {
                self.expr(value)?;
                *slot = Some(self.lookup(name, *line)?);
                Ok(())
            }
            Stmt::If { cond, then, els } => {
                self.expr(cond)?;
                self.block(then)?;
                self.block(els)
            }
            Stmt::While { cond, body } => {
                self.expr(cond)?;
                self.block(body)
            }
            Stmt::Return { value } => value.as_mut().map_or(Ok(()), |e| self.expr(e)),
            Stmt::Expr(e) => self.expr(e),
        }
    }
}

pub fn resolve(prog: &mut Program) -> Result<(), MiniError> {
    let mut globals = HashMap::new();
    for (name, line) in &prog.globals {
        if Builtin::from_name(name).is_some() {
            return Err(err(*line, format!("`{name}` is a builtin")));
        }
        let addr = GLOBAL_BASE + globals.len() as u32;
        if addr >= GLOBAL_LIMIT {
            return Err(err(*line, "too many globals"));
        }
        if globals.insert(name.clone(), addr).is_some() {
            return Err(err(*line, format!("global `{name}` declared twice")));
        }
    }
    let mut arities = HashMap::new();
    for f in &prog.functions {
        if Builtin::from_name(&f.name).is_some() {
            return Err(err(f.line, format!("`{}` is a builtin", f.name)));
        }
        if arities.insert(f.name.clone(), f.params.len()).is_some() {
            return Err(err(f.line, format!("function `{}` defined twice", f.name)));
        }
    }
    match prog.function("main") {
        None => return Err(err(1, "no `main` function")),
        Some(m) if !m.params.is_empty() => return Err(err(m.line, "`main` takes no parameters")),
        _ => {}
    }
    for f in &mut prog.functions {
        let mut scope = Scope {
            globals: &globals,
            arities: &arities,
            names: HashMap::new(),
            locals: Vec::new(),
        };
        for (i, p) in f.params.iter().enumerate() {
            if scope.names.insert(p.clone(), Slot::Param(i as u32)).is_some() {
                return Err(err(f.line, format!("duplicate parameter `{p}`")));
            }
        }
        scope.block(&mut f.body)?;
        f.locals = scope.locals;
    }
    Ok(())
}
