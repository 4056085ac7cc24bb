//! Direct AST evaluation, the differential oracle for the code generator.
//!
//! Memory, builtins and arithmetic follow the compiled semantics exactly.
//! Frames live outside guest memory here, so a program that peeks at its
//! own stack through `mload` is the one thing that behaves differently.

use crate::isa::{input_words, Memory, INPUT_BASE};

use super::ast::{BinOp, Expr, Function, Program, Slot, Stmt, UnOp};
use super::{frontend, Builtin, MiniError};

/// Run-time failure of an interpreted program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    DivideByZero,
    MemoryOutOfRange(u32),
    /// Evaluation budget used up (the analogue of the step budget).
    FuelExhausted,
    CallDepthExceeded,
    InputTooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    pub output: Vec<u8>,
    pub exit_code: u32,
    pub fault: Option<Fault>,
}

pub const DEFAULT_FUEL: u64 = 1 << 26;
const MAX_CALL_DEPTH: usize = 1500;

enum Stop {
    Halt(u32),
    Fault(Fault),
}

type Eval<T> = Result<T, Stop>;

enum Flow {
    Next,
    Return(u32),
}

struct Machine<'p> {
    prog: &'p Program,
    memory: Memory,
    output: Vec<u8>,
    fuel: u64,
    depth: usize,
}

struct Frame {
    params: Vec<u32>,
    locals: Vec<u32>,
}

impl Machine<'_> {
    fn tick(&mut self) -> Eval<()> {
        if self.fuel == 0 {
            return Err(Stop::Fault(Fault::FuelExhausted));
        }
        self.fuel -= 1;
        Ok(())
    }

    fn load(&self, address: u32) -> Eval<u32> {
        self.memory
            .get(address)
            .ok_or(Stop::Fault(Fault::MemoryOutOfRange(address)))
    }

    fn store(&mut self, address: u32, value: u32) -> Eval<()> {
        self.memory
            .set(address, value)
            .map(drop)
            .ok_or(Stop::Fault(Fault::MemoryOutOfRange(address)))
    }

    fn read(&self, frame: &Frame, slot: Slot) -> Eval<u32> {
        match slot {
            Slot::Param(i) => Ok(frame.params[i as usize]),
            Slot::Local(j) => Ok(frame.locals[j as usize]),
            Slot::Global(a) => self.load(a),
        }
    }

    fn write(&mut self, frame: &mut Frame, slot: Slot, v: u32) -> Eval<()> {
        match slot {
            Slot::Param(i) => frame.params[i as usize] = v,
            Slot::Local(j) => frame.locals[j as usize] = v,
            Slot::Global(a) => self.store(a, v)?,
        }
        Ok(())
    }

    fn call(&mut self, f: &Function, args: Vec<u32>) -> Eval<u32> {
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Stop::Fault(Fault::CallDepthExceeded));
        }
        self.depth += 1;
        let mut frame = Frame {
            params: args,
            locals: vec![0; f.locals.len()],
        };
        let flow = self.block(&mut frame, &f.body)?;
        self.depth -= 1;
        Ok(match flow {
            Flow::Return(v) => v,
            Flow::Next => 0,
        })
    }

    fn block(&mut self, frame: &mut Frame, stmts: &[Stmt]) -> Eval<Flow> {
        for s in stmts {
            if let Flow::Return(v) = self.stmt(frame, s)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn stmt(&mut self, frame: &mut Frame, s: &Stmt) -> Eval<Flow> {
        self.tick()?;
        match s {
            Stmt::Var { init, slot, .. } => {
                let v = match init {
                    Some(e) => self.expr(frame, e)?,
                    None => 0,
                };
                self.write(frame, slot.expect("resolved"), v)?;
            }
            Stmt::Assign { value, slot, .. } => {
                let v = self.expr(frame, value)?;
                self.write(frame, slot.expect("resolved"), v)?;
            }
            Stmt::If { cond, then, els } => {
                let branch = if self.expr(frame, cond)? != 0 { then } else { els };
                return self.block(frame, branch);
            }
            Stmt::While { cond, body } => {
                while self.expr(frame, cond)? != 0 {
                    if let Flow::Return(v) = self.block(frame, body)? {
                        return Ok(Flow::Return(v));
                    }
                    self.tick()?;
                }
            }
            Stmt::Return { value } => {
                let v = match value {
                    Some(e) => self.expr(frame, e)?,
                    None => 0,
                };
                return Ok(Flow::Return(v));
            }
            Stmt::Expr(e) => {
                self.expr(frame, e)?;
            }
        }
        Ok(Flow::Next)
    }

    fn expr(&mut self, frame: &mut Frame, e: &Expr) -> Eval<u32> {
        self.tick()?;
        Ok(match e {
            Expr::Num(n) => *n,
            Expr::Name { slot, .. } => self.read(frame, slot.expect("resolved"))?,
            Expr::Unary(UnOp::Neg, a) => self.expr(frame, a)?.wrapping_neg(),
            Expr::Unary(UnOp::Not, a) => (self.expr(frame, a)? == 0) as u32,
            Expr::Binary(BinOp::LogAnd, a, b) => {
                (self.expr(frame, a)? != 0 && self.expr(frame, b)? != 0) as u32
            }
            Expr::Binary(BinOp::LogOr, a, b) => {
                (self.expr(frame, a)? != 0 || self.expr(frame, b)? != 0) as u32
            }
            Expr::Binary(op, a, b) => {
                let x = self.expr(frame, a)?;
                let y = self.expr(frame, b)?;
                binop(*op, x, y)?
            }
            Expr::Call { name, args, .. } => match Builtin::from_name(name) {
                Some(b) => {
                    let mut vals = Vec::with_capacity(args.len());
                    for a in args {
                        vals.push(self.expr(frame, a)?);
                    }
                    self.builtin(b, &vals)?
                }
                None => {
                    // Arguments are evaluated right to left, as pushed.
                    let mut vals = vec![0; args.len()];
                    for (i, a) in args.iter().enumerate().rev() {
                        vals[i] = self.expr(frame, a)?;
                    }
                    let f = self.prog.function(name).expect("resolved");
                    self.call(f, vals)?
                }
            },
        })
    }

    fn builtin(&mut self, b: Builtin, args: &[u32]) -> Eval<u32> {
        match b {
            Builtin::Mload => self.load(args[0]),
            Builtin::Mstore => {
                self.store(args[0], args[1])?;
                Ok(args[1])
            }
            Builtin::Write => {
                self.output.push(args[0] as u8);
                Ok(args[0])
            }
            Builtin::Halt => Err(Stop::Halt(args[0])),
            Builtin::InputLen => self.load(0),
            Builtin::InputByte => self.load(args[0].wrapping_add(INPUT_BASE)),
        }
    }
}

fn binop(op: BinOp, x: u32, y: u32) -> Eval<u32> {
    let signed = |f: fn(i32, i32) -> bool| f(x as i32, y as i32) as u32;
    Ok(match op {
        BinOp::Add => x.wrapping_add(y),
        BinOp::Sub => x.wrapping_sub(y),
        BinOp::Mul => x.wrapping_mul(y),
        BinOp::Div | BinOp::Rem if y == 0 => return Err(Stop::Fault(Fault::DivideByZero)),
        BinOp::Div => x / y,
        BinOp::Rem => x % y,
        BinOp::And => x & y,
        BinOp::Or => x | y,
        BinOp::Xor => x ^ y,
        BinOp::Shl => x << (y & 31),
        BinOp::Shr => ((x as i32) >> (y & 31)) as u32,
        BinOp::Lt => signed(|a, b| a < b),
        BinOp::Le => signed(|a, b| a <= b),
        BinOp::Gt => signed(|a, b| a > b),
        BinOp::Ge => signed(|a, b| a >= b),
        BinOp::Eq => (x == y) as u32,
        BinOp::Ne => (x != y) as u32,
        BinOp::LogAnd | BinOp::LogOr => unreachable!("short-circuit operators are evaluated lazily"),
    })
}

/// Interprets `source` against `input` with the default fuel.
pub fn interpret_minilang(source: &[u8], input: &[u8]) -> Result<Interpretation, MiniError> {
    interpret_with_fuel(source, input, DEFAULT_FUEL)
}

pub fn interpret_with_fuel(source: &[u8], input: &[u8], fuel: u64) -> Result<Interpretation, MiniError> {
    let prog = frontend(source)?;
    Ok(interpret_program(&prog, input, fuel))
}

/// Runs an already resolved program.
pub fn interpret_program(prog: &Program, input: &[u8], fuel: u64) -> Interpretation {
    let mut memory = Memory::zeroed();
    match input_words(input) {
        Ok(words) => {
            for (a, v) in words {
                memory.set(a, v);
            }
        }
        Err(_) => {
            return Interpretation {
                output: Vec::new(),
                exit_code: 0,
                fault: Some(Fault::InputTooLarge),
            }
        }
    }
    let mut m = Machine {
        prog,
        memory,
        output: Vec::new(),
        fuel,
        depth: 0,
    };
    let main = prog.function("main").expect("resolved program has main");
    let (exit_code, fault) = match m.call(main, Vec::new()) {
        Ok(v) | Err(Stop::Halt(v)) => (v, None),
        Err(Stop::Fault(f)) => (0, Some(f)),
    };
    Interpretation {
        output: m.output,
        exit_code,
        fault,
    }
}
