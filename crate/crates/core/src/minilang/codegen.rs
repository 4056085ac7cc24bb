//! Code generation from a resolved program to an [`AsmUnit`].
//!
//! Register use: r1 accumulator and return value, r2/r3 scratch, r4 base of
//! the globals block, r5 return address, r6 frame pointer, r7 stack pointer.
//!
//! Frame layout, addresses relative to r6:
//!
//! ```text
//!   +2+i   argument i (pushed right to left by the caller)
//!   +1     return address
//!    0     caller's frame pointer
//!   -1-j   local j
//! ```
//!
//! `main` sets up r7 = r6 = 0x10000 and r4, and halts with its return value
//! instead of returning.

use crate::isa::{r, Instruction, Opcode, Reg, INPUT_BASE, MEMORY_WORDS};

use super::asm::{AsmUnit, Operand};
use super::ast::{BinOp, Expr, Function, Program, Slot, Stmt, UnOp};
use super::{Builtin, GLOBAL_BASE};

const ACC: Reg = r(1);
const T1: Reg = r(2);
const T2: Reg = r(3);
const GP: Reg = r(4);
const RA: Reg = r(5);
const FP: Reg = r(6);
const SP: Reg = r(7);
const ZERO: Reg = r(0);

fn fits16(v: i64) -> bool {
    (i16::MIN as i64..=i16::MAX as i64).contains(&v)
}

struct Gen {
    asm: AsmUnit,
    labels: usize,
    ret_label: String,
}

impl Gen {
    fn emit(&mut self, i: Instruction) {
        self.asm.instr(i);
    }

    fn fresh(&mut self) -> String {
        self.labels += 1;
        format!(".L{}", self.labels)
    }

    fn jump(&mut self, label: &str) {
        self.asm.branch_to(Opcode::Jal, ZERO, ZERO, label);
    }

    fn branch(&mut self, op: Opcode, a: Reg, b: Reg, label: &str) {
        self.asm.branch_to(op, a, b, label);
    }

    fn load_const(&mut self, rd: Reg, n: u32) {
        let signed = n as i32;
        if fits16(signed as i64) {
            self.emit(Instruction::addi(rd, ZERO, signed));
            return;
        }
        let hi = (n.wrapping_add(0x8000) >> 16) as u16 as i16 as i32;
        let lo = n.wrapping_sub((hi as u32) << 16) as i32;
        self.emit(Instruction::lui(rd, hi));
        if lo != 0 {
            self.emit(Instruction::addi(rd, rd, lo));
        }
    }

    fn slot_addr(slot: Slot) -> (Reg, i32) {
        match slot {
            Slot::Param(i) => (FP, 2 + i as i32),
            Slot::Local(j) => (FP, -1 - j as i32),
            Slot::Global(a) => (GP, (a - GLOBAL_BASE) as i32),
        }
    }

    fn load_slot(&mut self, rd: Reg, slot: Slot) {
        let (base, off) = Self::slot_addr(slot);
        self.emit(Instruction::itype(Opcode::Lw, rd, base, off));
    }

    fn store_slot(&mut self, rs: Reg, slot: Slot) {
        let (base, off) = Self::slot_addr(slot);
        self.emit(Instruction::btype(Opcode::Sw, base, rs, off));
    }

    fn push(&mut self, rs: Reg) {
        self.emit(Instruction::addi(SP, SP, -1));
        self.emit(Instruction::btype(Opcode::Sw, SP, rs, 0));
    }

    fn pop(&mut self, rd: Reg) {
        self.emit(Instruction::itype(Opcode::Lw, rd, SP, 0));
        self.emit(Instruction::addi(SP, SP, 1));
    }

    /// Expressions that can be loaded straight into a register.
    fn is_simple(e: &Expr) -> bool {
        matches!(e, Expr::Num(_) | Expr::Name { .. })
    }

    /// Simple expressions that no evaluation of another expression can
    /// change: literals and frame slots. A global may be written by a call.
    fn is_stable(e: &Expr) -> bool {
        matches!(
            e,
            Expr::Num(_)
                | Expr::Name {
                    slot: Some(Slot::Param(_) | Slot::Local(_)),
                    ..
                }
        )
    }

    fn load_simple(&mut self, rd: Reg, e: &Expr) {
        match e {
            Expr::Num(n) => self.load_const(rd, *n),
            Expr::Name { slot, .. } => self.load_slot(rd, slot.expect("resolved")),
            _ => unreachable!("not a simple expression"),
        }
    }

    /// Evaluates `a` then `b` (observably in that order) and returns the
    /// registers holding them.
    fn operands(&mut self, a: &Expr, b: &Expr) -> (Reg, Reg) {
        if Self::is_simple(b) {
            self.expr(a);
            self.load_simple(T1, b);
            (ACC, T1)
        } else if Self::is_stable(a) {
            self.expr(b);
            self.load_simple(T1, a);
            (T1, ACC)
        } else {
            self.expr(a);
            self.push(ACC);
            self.expr(b);
            self.pop(T1);
            (T1, ACC)
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Num(_) | Expr::Name { .. } => self.load_simple(ACC, e),
            Expr::Unary(UnOp::Neg, inner) => {
                self.expr(inner);
                self.emit(Instruction::rtype(Opcode::Sub, ACC, ZERO, ACC));
            }
            Expr::Unary(UnOp::Not, inner) => {
                self.expr(inner);
                self.emit(Instruction::addi(T2, ZERO, 1));
                self.emit(Instruction::rtype(Opcode::Sltu, ACC, ACC, T2));
            }
            Expr::Binary(BinOp::LogAnd | BinOp::LogOr, _, _) => {
                let (f, end) = (self.fresh(), self.fresh());
                self.cond_false(e, &f);
                self.emit(Instruction::addi(ACC, ZERO, 1));
                self.jump(&end);
                self.asm.label(f);
                self.emit(Instruction::addi(ACC, ZERO, 0));
                self.asm.label(end);
            }
            Expr::Binary(op, a, b) => self.binary(*op, a, b),
            Expr::Call { name, args, .. } => self.call(name, args),
        }
    }

    fn binary(&mut self, op: BinOp, a: &Expr, b: &Expr) {
        if let (BinOp::Add | BinOp::Sub, Expr::Num(n)) = (op, b) {
            let n = *n as i32 as i64;
            let delta = if op == BinOp::Add { n } else { -n };
            if fits16(delta) {
                self.expr(a);
                self.emit(Instruction::addi(ACC, ACC, delta as i32));
                return;
            }
        }
        let (l, rr) = self.operands(a, b);
        let rt = |g: &mut Gen, o: Opcode, x: Reg, y: Reg| g.emit(Instruction::rtype(o, ACC, x, y));
        match op {
            BinOp::Add => rt(self, Opcode::Add, l, rr),
            BinOp::Sub => rt(self, Opcode::Sub, l, rr),
            BinOp::Mul => rt(self, Opcode::Mul, l, rr),
            BinOp::Div => rt(self, Opcode::Divu, l, rr),
            BinOp::Rem => rt(self, Opcode::Remu, l, rr),
            BinOp::And => rt(self, Opcode::And, l, rr),
            BinOp::Or => rt(self, Opcode::Or, l, rr),
            BinOp::Xor => rt(self, Opcode::Xor, l, rr),
            BinOp::Shl => rt(self, Opcode::Sll, l, rr),
            BinOp::Shr => rt(self, Opcode::Sra, l, rr),
            BinOp::Lt => rt(self, Opcode::Slt, l, rr),
            BinOp::Gt => rt(self, Opcode::Slt, rr, l),
            BinOp::Le | BinOp::Ge => {
                // 1 - (strict opposite)
                let (x, y) = if op == BinOp::Le { (rr, l) } else { (l, rr) };
                rt(self, Opcode::Slt, x, y);
                self.emit(Instruction::addi(ACC, ACC, -1));
                rt(self, Opcode::Sub, ZERO, ACC);
            }
            BinOp::Eq => {
                rt(self, Opcode::Sub, l, rr);
                self.emit(Instruction::addi(T2, ZERO, 1));
                rt(self, Opcode::Sltu, ACC, T2);
            }
            BinOp::Ne => {
                rt(self, Opcode::Sub, l, rr);
                rt(self, Opcode::Sltu, ZERO, ACC);
            }
            BinOp::LogAnd | BinOp::LogOr => unreachable!("handled by expr"),
        }
    }

    fn call(&mut self, name: &str, args: &[Expr]) {
        let Some(builtin) = Builtin::from_name(name) else {
            for a in args.iter().rev() {
                self.expr(a);
                self.push(ACC);
            }
            self.asm.branch_to(Opcode::Jal, RA, ZERO, name);
            if !args.is_empty() {
                self.emit(Instruction::addi(SP, SP, args.len() as i32));
            }
            return;
        };
        let const_addr = |e: &Expr, bias: i64| match e {
            Expr::Num(n) if fits16(*n as i64 + bias) => Some((*n as i64 + bias) as i32),
            _ => None,
        };
        match builtin {
            Builtin::InputLen => self.emit(Instruction::itype(Opcode::Lw, ACC, ZERO, 0)),
            Builtin::InputByte | Builtin::Mload => {
                let bias = if builtin == Builtin::InputByte { INPUT_BASE as i64 } else { 0 };
                match const_addr(&args[0], bias) {
                    Some(a) => self.emit(Instruction::itype(Opcode::Lw, ACC, ZERO, a)),
                    None => {
                        self.expr(&args[0]);
                        self.emit(Instruction::itype(Opcode::Lw, ACC, ACC, bias as i32));
                    }
                }
            }
            Builtin::Mstore => match const_addr(&args[0], 0) {
                Some(a) => {
                    self.expr(&args[1]);
                    self.emit(Instruction::btype(Opcode::Sw, ZERO, ACC, a));
                }
                None => {
                    let (addr, value) = self.operands(&args[0], &args[1]);
                    self.emit(Instruction::btype(Opcode::Sw, addr, value, 0));
                    if value != ACC {
                        self.emit(Instruction::addi(ACC, value, 0));
                    }
                }
            },
            Builtin::Write => {
                self.expr(&args[0]);
                self.emit(Instruction::write(ACC));
            }
            Builtin::Halt => {
                self.expr(&args[0]);
                self.emit(Instruction::halt(ACC));
            }
        }
    }

    /// Branches to `target` when `e` evaluates to zero.
    fn cond_false(&mut self, e: &Expr, target: &str) {
        self.cond(e, target, false);
    }

    /// Branches to `target` when `e` evaluates to nonzero.
    fn cond_true(&mut self, e: &Expr, target: &str) {
        self.cond(e, target, true);
    }

    fn cond(&mut self, e: &Expr, target: &str, when: bool) {
        match e {
            Expr::Num(n) => {
                if (*n != 0) == when {
                    self.jump(target);
                }
            }
            Expr::Unary(UnOp::Not, inner) => self.cond(inner, target, !when),
            Expr::Binary(BinOp::LogAnd, a, b) if !when => {
                self.cond_false(a, target);
                self.cond_false(b, target);
            }
            Expr::Binary(BinOp::LogOr, a, b) if when => {
                self.cond_true(a, target);
                self.cond_true(b, target);
            }
            Expr::Binary(BinOp::LogAnd, a, b) => {
                let skip = self.fresh();
                self.cond_false(a, &skip);
                self.cond_true(b, target);
                self.asm.label(skip);
            }
            Expr::Binary(BinOp::LogOr, a, b) => {
                let skip = self.fresh();
                self.cond_true(a, &skip);
                self.cond_false(b, target);
                self.asm.label(skip);
            }
            Expr::Binary(op, a, b) if op.is_comparison() => {
                let (l, rr) = self.operands(a, b);
                // Normalise to "branch when (x blt y) == sense" or eq/ne.
                let (kind, x, y, sense) = match op {
                    BinOp::Lt => (Opcode::Blt, l, rr, true),
                    BinOp::Gt => (Opcode::Blt, rr, l, true),
                    BinOp::Ge => (Opcode::Blt, l, rr, false),
                    BinOp::Le => (Opcode::Blt, rr, l, false),
                    BinOp::Eq => (Opcode::Beq, l, rr, true),
                    _ => (Opcode::Beq, l, rr, false),
                };
                let sense = sense == when;
                match (kind, sense) {
                    (Opcode::Beq, true) => self.branch(Opcode::Beq, x, y, target),
                    (Opcode::Beq, false) => self.branch(Opcode::Bne, x, y, target),
                    (_, true) => self.branch(Opcode::Blt, x, y, target),
                    (_, false) => {
                        let skip = self.fresh();
                        self.branch(Opcode::Blt, x, y, &skip);
                        self.jump(target);
                        self.asm.label(skip);
                    }
                }
            }
            _ => {
                self.expr(e);
                let op = if when { Opcode::Bne } else { Opcode::Beq };
                self.branch(op, ACC, ZERO, target);
            }
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Var { init, slot, .. } => {
                let slot = slot.expect("resolved");
                match init {
                    Some(e) => {
                        self.expr(e);
                        self.store_slot(ACC, slot);
                    }
                    None => self.store_slot(ZERO, slot),
                }
            }
            Stmt::Assign { value, slot, .. } => {
                self.expr(value);
                self.store_slot(ACC, slot.expect("resolved"));
            }
            Stmt::If { cond, then, els } => {
                let else_label = self.fresh();
                self.cond_false(cond, &else_label);
                self.block(then);
                if els.is_empty() {
                    self.asm.label(else_label);
                } else {
                    let end = self.fresh();
                    self.jump(&end);
                    self.asm.label(else_label);
                    self.block(els);
                    self.asm.label(end);
                }
            }
            Stmt::While { cond, body } => {
                let (top, end) = (self.fresh(), self.fresh());
                self.asm.label(top.clone());
                self.cond_false(cond, &end);
                self.block(body);
                self.jump(&top);
                self.asm.label(end);
            }
            Stmt::Return { value } => {
                match value {
                    Some(e) => self.expr(e),
                    None => self.emit(Instruction::addi(ACC, ZERO, 0)),
                }
                let ret = self.ret_label.clone();
                self.jump(&ret);
            }
            Stmt::Expr(e) => self.expr(e),
        }
    }

    fn function(&mut self, f: &Function) {
        self.ret_label = format!(".ret.{}", f.name);
        self.asm.label(f.name.clone());
        let is_main = f.name == "main";
        if is_main {
            self.load_const(SP, MEMORY_WORDS as u32);
            self.emit(Instruction::addi(FP, SP, 0));
            self.load_const(GP, GLOBAL_BASE);
        } else {
            self.emit(Instruction::addi(SP, SP, -2));
            self.emit(Instruction::btype(Opcode::Sw, SP, RA, 1));
            self.emit(Instruction::btype(Opcode::Sw, SP, FP, 0));
            self.emit(Instruction::addi(FP, SP, 0));
        }
        if !f.locals.is_empty() {
            self.emit(Instruction::addi(SP, SP, -(f.locals.len() as i32)));
        }
        self.block(&f.body);
        self.emit(Instruction::addi(ACC, ZERO, 0));
        self.asm.label(self.ret_label.clone());
        if is_main {
            self.emit(Instruction::halt(ACC));
        } else {
            self.emit(Instruction::addi(SP, FP, 0));
            self.emit(Instruction::itype(Opcode::Lw, RA, SP, 1));
            self.emit(Instruction::itype(Opcode::Lw, FP, SP, 0));
            self.emit(Instruction::addi(SP, SP, 2));
            self.asm.push(Opcode::Jalr, ZERO, RA, ZERO, Operand::Imm(0));
        }
    }
}

/// Lowers a resolved program. Functions are laid out in source order.
pub fn generate(prog: &Program) -> AsmUnit {
    let mut g = Gen {
        asm: AsmUnit::new(),
        labels: 0,
        ret_label: String::new(),
    };
    for f in &prog.functions {
        g.function(f);
    }
    g.asm
}
