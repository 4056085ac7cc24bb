//! Interpreter for StackAsm, the compiler's output language.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmTrap {
    #[error("line {0}: stack underflow")]
    StackUnderflow(usize),
    #[error("line {0}: unknown or malformed instruction")]
    BadInstruction(usize),
    #[error("line {0}: division by zero")]
    DivideByZero(usize),
    #[error("line {0}: program ends without HALT")]
    MissingHalt(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Push(u32),
    Load(usize),
    Store(usize),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Print,
    Halt,
}

fn parse_line(line: &str) -> Option<Op> {
    let arg = |s: &str| -> Option<u32> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        s.parse().ok()
    };
    Some(match line.split_once(' ') {
        Some(("PUSH", n)) => Op::Push(arg(n)?),
        Some(("LOAD", k)) => Op::Load(arg(k)? as usize),
        Some(("STORE", k)) => Op::Store(arg(k)? as usize),
        Some(_) => return None,
        None => match line {
            "ADD" => Op::Add,
            "SUB" => Op::Sub,
            "MUL" => Op::Mul,
            "DIV" => Op::Div,
            "NEG" => Op::Neg,
            "PRINT" => Op::Print,
            "HALT" => Op::Halt,
            _ => return None,
        },
    })
}

/// Executes StackAsm text. Lines are 1-based in traps; a missing HALT is
/// reported at the line after the last one. Unset slots read as zero.
pub fn stackvm_run(asm: &[u8]) -> Result<Vec<u8>, VmTrap> {
    let text = std::str::from_utf8(asm).map_err(|e| {
        let line = asm[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        VmTrap::BadInstruction(line)
    })?;
    let lines: Vec<&str> = match text.strip_suffix('\n').unwrap_or(text) {
        "" if text.is_empty() => Vec::new(),
        body => body.split('\n').collect(),
    };
    let mut stack: Vec<u32> = Vec::new();
    let mut slots: Vec<u32> = Vec::new();
    let mut out = Vec::new();
    for (i, raw) in lines.iter().enumerate() {
        let n = i + 1;
        let op = parse_line(raw).ok_or(VmTrap::BadInstruction(n))?;
        let mut pop = || stack.pop().ok_or(VmTrap::StackUnderflow(n));
        match op {
            Op::Push(v) => stack.push(v),
            Op::Load(k) => stack.push(slots.get(k).copied().unwrap_or(0)),
            Op::Store(k) => {
                let v = pop()?;
                if slots.len() <= k {
                    slots.resize(k + 1, 0);
                }
                slots[k] = v;
            }
            Op::Neg => {
                let v = pop()?;
                stack.push(v.wrapping_neg());
            }
            Op::Print => {
                let v = pop()?;
                out.extend_from_slice(format!("{}\n", v as i32).as_bytes());
            }
            Op::Halt => return Ok(out),
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                let b = pop()?;
                let a = pop()?;
                stack.push(match op {
                    Op::Add => a.wrapping_add(b),
                    Op::Sub => a.wrapping_sub(b),
                    Op::Mul => a.wrapping_mul(b),
                    _ => a.checked_div(b).ok_or(VmTrap::DivideByZero(n))?,
                });
            }
        }
    }
    Err(VmTrap::MissingHalt(lines.len() + 1))
}
