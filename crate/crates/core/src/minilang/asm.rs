//! Symbolic assembly units and the two-pass assembler.
//!
//! Text syntax mirrors the instruction `Display` form, one item per line:
//!
//! ```text
//! main:
//!     addi r1, r0, 5       ; comment
//!     lw r2, -1(r6)
//!     beq r1, r0, done
//! done:
//!     halt r1
//! ```
//!
//! Branch and `jal` label operands become displacements relative to the
//! following instruction. A label used as an I-format immediate becomes the
//! label's absolute address.

use std::collections::HashMap;
use std::fmt;

use crate::isa::{encode, Format, GuestImage, Instruction, Opcode, Reg, IMM16_MAX, IMM16_MIN, IMM20_MAX, IMM20_MIN};

use super::{MiniError, Stage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Imm(i32),
    Label(String),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Imm(v) => write!(f, "{v}"),
            Operand::Label(l) => f.write_str(l),
        }
    }
}

/// One instruction whose immediate may still be symbolic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmOp {
    pub op: Opcode,
    pub rd: Reg,
    pub rs1: Reg,
    pub rs2: Reg,
    pub imm: Operand,
}

impl fmt::Display for AsmOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (op, imm) = (self.op, &self.imm);
        match op.format() {
            Format::R => write!(f, "{op} {}, {}, {}", self.rd, self.rs1, self.rs2),
            Format::Unary => write!(f, "{op} {}", self.rs1),
            Format::U | Format::J => write!(f, "{op} {}, {imm}", self.rd),
            Format::I if op == Opcode::Lw => write!(f, "lw {}, {imm}({})", self.rd, self.rs1),
            Format::I => write!(f, "{op} {}, {}, {imm}", self.rd, self.rs1),
            Format::B if op == Opcode::Sw => write!(f, "sw {}, {imm}({})", self.rs2, self.rs1),
            Format::B => write!(f, "{op} {}, {}, {imm}", self.rs1, self.rs2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmItem {
    Label(String),
    Op(AsmOp),
}

/// A linear list of labels and instructions. The entry point is the label
/// `main` when present, otherwise the first instruction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AsmUnit {
    pub items: Vec<AsmItem>,
}

impl AsmUnit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn label(&mut self, name: impl Into<String>) {
        self.items.push(AsmItem::Label(name.into()));
    }

    pub fn push(&mut self, op: Opcode, rd: Reg, rs1: Reg, rs2: Reg, imm: Operand) {
        self.items.push(AsmItem::Op(AsmOp { op, rd, rs1, rs2, imm }));
    }

    /// Appends a fully resolved instruction.
    pub fn instr(&mut self, i: Instruction) {
        self.push(i.op, i.rd, i.rs1, i.rs2, Operand::Imm(i.imm));
    }

    /// Appends a branch (or `jal` when `op` is JAL, with `a` as link register).
    pub fn branch_to(&mut self, op: Opcode, a: Reg, b: Reg, label: &str) {
        let target = Operand::Label(label.to_string());
        if op == Opcode::Jal {
            self.push(op, a, Reg::ZERO, Reg::ZERO, target);
        } else {
            self.push(op, Reg::ZERO, a, b, target);
        }
    }

    pub fn instruction_count(&self) -> usize {
        self.items.iter().filter(|i| matches!(i, AsmItem::Op(_))).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            match item {
                AsmItem::Label(l) => out.push_str(&format!("{l}:\n")),
                AsmItem::Op(op) => out.push_str(&format!("    {op}\n")),
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<AsmUnit, MiniError> {
        let mut unit = AsmUnit::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let mut rest = raw.split([';', '#']).next().unwrap_or("").trim();
            while let Some(colon) = rest.find(':') {
                let name = rest[..colon].trim();
                if !is_label(name) {
                    return Err(asm_err(line, format!("bad label `{name}`")));
                }
                unit.label(name);
                rest = rest[colon + 1..].trim();
            }
            if !rest.is_empty() {
                unit.items.push(AsmItem::Op(parse_op(rest, line)?));
            }
        }
        Ok(unit)
    }

    pub fn assemble(&self) -> Result<GuestImage, MiniError> {
        let mut labels = HashMap::new();
        let mut pc = 0u32;
        for item in &self.items {
            match item {
                AsmItem::Label(l) => {
                    if labels.insert(l.as_str(), pc).is_some() {
                        return Err(asm_err(0, format!("label `{l}` defined twice")));
                    }
                }
                AsmItem::Op(_) => pc += 1,
            }
        }
        let mut words = Vec::with_capacity(pc as usize);
        for item in &self.items {
            let AsmItem::Op(op) = item else { continue };
            let here = words.len() as i64;
            let imm = match &op.imm {
                Operand::Imm(v) => *v as i64,
                Operand::Label(l) => {
                    let target = *labels
                        .get(l.as_str())
                        .ok_or_else(|| asm_err(0, format!("undefined label `{l}`")))? as i64;
                    if matches!(op.op.format(), Format::B | Format::J) && op.op != Opcode::Sw {
                        target - (here + 1)
                    } else {
                        target
                    }
                }
            };
            let (lo, hi) = if op.op.format() == Format::J {
                (IMM20_MIN, IMM20_MAX)
            } else {
                (IMM16_MIN, IMM16_MAX)
            };
            if imm < lo as i64 || imm > hi as i64 {
                return Err(asm_err(
                    0,
                    format!("immediate {imm} of `{op}` at pc {here} does not fit"),
                ));
            }
            let instr = Instruction {
                op: op.op,
                rd: op.rd,
                rs1: op.rs1,
                rs2: op.rs2,
                imm: imm as i32,
            };
            words.push(encode(&instr).map_err(|e| asm_err(0, format!("`{op}` at pc {here}: {e}")))?);
        }
        let entry = labels.get("main").copied().unwrap_or(0);
        GuestImage::new(words, entry).map_err(|e| asm_err(0, e.to_string()))
    }
}

fn asm_err(line: usize, msg: impl Into<String>) -> MiniError {
    MiniError::new(Stage::Assemble, line, msg)
}

fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_reg(s: &str, line: usize) -> Result<Reg, MiniError> {
    s.strip_prefix('r')
        .and_then(|d| d.parse::<u8>().ok())
        .and_then(|n| Reg::new(n).ok())
        .ok_or_else(|| asm_err(line, format!("bad register `{s}`")))
}

fn parse_imm(s: &str, line: usize) -> Result<Operand, MiniError> {
    if is_label(s) {
        return Ok(Operand::Label(s.to_string()));
    }
    let (neg, digits) = match s.strip_prefix('-') {
        Some(d) => (true, d),
        None => (false, s),
    };
    let v = match digits.strip_prefix("0x") {
        Some(h) => i64::from_str_radix(h, 16),
        None => digits.parse::<i64>(),
    }
    .map_err(|_| asm_err(line, format!("bad immediate `{s}`")))?;
    let v = if neg { -v } else { v };
    i32::try_from(v)
        .map(Operand::Imm)
        .map_err(|_| asm_err(line, format!("immediate `{s}` out of range")))
}

/// Splits `imm(rs)`.
fn parse_mem(s: &str, line: usize) -> Result<(Operand, Reg), MiniError> {
    let open = s.find('(').ok_or_else(|| asm_err(line, format!("expected `imm(reg)`, got `{s}`")))?;
    let close = s
        .strip_suffix(')')
        .ok_or_else(|| asm_err(line, format!("expected `imm(reg)`, got `{s}`")))?;
    let imm = s[..open].trim();
    let imm = if imm.is_empty() { Operand::Imm(0) } else { parse_imm(imm, line)? };
    Ok((imm, parse_reg(close[open + 1..].trim(), line)?))
}

fn parse_op(text: &str, line: usize) -> Result<AsmOp, MiniError> {
    let (mnemonic, args) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let op = Opcode::from_mnemonic(mnemonic).ok_or_else(|| asm_err(line, format!("unknown mnemonic `{mnemonic}`")))?;
    let args: Vec<&str> = if args.trim().is_empty() {
        Vec::new()
    } else {
        args.split(',').map(str::trim).collect()
    };
    let want = match op.format() {
        Format::R => 3,
        Format::Unary => 1,
        Format::I if op == Opcode::Lw => 2,
        Format::I => 3,
        Format::B if op == Opcode::Sw => 2,
        Format::B => 3,
        Format::U | Format::J => 2,
    };
    if args.len() != want {
        return Err(asm_err(line, format!("`{mnemonic}` takes {want} operands")));
    }
    let reg = |i: usize| parse_reg(args[i], line);
    let z = Reg::ZERO;
    let o = |op, rd, rs1, rs2, imm| AsmOp { op, rd, rs1, rs2, imm };
    Ok(match op.format() {
        Format::R => o(op, reg(0)?, reg(1)?, reg(2)?, Operand::Imm(0)),
        Format::Unary => o(op, z, reg(0)?, z, Operand::Imm(0)),
        Format::I if op == Opcode::Lw => {
            let (imm, base) = parse_mem(args[1], line)?;
            o(op, reg(0)?, base, z, imm)
        }
        Format::I => o(op, reg(0)?, reg(1)?, z, parse_imm(args[2], line)?),
        Format::B if op == Opcode::Sw => {
            let (imm, base) = parse_mem(args[1], line)?;
            o(op, z, base, reg(0)?, imm)
        }
        Format::B => o(op, z, reg(0)?, reg(1)?, parse_imm(args[2], line)?),
        Format::U | Format::J => o(op, reg(0)?, z, z, parse_imm(args[1], line)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{decode, r, run};

    #[test]
    fn single_halt_is_one_word() {
        let mut u = AsmUnit::new();
        u.instr(Instruction::halt(r(0)));
        let img = u.assemble().unwrap();
        assert_eq!(img.code(), &[0x0000_0000]);
        assert_eq!(img.entry_pc(), 0);
    }

    #[test]
    fn backward_branch_displacement() {
        // loop at pc 0, branch at pc 3 back to it: 0 - (3 + 1) = -4
        let u = AsmUnit::parse("top:\n addi r1, r1, 1\n addi r2, r2, 1\n addi r3, r3, 1\n bne r1, r0, top\n").unwrap();
        let img = u.assemble().unwrap();
        let b = decode(img.code()[3]).unwrap();
        assert_eq!((b.op, b.imm), (Opcode::Bne, -4));
    }

    #[test]
    fn text_round_trip() {
        let src = "main:\n    lui r7, 1\n    addi r7, r7, -1\n    sw r1, 0(r7)\n    lw r2, 3(r7)\n    jal r5, f\n    halt r1\nf:\n    jalr r0, r5, 0\n";
        let u = AsmUnit::parse(src).unwrap();
        assert_eq!(u.to_text(), src);
        assert_eq!(AsmUnit::parse(&u.to_text()).unwrap(), u);
        let img = u.assemble().unwrap();
        assert_eq!(img.entry_pc(), 0);
        assert_eq!(decode(img.code()[4]).unwrap().imm, 1);
    }

    #[test]
    fn hundred_labels_torture() {
        // A chain of forward branches through 100 labels, each skipping a
        // poison write; the program must print exactly the 100 marker bytes.
        let mut text = String::from("main:\n");
        for i in 0..100 {
            text.push_str(&format!(" addi r1, r0, {}\n write r1\n beq r0, r0, l{i}\n addi r2, r0, 88\n write r2\nl{i}:\n", 33 + i % 90));
        }
        text.push_str(" halt r0\n");
        let img = AsmUnit::parse(&text).unwrap().assemble().unwrap();
        let res = run(&img, b"", 10_000).unwrap();
        assert!(res.is_clean());
        let expected: Vec<u8> = (0..100).map(|i| (33 + i % 90) as u8).collect();
        assert_eq!(res.output, expected);
    }

    #[test]
    fn assembler_errors() {
        assert_eq!(AsmUnit::parse("nop r1").unwrap_err().line, 1);
        assert_eq!(AsmUnit::parse("halt r0\n add r1, r9, r2").unwrap_err().line, 2);
        assert!(AsmUnit::parse("beq r1, r0, nowhere").unwrap().assemble().is_err());
        assert!(AsmUnit::parse("a:\na:\nhalt r0").unwrap().assemble().is_err());
        assert!(AsmUnit::parse("addi r1, r0, 40000").unwrap().assemble().is_err());
        // displacement overflow
        let mut u = AsmUnit::new();
        u.branch_to(Opcode::Beq, r(0), r(0), "far");
        for _ in 0..40_000 {
            u.instr(Instruction::addi(r(1), r(1), 1));
        }
        u.label("far");
        u.instr(Instruction::halt(r(0)));
        let e = u.assemble().unwrap_err();
        assert!(e.message.contains("does not fit"), "{e}");
    }
}
