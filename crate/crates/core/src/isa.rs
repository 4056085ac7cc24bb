//! Guest instruction set, image format and the deterministic virtual machine.
//!
//! The machine is a Harvard design: code lives in the [`GuestImage`] and is
//! never addressable as data, so the image digest fully determines what the
//! guest can execute. Data memory is 2^16 little-endian 32-bit words.
//!
//! Encoding (bit 31 is the most significant):
//!
//! | format | 31..24 | 23..20 | 19..16 | 15..12 | 15..0 / 19..0 |
//! |--------|--------|--------|--------|--------|---------------|
//! | R      | opcode | rd     | rs1    | rs2    |               |
//! | I      | opcode | rd     | rs1    |        | imm16         |
//! | B      | opcode | rs1    | rs2    |        | imm16         |
//! | J      | opcode | rd     |        |        | imm20         |
//!
//! Branches and `JAL` are relative to `pc + 1`. Unused fields must be zero.

use std::fmt;

use thiserror::Error;

use crate::commit::{chain_extend, chain_init, sha256, Digest, IMAGE_PREFIX};

pub const NUM_REGS: usize = 8;
/// Data memory size in words.
pub const MEMORY_WORDS: usize = 1 << 16;
pub const MAX_CODE_WORDS: usize = 1 << 20;
/// Word address of the input length.
pub const INPUT_LEN_ADDR: u32 = 0;
/// Word address of the first input byte (one byte per word).
pub const INPUT_BASE: u32 = 0x0100;
pub const MAX_INPUT_LEN: usize = 32 * 1024;
pub const DEFAULT_MAX_STEPS: u64 = 1 << 24;
pub const IMAGE_MAGIC: &[u8; 4] = b"ZKPI";
pub const IMAGE_FORMAT_VERSION: u8 = 1;

pub const IMM16_MIN: i32 = i16::MIN as i32;
pub const IMM16_MAX: i32 = i16::MAX as i32;
pub const IMM20_MIN: i32 = -(1 << 19);
pub const IMM20_MAX: i32 = (1 << 19) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IsaError {
    #[error("register r{0} does not exist")]
    BadRegister(u8),
    #[error("immediate {imm} does not fit the {bits}-bit field of {op}")]
    ImmediateOutOfRange { op: Opcode, imm: i32, bits: u32 },
    #[error("field {field} must be zero for {op}")]
    UnusedField { op: Opcode, field: &'static str },
    #[error("illegal instruction word {0:#010x}")]
    Illegal(u32),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("image file too short")]
    Truncated,
    #[error("bad image magic")]
    BadMagic,
    #[error("unsupported image format version {0}")]
    UnsupportedVersion(u16),
    #[error("image has no code")]
    Empty,
    #[error("image code length {0} exceeds the limit")]
    TooLarge(usize),
    #[error("entry pc {entry} outside code of {len} words")]
    BadEntry { entry: u32, len: usize },
    #[error("code length field says {declared} words but {actual} bytes follow")]
    LengthMismatch { declared: u32, actual: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Trap {
    #[error("illegal instruction {word:#010x} at pc {pc}")]
    IllegalInstruction { pc: u32, word: u32 },
    #[error("pc {pc} outside code")]
    PcOutOfRange { pc: u32 },
    #[error("division by zero at pc {pc}")]
    DivideByZero { pc: u32 },
    #[error("memory address {address:#x} out of range at pc {pc}")]
    MemoryOutOfRange { pc: u32, address: u32 },
    #[error("step budget of {0} exhausted")]
    StepBudgetExhausted(u64),
    #[error("machine already halted")]
    Halted,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("input of {0} bytes exceeds the {MAX_INPUT_LEN}-byte input region")]
pub struct CapacityError(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Halt = 0x00,
    Add = 0x01,
    Sub = 0x02,
    Mul = 0x03,
    Divu = 0x04,
    Remu = 0x05,
    And = 0x06,
    Or = 0x07,
    Xor = 0x08,
    Sll = 0x09,
    Srl = 0x0A,
    Sra = 0x0B,
    Slt = 0x0C,
    Sltu = 0x0D,
    Addi = 0x10,
    Lui = 0x11,
    Lw = 0x12,
    Sw = 0x13,
    Beq = 0x18,
    Bne = 0x19,
    Blt = 0x1A,
    Bltu = 0x1B,
    Jal = 0x1C,
    Jalr = 0x1D,
    Write = 0x20,
}

/// Operand layout of an opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `rd, rs1, rs2`
    R,
    /// Only `rs1` in the R layout (HALT, WRITE).
    Unary,
    /// `rd, rs1, imm16`
    I,
    /// `rd, imm16` (LUI)
    U,
    /// `rs1, rs2, imm16`
    B,
    /// `rd, imm20`
    J,
}

impl Opcode {
    pub const ALL: [Opcode; 25] = [
        Opcode::Halt,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Divu,
        Opcode::Remu,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Sll,
        Opcode::Srl,
        Opcode::Sra,
        Opcode::Slt,
        Opcode::Sltu,
        Opcode::Addi,
        Opcode::Lui,
        Opcode::Lw,
        Opcode::Sw,
        Opcode::Beq,
        Opcode::Bne,
        Opcode::Blt,
        Opcode::Bltu,
        Opcode::Jal,
        Opcode::Jalr,
        Opcode::Write,
    ];

    pub fn from_byte(b: u8) -> Option<Opcode> {
        Opcode::ALL.iter().copied().find(|op| *op as u8 == b)
    }

    pub fn format(self) -> Format {
        use Opcode::*;
        match self {
            Halt | Write => Format::Unary,
            Add | Sub | Mul | Divu | Remu | And | Or | Xor | Sll | Srl | Sra | Slt | Sltu => Format::R,
            Addi | Lw | Jalr => Format::I,
            Lui => Format::U,
            Sw | Beq | Bne | Blt | Bltu => Format::B,
            Jal => Format::J,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        use Opcode::*;
        match self {
            Halt => "halt",
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Divu => "divu",
            Remu => "remu",
            And => "and",
            Or => "or",
            Xor => "xor",
            Sll => "sll",
            Srl => "srl",
            Sra => "sra",
            Slt => "slt",
            Sltu => "sltu",
            Addi => "addi",
            Lui => "lui",
            Lw => "lw",
            Sw => "sw",
            Beq => "beq",
            Bne => "bne",
            Blt => "blt",
            Bltu => "bltu",
            Jal => "jal",
            Jalr => "jalr",
            Write => "write",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.iter().copied().find(|op| op.mnemonic() == s)
    }

    /// True for instructions that touch data memory.
    pub fn is_memory(self) -> bool {
        matches!(self, Opcode::Lw | Opcode::Sw)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Register index, always below [`NUM_REGS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);

    pub fn new(index: u8) -> Result<Reg, IsaError> {
        if (index as usize) < NUM_REGS {
            Ok(Reg(index))
        } else {
            Err(IsaError::BadRegister(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Shorthand for building registers from literals known to be in range.
pub const fn r(index: u8) -> Reg {
    assert!((index as usize) < NUM_REGS, "register index out of range");
    Reg(index)
}

/// A decoded instruction. Fields unused by the opcode's format are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Opcode,
    pub rd: Reg,
    pub rs1: Reg,
    pub rs2: Reg,
    pub imm: i32,
}

impl Instruction {
    fn raw(op: Opcode, rd: Reg, rs1: Reg, rs2: Reg, imm: i32) -> Self {
        Instruction { op, rd, rs1, rs2, imm }
    }

    pub fn rtype(op: Opcode, rd: Reg, rs1: Reg, rs2: Reg) -> Self {
        Self::raw(op, rd, rs1, rs2, 0)
    }

    pub fn itype(op: Opcode, rd: Reg, rs1: Reg, imm: i32) -> Self {
        Self::raw(op, rd, rs1, Reg::ZERO, imm)
    }

    pub fn btype(op: Opcode, rs1: Reg, rs2: Reg, imm: i32) -> Self {
        Self::raw(op, Reg::ZERO, rs1, rs2, imm)
    }

    pub fn halt(rs1: Reg) -> Self {
        Self::raw(Opcode::Halt, Reg::ZERO, rs1, Reg::ZERO, 0)
    }

    pub fn write(rs1: Reg) -> Self {
        Self::raw(Opcode::Write, Reg::ZERO, rs1, Reg::ZERO, 0)
    }

    pub fn lui(rd: Reg, imm: i32) -> Self {
        Self::raw(Opcode::Lui, rd, Reg::ZERO, Reg::ZERO, imm)
    }

    pub fn jal(rd: Reg, imm: i32) -> Self {
        Self::raw(Opcode::Jal, rd, Reg::ZERO, Reg::ZERO, imm)
    }

    pub fn addi(rd: Reg, rs1: Reg, imm: i32) -> Self {
        Self::itype(Opcode::Addi, rd, rs1, imm)
    }

    fn check(&self) -> Result<(), IsaError> {
        let op = self.op;
        let zero = |reg: Reg, field: &'static str| {
            if reg == Reg::ZERO {
                Ok(())
            } else {
                Err(IsaError::UnusedField { op, field })
            }
        };
        let imm_in = |lo: i32, hi: i32, bits: u32| {
            if (lo..=hi).contains(&self.imm) {
                Ok(())
            } else {
                Err(IsaError::ImmediateOutOfRange { op, imm: self.imm, bits })
            }
        };
        let no_imm = || {
            if self.imm == 0 {
                Ok(())
            } else {
                Err(IsaError::UnusedField { op, field: "imm" })
            }
        };
        match op.format() {
            Format::R => no_imm(),
            Format::Unary => {
                zero(self.rd, "rd")?;
                zero(self.rs2, "rs2")?;
                no_imm()
            }
            Format::I => {
                zero(self.rs2, "rs2")?;
                imm_in(IMM16_MIN, IMM16_MAX, 16)
            }
            Format::U => {
                zero(self.rs1, "rs1")?;
                zero(self.rs2, "rs2")?;
                imm_in(IMM16_MIN, IMM16_MAX, 16)
            }
            Format::B => {
                zero(self.rd, "rd")?;
                imm_in(IMM16_MIN, IMM16_MAX, 16)
            }
            Format::J => {
                zero(self.rs1, "rs1")?;
                zero(self.rs2, "rs2")?;
                imm_in(IMM20_MIN, IMM20_MAX, 20)
            }
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.op;
        match op.format() {
            Format::R => write!(f, "{op} {}, {}, {}", self.rd, self.rs1, self.rs2),
            Format::Unary => write!(f, "{op} {}", self.rs1),
            Format::U => write!(f, "{op} {}, {}", self.rd, self.imm),
            Format::J => write!(f, "{op} {}, {}", self.rd, self.imm),
            Format::I if op == Opcode::Lw => write!(f, "lw {}, {}({})", self.rd, self.imm, self.rs1),
            Format::I => write!(f, "{op} {}, {}, {}", self.rd, self.rs1, self.imm),
            Format::B if op == Opcode::Sw => write!(f, "sw {}, {}({})", self.rs2, self.imm, self.rs1),
            Format::B => write!(f, "{op} {}, {}, {}", self.rs1, self.rs2, self.imm),
        }
    }
}

pub fn encode(instr: &Instruction) -> Result<u32, IsaError> {
    instr.check()?;
    let op = (instr.op as u32) << 24;
    let (rd, rs1, rs2) = (instr.rd.0 as u32, instr.rs1.0 as u32, instr.rs2.0 as u32);
    let imm16 = (instr.imm as u32) & 0xFFFF;
    Ok(match instr.op.format() {
        Format::R | Format::Unary => op | rd << 20 | rs1 << 16 | rs2 << 12,
        Format::I | Format::U => op | rd << 20 | rs1 << 16 | imm16,
        Format::B => op | rs1 << 20 | rs2 << 16 | imm16,
        Format::J => op | rd << 20 | ((instr.imm as u32) & 0xF_FFFF),
    })
}

pub fn decode(word: u32) -> Result<Instruction, IsaError> {
    let illegal = IsaError::Illegal(word);
    let op = Opcode::from_byte((word >> 24) as u8).ok_or_else(|| illegal.clone())?;
    let reg = |shift: u32| Reg::new(((word >> shift) & 0xF) as u8);
    let imm16 = (word & 0xFFFF) as u16 as i16 as i32;
    let instr = match op.format() {
        Format::R | Format::Unary => {
            if word & 0xFFF != 0 {
                return Err(illegal);
            }
            Instruction::raw(op, reg(20).map_err(|_| illegal.clone())?, reg(16).map_err(|_| illegal.clone())?, reg(12).map_err(|_| illegal.clone())?, 0)
        }
        Format::I | Format::U => Instruction::raw(
            op,
            reg(20).map_err(|_| illegal.clone())?,
            reg(16).map_err(|_| illegal.clone())?,
            Reg::ZERO,
            imm16,
        ),
        Format::B => Instruction::raw(
            op,
            Reg::ZERO,
            reg(20).map_err(|_| illegal.clone())?,
            reg(16).map_err(|_| illegal.clone())?,
            imm16,
        ),
        Format::J => {
            let imm = ((word & 0xF_FFFF) << 12) as i32 >> 12;
            Instruction::raw(op, reg(20).map_err(|_| illegal.clone())?, Reg::ZERO, Reg::ZERO, imm)
        }
    };
    instr.check().map_err(|_| illegal)?;
    Ok(instr)
}

/// Immutable guest program: code words plus entry point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuestImage {
    code: Vec<u32>,
    entry_pc: u32,
    format_version: u8,
}

impl GuestImage {
    pub fn new(code: Vec<u32>, entry_pc: u32) -> Result<Self, ImageError> {
        Self::with_version(code, entry_pc, IMAGE_FORMAT_VERSION)
    }

    pub fn with_version(code: Vec<u32>, entry_pc: u32, format_version: u8) -> Result<Self, ImageError> {
        if code.is_empty() {
            return Err(ImageError::Empty);
        }
        if code.len() > MAX_CODE_WORDS {
            return Err(ImageError::TooLarge(code.len()));
        }
        if entry_pc as usize >= code.len() {
            return Err(ImageError::BadEntry {
                entry: entry_pc,
                len: code.len(),
            });
        }
        Ok(GuestImage {
            code,
            entry_pc,
            format_version,
        })
    }

    /// Assembles an image from decoded instructions.
    pub fn from_instructions(instrs: &[Instruction], entry_pc: u32) -> Result<Self, ImageError> {
        let code = instrs
            .iter()
            .map(|i| encode(i).expect("well-formed instruction"))
            .collect();
        Self::new(code, entry_pc)
    }

    pub fn code(&self) -> &[u32] {
        &self.code
    }

    pub fn entry_pc(&self) -> u32 {
        self.entry_pc
    }

    pub fn format_version(&self) -> u8 {
        self.format_version
    }

    pub fn fetch(&self, pc: u32) -> Option<u32> {
        self.code.get(pc as usize).copied()
    }

    /// Returns a copy with one code word replaced.
    pub fn with_word(&self, index: usize, word: u32) -> GuestImage {
        let mut copy = self.clone();
        copy.code[index] = word;
        copy
    }

    /// Serializes to the `ZKPI` file format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + 4 * self.code.len());
        out.extend_from_slice(IMAGE_MAGIC);
        out.extend_from_slice(&(self.format_version as u16).to_le_bytes());
        out.extend_from_slice(&self.entry_pc.to_le_bytes());
        out.extend_from_slice(&(self.code.len() as u32).to_le_bytes());
        for w in &self.code {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.len() < 14 {
            return Err(ImageError::Truncated);
        }
        if &bytes[..4] != IMAGE_MAGIC {
            return Err(ImageError::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != IMAGE_FORMAT_VERSION as u16 {
            return Err(ImageError::UnsupportedVersion(version));
        }
        let entry = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let len = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let body = &bytes[14..];
        if body.len() as u64 != len as u64 * 4 {
            return Err(ImageError::LengthMismatch {
                declared: len,
                actual: body.len(),
            });
        }
        let code = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::with_version(code, entry, version as u8)
    }
}

/// The compiler's cryptographic identity.
pub fn compute_image_id(image: &GuestImage) -> Digest {
    let mut bytes = Vec::with_capacity(10 + 4 * image.code.len());
    bytes.push(IMAGE_PREFIX);
    bytes.push(image.format_version);
    bytes.extend_from_slice(&image.entry_pc.to_le_bytes());
    bytes.extend_from_slice(&(image.code.len() as u32).to_le_bytes());
    for w in &image.code {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    sha256(&bytes)
}

/// Word-addressed data memory.
#[derive(Clone, PartialEq, Eq)]
pub struct Memory(Box<[u32]>);

impl Memory {
    pub fn zeroed() -> Self {
        Memory(vec![0u32; MEMORY_WORDS].into_boxed_slice())
    }

    pub fn get(&self, address: u32) -> Option<u32> {
        self.0.get(address as usize).copied()
    }

    pub fn set(&mut self, address: u32, value: u32) -> Option<u32> {
        let slot = self.0.get_mut(address as usize)?;
        Some(std::mem::replace(slot, value))
    }

    /// Populated (non-zero) words in address order.
    pub fn nonzero(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(a, &v)| (a as u32, v))
    }
}

impl fmt::Debug for Memory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.nonzero()).finish()
    }
}

/// Non-zero words of the initial memory for `input`, in address order.
pub fn input_words(input: &[u8]) -> Result<Vec<(u32, u32)>, CapacityError> {
    if input.len() > MAX_INPUT_LEN {
        return Err(CapacityError(input.len()));
    }
    let mut words = Vec::with_capacity(input.len() + 1);
    if !input.is_empty() {
        words.push((INPUT_LEN_ADDR, input.len() as u32));
    }
    words.extend(
        input
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, &b)| (INPUT_BASE + i as u32, b as u32)),
    );
    Ok(words)
}

/// Initial data memory: input length at word 0, one input byte per word
/// from [`INPUT_BASE`]. The image is not placed in data memory.
pub fn init_memory(_image: &GuestImage, input: &[u8]) -> Result<Memory, CapacityError> {
    let mut mem = Memory::zeroed();
    for (a, v) in input_words(input)? {
        mem.set(a, v);
    }
    Ok(mem)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemOpKind {
    #[default]
    None,
    Load,
    Store,
}

/// The (at most one) data-memory access performed by a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemOp {
    pub kind: MemOpKind,
    pub address: u32,
    pub old_value: u32,
    pub new_value: u32,
}

/// Data memory as seen by the instruction semantics. The VM backs this with
/// full memory, the verifier with a single Merkle-authenticated word.
pub trait DataMemory {
    fn load(&mut self, address: u32) -> Option<u32>;
    /// Stores `value`, returning the previous word.
    fn store(&mut self, address: u32, value: u32) -> Option<u32>;
}

impl DataMemory for Memory {
    fn load(&mut self, address: u32) -> Option<u32> {
        self.get(address)
    }

    fn store(&mut self, address: u32, value: u32) -> Option<u32> {
        self.set(address, value)
    }
}

/// Architectural result of one instruction, before it is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Effect {
    pub next_pc: u32,
    pub memop: MemOp,
    pub written: Option<u8>,
    pub halt: Option<u32>,
}

/// Instruction semantics shared by the VM and the transition checker.
/// Updates `regs` in place; register 0 stays zero.
pub fn execute<M: DataMemory>(
    instr: &Instruction,
    pc: u32,
    regs: &mut [u32; NUM_REGS],
    mem: &mut M,
) -> Result<Effect, Trap> {
    use Opcode::*;
    let a = regs[instr.rs1.index()];
    let b = regs[instr.rs2.index()];
    let imm = instr.imm as u32;
    let fall = pc.wrapping_add(1);
    let rel = fall.wrapping_add(imm);
    let mut effect = Effect {
        next_pc: fall,
        memop: MemOp::default(),
        written: None,
        halt: None,
    };
    let mut rd_value = None;
    match instr.op {
        Halt => {
            effect.next_pc = pc;
            effect.halt = Some(a);
        }
        Add => rd_value = Some(a.wrapping_add(b)),
        Sub => rd_value = Some(a.wrapping_sub(b)),
        Mul => rd_value = Some(a.wrapping_mul(b)),
        Divu | Remu => {
            if b == 0 {
                return Err(Trap::DivideByZero { pc });
            }
            rd_value = Some(if instr.op == Divu { a / b } else { a % b });
        }
        And => rd_value = Some(a & b),
        Or => rd_value = Some(a | b),
        Xor => rd_value = Some(a ^ b),
        Sll => rd_value = Some(a << (b & 31)),
        Srl => rd_value = Some(a >> (b & 31)),
        Sra => rd_value = Some(((a as i32) >> (b & 31)) as u32),
        Slt => rd_value = Some(((a as i32) < (b as i32)) as u32),
        Sltu => rd_value = Some((a < b) as u32),
        Addi => rd_value = Some(a.wrapping_add(imm)),
        Lui => rd_value = Some(imm << 16),
        Lw => {
            let address = a.wrapping_add(imm);
            let value = mem
                .load(address)
                .ok_or(Trap::MemoryOutOfRange { pc, address })?;
            effect.memop = MemOp {
                kind: MemOpKind::Load,
                address,
                old_value: value,
                new_value: value,
            };
            rd_value = Some(value);
        }
        Sw => {
            let address = a.wrapping_add(imm);
            let old = mem
                .store(address, b)
                .ok_or(Trap::MemoryOutOfRange { pc, address })?;
            effect.memop = MemOp {
                kind: MemOpKind::Store,
                address,
                old_value: old,
                new_value: b,
            };
        }
        Beq | Bne | Blt | Bltu => {
            let taken = match instr.op {
                Beq => a == b,
                Bne => a != b,
                Blt => (a as i32) < (b as i32),
                _ => a < b,
            };
            if taken {
                effect.next_pc = rel;
            }
        }
        Jal => {
            rd_value = Some(fall);
            effect.next_pc = rel;
        }
        Jalr => {
            effect.next_pc = a.wrapping_add(imm);
            rd_value = Some(fall);
        }
        Write => effect.written = Some(a as u8),
    }
    if let Some(v) = rd_value {
        if instr.rd != Reg::ZERO {
            regs[instr.rd.index()] = v;
        }
    }
    Ok(effect)
}

/// Full machine state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub pc: u32,
    pub regs: [u32; NUM_REGS],
    pub memory: Memory,
    pub out_acc: Digest,
    pub halted: bool,
    pub exit_code: u32,
    pub step_count: u64,
}

impl MachineState {
    pub fn boot(image: &GuestImage, input: &[u8]) -> Result<Self, CapacityError> {
        Ok(MachineState {
            pc: image.entry_pc(),
            regs: [0; NUM_REGS],
            memory: init_memory(image, input)?,
            out_acc: chain_init(),
            halted: false,
            exit_code: 0,
            step_count: 0,
        })
    }
}

/// Observable result of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub memop: MemOp,
    pub written: Option<u8>,
}

/// Fetches the instruction at `pc`, trapping when outside code or illegal.
pub fn fetch(image: &GuestImage, pc: u32) -> Result<Instruction, Trap> {
    let word = image.fetch(pc).ok_or(Trap::PcOutOfRange { pc })?;
    decode(word).map_err(|_| Trap::IllegalInstruction { pc, word })
}

/// Executes exactly one instruction. On a trap the state is left untouched.
pub fn step(state: &mut MachineState, image: &GuestImage) -> Result<StepOutcome, Trap> {
    if state.halted {
        return Err(Trap::Halted);
    }
    let instr = fetch(image, state.pc)?;
    let mut regs = state.regs;
    let effect = execute(&instr, state.pc, &mut regs, &mut state.memory)?;
    state.regs = regs;
    state.pc = effect.next_pc;
    if let Some(byte) = effect.written {
        state.out_acc = chain_extend(&state.out_acc, byte);
    }
    if let Some(code) = effect.halt {
        state.halted = true;
        state.exit_code = code;
    }
    state.step_count += 1;
    Ok(StepOutcome {
        memop: effect.memop,
        written: effect.written,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionResult {
    pub output: Vec<u8>,
    pub exit_code: u32,
    pub step_count: u64,
    pub trap: Option<Trap>,
}

impl ExecutionResult {
    pub fn is_clean(&self) -> bool {
        self.trap.is_none() && self.exit_code == 0
    }
}

/// Runs until HALT, a trap, or `max_steps` steps.
pub fn run(image: &GuestImage, input: &[u8], max_steps: u64) -> Result<ExecutionResult, CapacityError> {
    let mut state = MachineState::boot(image, input)?;
    let mut output = Vec::new();
    let trap = run_state(&mut state, image, max_steps, |outcome| {
        output.extend(outcome.written);
    });
    Ok(ExecutionResult {
        output,
        exit_code: state.exit_code,
        step_count: state.step_count,
        trap,
    })
}

/// Steps `state` to completion, reporting each step's outcome. Returns the
/// trap, if any.
pub(crate) fn run_state<F>(state: &mut MachineState, image: &GuestImage, max_steps: u64, mut observe: F) -> Option<Trap>
where
    F: FnMut(&StepOutcome),
{
    while !state.halted {
        if state.step_count >= max_steps {
            return Some(Trap::StepBudgetExhausted(max_steps));
        }
        match step(state, image) {
            Ok(outcome) => observe(&outcome),
            Err(trap) => return Some(trap),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commit::chain;
    use proptest::prelude::*;

    #[test]
    fn known_encodings() {
        let add = Instruction::rtype(Opcode::Add, r(1), r(2), r(3));
        assert_eq!(encode(&add).unwrap(), 0x0112_3000);
        assert_eq!(decode(0).unwrap(), Instruction::halt(Reg::ZERO));
        assert_eq!(decode(0x0112_3000).unwrap(), add);
    }

    #[test]
    fn encode_rejects_bad_fields() {
        assert_eq!(Reg::new(8), Err(IsaError::BadRegister(8)));
        let big = Instruction::addi(r(1), r(0), 40000);
        assert!(matches!(encode(&big), Err(IsaError::ImmediateOutOfRange { bits: 16, .. })));
        let far = Instruction::jal(r(0), 1 << 19);
        assert!(matches!(encode(&far), Err(IsaError::ImmediateOutOfRange { bits: 20, .. })));
        assert!(encode(&Instruction::jal(r(0), -(1 << 19))).is_ok());
    }

    #[test]
    fn decode_rejects_unknown_and_junk() {
        assert_eq!(decode(0xFF00_0000), Err(IsaError::Illegal(0xFF00_0000)));
        // register field 8
        assert!(decode(0x0180_0000).is_err());
        // junk in the unused low bits of an R-format word
        assert!(decode(0x0112_3001).is_err());
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        (0..Opcode::ALL.len(), 0u8..8, 0u8..8, 0u8..8, any::<i32>()).prop_map(|(o, a, b, c, imm)| {
            let op = Opcode::ALL[o];
            let i16v = imm as i16 as i32;
            match op.format() {
                Format::R => Instruction::rtype(op, r(a), r(b), r(c)),
                Format::Unary if op == Opcode::Halt => Instruction::halt(r(b)),
                Format::Unary => Instruction::write(r(b)),
                Format::I => Instruction::itype(op, r(a), r(b), i16v),
                Format::U => Instruction::lui(r(a), i16v),
                Format::B => Instruction::btype(op, r(b), r(c), i16v),
                Format::J => Instruction::jal(r(a), (imm << 12) >> 12),
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1 << 16))]
        #[test]
        fn decode_inverts_encode(i in arb_instruction()) {
            let word = encode(&i).unwrap();
            prop_assert_eq!(decode(word).unwrap(), i);
        }
    }

    proptest! {
        #[test]
        fn decode_then_encode_is_identity(word in any::<u32>()) {
            if let Ok(i) = decode(word) {
                prop_assert_eq!(encode(&i).unwrap(), word);
            }
        }
    }

    fn image(instrs: &[Instruction]) -> GuestImage {
        GuestImage::from_instructions(instrs, 0).unwrap()
    }

    #[test]
    fn init_memory_layout() {
        let img = image(&[Instruction::halt(r(0))]);
        let mem = init_memory(&img, b"").unwrap();
        assert_eq!(mem.nonzero().count(), 0);
        let mem = init_memory(&img, b"A").unwrap();
        assert_eq!(mem.get(0), Some(1));
        assert_eq!(mem.get(0x100), Some(65));
        assert_eq!(mem.nonzero().count(), 2);
        assert_eq!(
            init_memory(&img, &vec![1u8; MAX_INPUT_LEN + 1]).unwrap_err(),
            CapacityError(MAX_INPUT_LEN + 1)
        );
        assert!(init_memory(&img, &vec![1u8; MAX_INPUT_LEN]).is_ok());
    }

    #[test]
    fn addi_from_zero_state() {
        let img = image(&[Instruction::addi(r(1), r(0), 5), Instruction::halt(r(0))]);
        let mut s = MachineState::boot(&img, b"").unwrap();
        let out = step(&mut s, &img).unwrap();
        assert_eq!(s.regs[1], 5);
        assert_eq!(s.pc, 1);
        assert_eq!(out.memop.kind, MemOpKind::None);
    }

    #[test]
    fn register_zero_discards_writes() {
        let img = image(&[Instruction::addi(r(0), r(0), 9), Instruction::halt(r(0))]);
        let mut s = MachineState::boot(&img, b"").unwrap();
        step(&mut s, &img).unwrap();
        assert_eq!(s.regs[0], 0);
    }

    #[test]
    fn traps() {
        let div = image(&[Instruction::addi(r(1), r(0), 3), Instruction::rtype(Opcode::Divu, r(2), r(1), r(0))]);
        assert_eq!(run(&div, b"", 100).unwrap().trap, Some(Trap::DivideByZero { pc: 1 }));

        let oob = image(&[Instruction::lui(r(1), 1), Instruction::itype(Opcode::Lw, r(2), r(1), 0)]);
        assert_eq!(
            run(&oob, b"", 100).unwrap().trap,
            Some(Trap::MemoryOutOfRange { pc: 1, address: 0x10000 })
        );

        let fall_off = image(&[Instruction::addi(r(1), r(0), 1)]);
        assert_eq!(run(&fall_off, b"", 100).unwrap().trap, Some(Trap::PcOutOfRange { pc: 1 }));

        let illegal = GuestImage::new(vec![0xFE00_0000], 0).unwrap();
        assert_eq!(
            run(&illegal, b"", 100).unwrap().trap,
            Some(Trap::IllegalInstruction { pc: 0, word: 0xFE00_0000 })
        );

        let spin = image(&[Instruction::jal(r(0), -1)]);
        let res = run(&spin, b"", 50).unwrap();
        assert_eq!(res.trap, Some(Trap::StepBudgetExhausted(50)));
        assert_eq!(res.step_count, 50);
    }

    #[test]
    fn halt_and_write_programs() {
        let res = run(&image(&[Instruction::halt(r(0))]), b"anything", 10).unwrap();
        assert_eq!((res.output.as_slice(), res.exit_code, res.step_count), (&b""[..], 0, 1));
        assert!(res.is_clean());

        let h = image(&[Instruction::addi(r(1), r(0), 72), Instruction::write(r(1)), Instruction::halt(r(0))]);
        let res = run(&h, b"", 10).unwrap();
        assert_eq!(res.output, b"H");
        assert_eq!(res.exit_code, 0);
        assert_eq!(res.step_count, 3);
    }

    #[test]
    fn branches_are_relative_to_next_pc() {
        // 0: addi r1,r0,3 ; 1: addi r1,r1,-1 ; 2: write r1 ; 3: bne r1,r0,-3 ; 4: halt
        let img = image(&[
            Instruction::addi(r(1), r(0), 3),
            Instruction::addi(r(1), r(1), -1),
            Instruction::write(r(1)),
            Instruction::btype(Opcode::Bne, r(1), r(0), -3),
            Instruction::halt(r(0)),
        ]);
        let res = run(&img, b"", 100).unwrap();
        assert_eq!(res.output, vec![2, 1, 0]);
    }

    #[test]
    fn out_acc_tracks_output_chain() {
        let img = image(&[
            Instruction::itype(Opcode::Lw, r(1), r(0), INPUT_BASE as i32),
            Instruction::write(r(1)),
            Instruction::itype(Opcode::Lw, r(1), r(0), INPUT_BASE as i32 + 1),
            Instruction::write(r(1)),
            Instruction::halt(r(0)),
        ]);
        let mut s = MachineState::boot(&img, b"ok").unwrap();
        let mut out = Vec::new();
        assert_eq!(run_state(&mut s, &img, 100, |o| out.extend(o.written)), None);
        assert_eq!(out, b"ok");
        assert_eq!(s.out_acc, chain(b"ok"));
    }

    proptest! {
        #[test]
        fn stores_and_loads_agree_with_a_map(ops in proptest::collection::vec((any::<bool>(), 0u16..64, any::<i16>()), 1..60)) {
            let mut prog = Vec::new();
            let mut oracle = std::collections::HashMap::new();
            let mut expected = Vec::new();
            for (is_store, addr, val) in &ops {
                if *is_store {
                    prog.push(Instruction::addi(r(2), r(0), *val as i32));
                    prog.push(Instruction::btype(Opcode::Sw, r(0), r(2), *addr as i32));
                    oracle.insert(*addr, *val as i32 as u32);
                } else {
                    prog.push(Instruction::itype(Opcode::Lw, r(3), r(0), *addr as i32));
                    prog.push(Instruction::write(r(3)));
                    expected.push(*oracle.get(addr).unwrap_or(&0) as u8);
                }
            }
            prog.push(Instruction::halt(r(0)));
            let res = run(&image(&prog), b"", 10_000).unwrap();
            prop_assert!(res.trap.is_none());
            prop_assert_eq!(res.output, expected);
        }
    }

    #[test]
    fn image_file_round_trip_and_errors() {
        let img = image(&[Instruction::addi(r(1), r(0), 1), Instruction::halt(r(1))]);
        let bytes = img.to_bytes();
        assert_eq!(GuestImage::from_bytes(&bytes).unwrap(), img);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(GuestImage::from_bytes(&bad), Err(ImageError::BadMagic));
        assert_eq!(GuestImage::from_bytes(&bytes[..10]), Err(ImageError::Truncated));
        assert!(matches!(
            GuestImage::from_bytes(&bytes[..bytes.len() - 1]),
            Err(ImageError::LengthMismatch { .. })
        ));
        assert!(matches!(GuestImage::new(vec![0], 1), Err(ImageError::BadEntry { .. })));
    }

    #[test]
    fn image_id_sensitivity() {
        let img = image(&[Instruction::halt(r(0))]);
        let id = compute_image_id(&img);
        assert_eq!(id, compute_image_id(&GuestImage::from_bytes(&img.to_bytes()).unwrap()));
        assert_ne!(id, compute_image_id(&img.with_word(0, 1)));
    }
}
