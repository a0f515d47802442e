//! The toy register ISA that mutated corpus programs are written in.
//!
//! Eight 32-bit registers, 256 memory slots, a value stack, and zero/sign
//! flags. Programs are ordered lists of labeled blocks; control enters at the
//! `entry` label and falls through block boundaries unless an explicit jump
//! intervenes. Immediates are stored as 32-bit values but must survive the
//! 24-bit sign-extended instruction encoding (see `encode`), so their
//! effective range is −2²³ … 2²³−1.

use std::fmt;

use thiserror::Error;

pub const REG_COUNT: usize = 8;

/// One of R0–R7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Reg(u8);

impl Reg {
    pub fn new(index: u8) -> Self {
        assert!((index as usize) < REG_COUNT, "register index out of range");
        Reg(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Reg(Reg),
    /// 32-bit immediate; must be representable as sign-extended 24 bits.
    Imm(u32),
    /// Memory slot index 0–255.
    Mem(u8),
    /// Block label, for jumps.
    Label(String),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write!(f, "#{}", *v as i32),
            Operand::Mem(s) => write!(f, "[{s}]"),
            Operand::Label(l) => write!(f, "{l}"),
        }
    }
}

/// Condition codes over the zero/sign flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cond {
    Z,
    Nz,
    S,
    Ns,
}

impl Cond {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Cond::Z => "JZ",
            Cond::Nz => "JNZ",
            Cond::S => "JS",
            Cond::Ns => "JNS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Mov,
    Add,
    Sub,
    Xor,
    And,
    Or,
    Not,
    Neg,
    Push,
    Pop,
    Nop,
    Shl,
    Lea,
    Cmp,
    Test,
    Jmp,
    Jcc,
    Halt,
}

impl Op {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Op::Mov => "MOV",
            Op::Add => "ADD",
            Op::Sub => "SUB",
            Op::Xor => "XOR",
            Op::And => "AND",
            Op::Or => "OR",
            Op::Not => "NOT",
            Op::Neg => "NEG",
            Op::Push => "PUSH",
            Op::Pop => "POP",
            Op::Nop => "NOP",
            Op::Shl => "SHL",
            Op::Lea => "LEA",
            Op::Cmp => "CMP",
            Op::Test => "TEST",
            Op::Jmp => "JMP",
            Op::Jcc => "JCC",
            Op::Halt => "HALT",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsaError {
    #[error("{op:?}: illegal operand shape")]
    IllegalOperands { op: Op },
    #[error("immediate {0:#x} does not fit the sign-extended 24-bit encoding")]
    ImmOutOfRange(u32),
    #[error("duplicate block label {0:?}")]
    DuplicateLabel(String),
    #[error("entry label {0:?} does not exist")]
    MissingEntry(String),
    #[error("jump target {0:?} does not exist")]
    MissingTarget(String),
    #[error("final block may fall through the end of the program")]
    FallsOffEnd,
}

/// Does a 32-bit value survive truncation to 24 bits plus sign extension?
pub fn imm_encodable(value: u32) -> bool {
    sign_extend_24(value & 0x00ff_ffff) == value
}

pub fn sign_extend_24(low: u32) -> u32 {
    if low & 0x0080_0000 != 0 {
        low | 0xff00_0000
    } else {
        low
    }
}

/// One instruction: opcode plus up to two operands and an optional condition
/// code. Single-operand instructions keep their operand in `dst` even when it
/// is only read (PUSH, JMP).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instr {
    pub op: Op,
    pub dst: Option<Operand>,
    pub src: Option<Operand>,
    pub cc: Option<Cond>,
}

impl Instr {
    fn new(op: Op, dst: Option<Operand>, src: Option<Operand>, cc: Option<Cond>) -> Self {
        Instr { op, dst, src, cc }
    }

    pub fn mov(dst: Operand, src: Operand) -> Self {
        Self::new(Op::Mov, Some(dst), Some(src), None)
    }

    pub fn binary(op: Op, dst: Reg, src: Operand) -> Self {
        Self::new(op, Some(Operand::Reg(dst)), Some(src), None)
    }

    pub fn add(dst: Reg, src: Operand) -> Self {
        Self::binary(Op::Add, dst, src)
    }

    pub fn sub(dst: Reg, src: Operand) -> Self {
        Self::binary(Op::Sub, dst, src)
    }

    pub fn xor(dst: Reg, src: Operand) -> Self {
        Self::binary(Op::Xor, dst, src)
    }

    pub fn and(dst: Reg, src: Operand) -> Self {
        Self::binary(Op::And, dst, src)
    }

    pub fn or(dst: Reg, src: Operand) -> Self {
        Self::binary(Op::Or, dst, src)
    }

    pub fn shl(dst: Reg, src: Operand) -> Self {
        Self::binary(Op::Shl, dst, src)
    }

    pub fn lea(dst: Reg, src: Operand) -> Self {
        Self::new(Op::Lea, Some(Operand::Reg(dst)), Some(src), None)
    }

    pub fn not(dst: Reg) -> Self {
        Self::new(Op::Not, Some(Operand::Reg(dst)), None, None)
    }

    pub fn neg(dst: Reg) -> Self {
        Self::new(Op::Neg, Some(Operand::Reg(dst)), None, None)
    }

    pub fn push(operand: Operand) -> Self {
        Self::new(Op::Push, Some(operand), None, None)
    }

    pub fn pop(dst: Reg) -> Self {
        Self::new(Op::Pop, Some(Operand::Reg(dst)), None, None)
    }

    pub fn nop() -> Self {
        Self::new(Op::Nop, None, None, None)
    }

    pub fn cmp(a: Reg, b: Operand) -> Self {
        Self::new(Op::Cmp, Some(Operand::Reg(a)), Some(b), None)
    }

    pub fn test(a: Reg, b: Operand) -> Self {
        Self::new(Op::Test, Some(Operand::Reg(a)), Some(b), None)
    }

    pub fn jmp(target: impl Into<String>) -> Self {
        Self::new(Op::Jmp, Some(Operand::Label(target.into())), None, None)
    }

    pub fn jcc(cc: Cond, target: impl Into<String>) -> Self {
        Self::new(Op::Jcc, Some(Operand::Label(target.into())), None, Some(cc))
    }

    pub fn halt() -> Self {
        Self::new(Op::Halt, None, None, None)
    }

    /// Ends a block with no fall-through path.
    pub fn is_block_end(&self) -> bool {
        matches!(self.op, Op::Jmp | Op::Halt)
    }

    pub fn is_control(&self) -> bool {
        matches!(self.op, Op::Jmp | Op::Jcc | Op::Halt)
    }

    /// Per-opcode operand legality. Immediates are never written, jump
    /// targets are labels, and every immediate must fit the encoding.
    pub fn validate(&self) -> Result<(), IsaError> {
        use Operand::*;
        let bad = || IsaError::IllegalOperands { op: self.op };
        let reg_dst = |o: &Option<Operand>| matches!(o, Some(Reg(_)));
        let value_src = |o: &Option<Operand>| matches!(o, Some(Reg(_) | Imm(_) | Mem(_)));

        match self.op {
            Op::Mov => {
                // No memory-to-memory form.
                let dst_ok = matches!(self.dst, Some(Reg(_) | Mem(_)));
                let src_ok = value_src(&self.src);
                let mem_to_mem =
                    matches!(self.dst, Some(Mem(_))) && matches!(self.src, Some(Mem(_)));
                if !dst_ok || !src_ok || mem_to_mem || self.cc.is_some() {
                    return Err(bad());
                }
            }
            Op::Add | Op::Sub | Op::Xor | Op::And | Op::Or | Op::Shl | Op::Cmp | Op::Test => {
                if !reg_dst(&self.dst) || !value_src(&self.src) || self.cc.is_some() {
                    return Err(bad());
                }
            }
            Op::Lea => {
                if !reg_dst(&self.dst)
                    || !matches!(self.src, Some(Imm(_) | Mem(_)))
                    || self.cc.is_some()
                {
                    return Err(bad());
                }
            }
            Op::Not | Op::Neg | Op::Pop => {
                if !reg_dst(&self.dst) || self.src.is_some() || self.cc.is_some() {
                    return Err(bad());
                }
            }
            Op::Push => {
                if !matches!(self.dst, Some(Reg(_) | Imm(_))) || self.src.is_some() || self.cc.is_some()
                {
                    return Err(bad());
                }
            }
            Op::Nop | Op::Halt => {
                if self.dst.is_some() || self.src.is_some() || self.cc.is_some() {
                    return Err(bad());
                }
            }
            Op::Jmp => {
                if !matches!(self.dst, Some(Label(_))) || self.src.is_some() || self.cc.is_some() {
                    return Err(bad());
                }
            }
            Op::Jcc => {
                if !matches!(self.dst, Some(Label(_))) || self.src.is_some() || self.cc.is_none() {
                    return Err(bad());
                }
            }
        }

        for operand in [&self.dst, &self.src].into_iter().flatten() {
            if let Imm(v) = operand {
                if !imm_encodable(*v) {
                    return Err(IsaError::ImmOutOfRange(*v));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            Op::Jcc => write!(
                f,
                "{} {}",
                self.cc.map(Cond::mnemonic).unwrap_or("JCC?"),
                self.dst.as_ref().unwrap()
            ),
            _ => {
                write!(f, "{}", self.op.mnemonic())?;
                if let Some(dst) = &self.dst {
                    write!(f, " {dst}")?;
                }
                if let Some(src) = &self.src {
                    write!(f, ", {src}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    pub instrs: Vec<Instr>,
}

impl Block {
    pub fn new(label: impl Into<String>, instrs: Vec<Instr>) -> Self {
        Block { label: label.into(), instrs }
    }
}

/// An ordered list of labeled blocks plus the entry label. Execution starts
/// at `entry` wherever that block sits; a block whose last instruction is not
/// JMP or HALT falls through to the next block in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyProgram {
    pub blocks: Vec<Block>,
    pub entry: String,
}

impl ToyProgram {
    /// Single-block program entered at `entry`.
    pub fn straight_line(instrs: Vec<Instr>) -> Self {
        ToyProgram { blocks: vec![Block::new("entry", instrs)], entry: "entry".into() }
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instrs.len()).sum()
    }

    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    /// Structural validity: unique labels, existing entry and jump targets,
    /// legal operands, and a final block that cannot run off the end.
    pub fn validate(&self) -> Result<(), IsaError> {
        let mut labels = std::collections::HashSet::new();
        for block in &self.blocks {
            if !labels.insert(block.label.as_str()) {
                return Err(IsaError::DuplicateLabel(block.label.clone()));
            }
        }
        if !labels.contains(self.entry.as_str()) {
            return Err(IsaError::MissingEntry(self.entry.clone()));
        }
        for block in &self.blocks {
            for instr in &block.instrs {
                instr.validate()?;
                if let Some(Operand::Label(target)) = &instr.dst {
                    if !labels.contains(target.as_str()) {
                        return Err(IsaError::MissingTarget(target.clone()));
                    }
                }
            }
        }
        match self.blocks.last().and_then(|b| b.instrs.last()) {
            Some(last) if last.is_block_end() => Ok(()),
            _ => Err(IsaError::FallsOffEnd),
        }
    }

    /// Flattened instruction view with each block's starting flat index.
    pub fn flatten(&self) -> (Vec<&Instr>, std::collections::BTreeMap<&str, usize>) {
        let mut flat = Vec::with_capacity(self.instruction_count());
        let mut starts = std::collections::BTreeMap::new();
        for block in &self.blocks {
            starts.insert(block.label.as_str(), flat.len());
            flat.extend(block.instrs.iter());
        }
        (flat, starts)
    }
}

impl fmt::Display for ToyProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for block in &self.blocks {
            writeln!(f, "{}:", block.label)?;
            for instr in &block.instrs {
                writeln!(f, "    {instr}")?;
            }
        }
        Ok(())
    }
}
