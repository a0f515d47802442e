//! Fixed-width binary encoding of toy programs.
//!
//! Every instruction is exactly 6 bytes:
//!
//! ```text
//! byte 0   opcode (1-based, see OP_CODES)
//! byte 1   operand kinds, dst kind in the high nibble, src kind in the low
//!          (0 none, 1 register, 2 immediate, 3 memory slot, 4 label)
//! byte 2   dst register index / memory slot; condition code for JCC
//! byte 3-5 little-endian 24-bit payload: src register index or slot,
//!          sign-extended immediate, or the target block's byte offset
//! ```
//!
//! A dst immediate (PUSH #imm) or label (JMP/JCC) also lives in the payload
//! field; no instruction has both a payload-carrying dst and a src. Labels
//! resolve to the byte offset of the target block's first instruction. The
//! entry label is not encoded; disassembly assumes entry at offset zero.

use thiserror::Error;

use super::isa::{sign_extend_24, Block, Cond, Instr, Op, Operand, Reg, ToyProgram};

pub const INSTR_BYTES: usize = 6;

const KIND_NONE: u8 = 0;
const KIND_REG: u8 = 1;
const KIND_IMM: u8 = 2;
const KIND_MEM: u8 = 3;
const KIND_LABEL: u8 = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssembleError {
    #[error("program too large: offset or immediate exceeds 24 bits")]
    ProgramTooLarge,
    #[error("invalid instruction: {0}")]
    Invalid(#[from] super::isa::IsaError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DisassembleError {
    #[error("byte length {0} is not a multiple of the instruction width")]
    BadLength(usize),
    #[error("unknown opcode byte {0:#04x} at offset {1}")]
    BadOpcode(u8, usize),
    #[error("malformed operand encoding at offset {0}")]
    BadOperand(usize),
    #[error("jump target {0:#x} is not an instruction boundary inside the program")]
    BadTarget(u32),
}

fn op_code(op: Op) -> u8 {
    match op {
        Op::Mov => 1,
        Op::Add => 2,
        Op::Sub => 3,
        Op::Xor => 4,
        Op::And => 5,
        Op::Or => 6,
        Op::Not => 7,
        Op::Neg => 8,
        Op::Push => 9,
        Op::Pop => 10,
        Op::Nop => 11,
        Op::Shl => 12,
        Op::Lea => 13,
        Op::Cmp => 14,
        Op::Test => 15,
        Op::Jmp => 16,
        Op::Jcc => 17,
        Op::Halt => 18,
    }
}

fn op_from_code(code: u8) -> Option<Op> {
    Some(match code {
        1 => Op::Mov,
        2 => Op::Add,
        3 => Op::Sub,
        4 => Op::Xor,
        5 => Op::And,
        6 => Op::Or,
        7 => Op::Not,
        8 => Op::Neg,
        9 => Op::Push,
        10 => Op::Pop,
        11 => Op::Nop,
        12 => Op::Shl,
        13 => Op::Lea,
        14 => Op::Cmp,
        15 => Op::Test,
        16 => Op::Jmp,
        17 => Op::Jcc,
        18 => Op::Halt,
        _ => return None,
    })
}

fn cc_code(cc: Cond) -> u8 {
    match cc {
        Cond::Z => 1,
        Cond::Nz => 2,
        Cond::S => 3,
        Cond::Ns => 4,
    }
}

fn cc_from_code(code: u8) -> Option<Cond> {
    Some(match code {
        1 => Cond::Z,
        2 => Cond::Nz,
        3 => Cond::S,
        4 => Cond::Ns,
        _ => return None,
    })
}

/// Serialize a program to its fixed-width byte form. Deterministic; labels
/// become byte offsets of their blocks in emission order.
pub fn assemble(program: &ToyProgram) -> Result<Vec<u8>, AssembleError> {
    let mut offsets = std::collections::BTreeMap::new();
    let mut offset = 0usize;
    for block in &program.blocks {
        offsets.insert(block.label.as_str(), offset);
        offset += block.instrs.len() * INSTR_BYTES;
    }

    let mut out = Vec::with_capacity(offset);
    for block in &program.blocks {
        for instr in &block.instrs {
            instr.validate()?;
            let mut dst_kind = KIND_NONE;
            let mut dst_byte = 0u8;
            let mut payload = 0u32;
            let mut src_kind = KIND_NONE;

            match &instr.dst {
                None => {}
                Some(Operand::Reg(r)) => {
                    dst_kind = KIND_REG;
                    dst_byte = r.index() as u8;
                }
                Some(Operand::Mem(slot)) => {
                    dst_kind = KIND_MEM;
                    dst_byte = *slot;
                }
                Some(Operand::Imm(v)) => {
                    dst_kind = KIND_IMM;
                    payload = v & 0x00ff_ffff;
                }
                Some(Operand::Label(l)) => {
                    dst_kind = KIND_LABEL;
                    let target = offsets[l.as_str()];
                    if target > 0x00ff_ffff {
                        return Err(AssembleError::ProgramTooLarge);
                    }
                    payload = target as u32;
                }
            }
            match &instr.src {
                None => {}
                Some(Operand::Reg(r)) => {
                    src_kind = KIND_REG;
                    payload = r.index() as u32;
                }
                Some(Operand::Mem(slot)) => {
                    src_kind = KIND_MEM;
                    payload = u32::from(*slot);
                }
                Some(Operand::Imm(v)) => {
                    src_kind = KIND_IMM;
                    payload = v & 0x00ff_ffff;
                }
                Some(Operand::Label(_)) => unreachable!("labels only appear as dst"),
            }
            if let Some(cc) = instr.cc {
                dst_byte = cc_code(cc);
            }

            out.push(op_code(instr.op));
            out.push(dst_kind << 4 | src_kind);
            out.push(dst_byte);
            let p = payload.to_le_bytes();
            out.extend_from_slice(&p[..3]);
        }
    }
    Ok(out)
}

/// Rebuild a program from assembled bytes.
///
/// Blocks are re-split at every jump target (labels come back as `L<offset>`)
/// and the entry is taken to be offset zero. Used as the round-trip oracle for
/// the encoder; `assemble(disassemble(bytes))` reproduces `bytes` exactly.
pub fn disassemble(bytes: &[u8]) -> Result<ToyProgram, DisassembleError> {
    if !bytes.len().is_multiple_of(INSTR_BYTES) || bytes.is_empty() {
        return Err(DisassembleError::BadLength(bytes.len()));
    }
    let count = bytes.len() / INSTR_BYTES;

    // First pass: decode fields and collect jump targets.
    let mut raw = Vec::with_capacity(count);
    let mut targets = std::collections::BTreeSet::new();
    targets.insert(0u32);
    for i in 0..count {
        let at = i * INSTR_BYTES;
        let b = &bytes[at..at + INSTR_BYTES];
        let op = op_from_code(b[0]).ok_or(DisassembleError::BadOpcode(b[0], at))?;
        let payload = u32::from(b[3]) | u32::from(b[4]) << 8 | u32::from(b[5]) << 16;
        if matches!(op, Op::Jmp | Op::Jcc) {
            if !(payload as usize).is_multiple_of(INSTR_BYTES) || payload as usize >= bytes.len() {
                return Err(DisassembleError::BadTarget(payload));
            }
            targets.insert(payload);
        }
        raw.push((op, b[1], b[2], payload, at));
    }

    let label_of = |offset: u32| format!("L{offset}");
    let mut blocks: Vec<Block> = Vec::new();
    for (op, kinds, dst_byte, payload, at) in raw {
        if targets.contains(&(at as u32)) || blocks.is_empty() {
            blocks.push(Block::new(label_of(at as u32), Vec::new()));
        }
        let bad = || DisassembleError::BadOperand(at);
        let decode_operand = |kind: u8, byte_slot: bool| -> Result<Option<Operand>, DisassembleError> {
            Ok(match kind {
                KIND_NONE => None,
                KIND_REG => {
                    let idx = if byte_slot { dst_byte } else { payload as u8 };
                    if usize::from(idx) >= super::isa::REG_COUNT {
                        return Err(bad());
                    }
                    Some(Operand::Reg(Reg::new(idx)))
                }
                KIND_MEM => Some(Operand::Mem(if byte_slot { dst_byte } else { payload as u8 })),
                KIND_IMM => Some(Operand::Imm(sign_extend_24(payload))),
                KIND_LABEL => Some(Operand::Label(label_of(payload))),
                _ => return Err(bad()),
            })
        };
        let dst = decode_operand(kinds >> 4, true)?;
        let src = decode_operand(kinds & 0x0f, false)?;
        let cc = if op == Op::Jcc {
            Some(cc_from_code(dst_byte).ok_or_else(bad)?)
        } else {
            None
        };
        let instr = Instr { op, dst, src, cc };
        instr.validate().map_err(|_| bad())?;
        blocks.last_mut().unwrap().instrs.push(instr);
    }

    let entry = blocks[0].label.clone();
    Ok(ToyProgram { blocks, entry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation_engine::isa::Block;

    fn r(i: u8) -> Reg {
        Reg::new(i)
    }

    #[test]
    fn halt_is_six_known_bytes() {
        let p = ToyProgram::straight_line(vec![Instr::halt()]);
        assert_eq!(assemble(&p).unwrap(), vec![18, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn mov_reg_imm_encoding_is_pinned() {
        let p = ToyProgram::straight_line(vec![
            Instr::mov(Operand::Reg(r(3)), Operand::Imm(0x1234)),
            Instr::halt(),
        ]);
        // opcode 1, kinds reg|imm = 0x12, dst 3, payload 34 12 00.
        assert_eq!(
            assemble(&p).unwrap(),
            vec![1, 0x12, 3, 0x34, 0x12, 0x00, 18, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn negative_immediate_round_trips_via_sign_extension() {
        let p = ToyProgram::straight_line(vec![
            Instr::xor(r(0), Operand::Imm(0xffff_ffff)),
            Instr::halt(),
        ]);
        let bytes = assemble(&p).unwrap();
        let back = disassemble(&bytes).unwrap();
        assert_eq!(back.blocks[0].instrs[0], Instr::xor(r(0), Operand::Imm(0xffff_ffff)));
    }

    #[test]
    fn labels_resolve_to_block_byte_offsets() {
        let p = ToyProgram {
            blocks: vec![
                Block::new("entry", vec![Instr::nop(), Instr::jmp("end")]),
                Block::new("end", vec![Instr::halt()]),
            ],
            entry: "entry".into(),
        };
        let bytes = assemble(&p).unwrap();
        // JMP is the second instruction; its payload must be 12 (= 2 × 6).
        assert_eq!(bytes[6], 16);
        assert_eq!(&bytes[9..12], &[12, 0, 0]);
    }

    #[test]
    fn round_trip_reproduces_the_instruction_stream() {
        let p = ToyProgram {
            blocks: vec![
                Block::new(
                    "entry",
                    vec![
                        Instr::mov(Operand::Reg(r(0)), Operand::Imm(5)),
                        Instr::mov(Operand::Mem(9), Operand::Reg(r(0))),
                        Instr::cmp(r(0), Operand::Imm(5)),
                        Instr::jcc(Cond::Z, "skip"),
                        Instr::add(r(1), Operand::Mem(9)),
                        Instr::jmp("skip"),
                    ],
                ),
                Block::new("skip", vec![Instr::push(Operand::Imm(-2i32 as u32)), Instr::pop(r(7)), Instr::halt()]),
            ],
            entry: "entry".into(),
        };
        let bytes = assemble(&p).unwrap();
        let back = disassemble(&bytes).unwrap();
        // Same flat instruction stream modulo label names.
        let flat_a: Vec<&Instr> = p.blocks.iter().flat_map(|b| &b.instrs).collect();
        let flat_b: Vec<&Instr> = back.blocks.iter().flat_map(|b| &b.instrs).collect();
        assert_eq!(flat_a.len(), flat_b.len());
        for (x, y) in flat_a.iter().zip(&flat_b) {
            match (&x.dst, &y.dst) {
                (Some(Operand::Label(_)), Some(Operand::Label(_))) => assert_eq!(x.op, y.op),
                _ => assert_eq!(x, y),
            }
        }
        // And byte-level fixpoint.
        assert_eq!(assemble(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_stream_is_rejected() {
        assert_eq!(disassemble(&[18, 0, 0]), Err(DisassembleError::BadLength(3)));
    }

    #[test]
    fn unknown_opcode_is_rejected() {
        assert_eq!(
            disassemble(&[99, 0, 0, 0, 0, 0]),
            Err(DisassembleError::BadOpcode(99, 0))
        );
    }

    #[test]
    fn misaligned_jump_target_is_rejected() {
        let mut bytes = assemble(&ToyProgram {
            blocks: vec![Block::new("e", vec![Instr::jmp("e"), Instr::halt()])],
            entry: "e".into(),
        })
        .unwrap();
        bytes[3] = 7; // offset 7 is not a boundary
        assert_eq!(disassemble(&bytes), Err(DisassembleError::BadTarget(7)));
    }
}
