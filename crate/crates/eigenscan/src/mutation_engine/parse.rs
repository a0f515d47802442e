//! Textual assembly for seed fixtures.
//!
//! One instruction per line. A line of the form `name:` opens a new block;
//! instructions before the first label land in an implicit `entry` block.
//! Everything after `;` is a comment. Operands: `R0`–`R7`, `#imm` (decimal or
//! 0x hex, optionally negative), `[slot]` for memory, a bare identifier for a
//! jump target. Conditional jumps are spelled `JZ`/`JNZ`/`JS`/`JNS`.
//!
//! Fall-through edges are made explicit at parse time: a block that does not
//! end in JMP or HALT gets a JMP to the next block appended, so parsed
//! programs always survive block permutation unchanged in length. The final
//! block must end in JMP or HALT.

use thiserror::Error;

use super::isa::{imm_encodable, Block, Cond, Instr, Op, Operand, Reg, ToyProgram};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, message: message.into() }
}

fn parse_operand(token: &str, line: usize) -> Result<Operand, ParseError> {
    let token = token.trim();
    if token.is_empty() {
        return Err(err(line, "empty operand"));
    }
    let upper = token.to_ascii_uppercase();
    if let Some(idx) = upper.strip_prefix('R') {
        if let Ok(i) = idx.parse::<u8>() {
            if i < 8 {
                return Ok(Operand::Reg(Reg::new(i)));
            }
            return Err(err(line, format!("register {token} out of range (R0-R7)")));
        }
    }
    if let Some(imm) = token.strip_prefix('#') {
        let (digits, negative) = match imm.strip_prefix('-') {
            Some(rest) => (rest, true),
            None => (imm, false),
        };
        let magnitude = if let Some(hex) = digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
            i64::from_str_radix(hex, 16)
        } else {
            digits.parse::<i64>()
        }
        .map_err(|_| err(line, format!("bad immediate {imm:?}")))?;
        let signed = if negative { -magnitude } else { magnitude };
        if signed < i64::from(i32::MIN) || signed > i64::from(u32::MAX) {
            return Err(err(line, format!("immediate {imm:?} out of 32-bit range")));
        }
        let value = signed as u32;
        if !imm_encodable(value) {
            return Err(err(
                line,
                format!("immediate {imm:?} does not fit the sign-extended 24-bit encoding"),
            ));
        }
        return Ok(Operand::Imm(value));
    }
    if let Some(inner) = token.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        let slot = inner
            .trim()
            .parse::<u16>()
            .ok()
            .filter(|&s| s < 256)
            .ok_or_else(|| err(line, format!("bad memory slot {token:?}")))?;
        return Ok(Operand::Mem(slot as u8));
    }
    if token.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Ok(Operand::Label(token.to_string()));
    }
    Err(err(line, format!("unrecognized operand {token:?}")))
}

fn parse_instr(text: &str, line: usize) -> Result<Instr, ParseError> {
    let (mnemonic, rest) = match text.split_once(char::is_whitespace) {
        Some((m, rest)) => (m, rest.trim()),
        None => (text, ""),
    };
    let operands: Vec<Operand> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|tok| parse_operand(tok, line))
            .collect::<Result<_, _>>()?
    };

    let upper = mnemonic.to_ascii_uppercase();
    let want = |count: usize| -> Result<(), ParseError> {
        if operands.len() == count {
            Ok(())
        } else {
            Err(err(line, format!("{upper} expects {count} operand(s), got {}", operands.len())))
        }
    };

    let jcc = |cc: Cond, operands: &[Operand]| -> Result<Instr, ParseError> {
        match operands {
            [Operand::Label(target)] => Ok(Instr::jcc(cc, target.clone())),
            _ => Err(err(line, format!("{upper} expects a label"))),
        }
    };

    let instr = match upper.as_str() {
        "MOV" | "ADD" | "SUB" | "XOR" | "AND" | "OR" | "SHL" | "LEA" | "CMP" | "TEST" => {
            want(2)?;
            let op = match upper.as_str() {
                "MOV" => Op::Mov,
                "ADD" => Op::Add,
                "SUB" => Op::Sub,
                "XOR" => Op::Xor,
                "AND" => Op::And,
                "OR" => Op::Or,
                "SHL" => Op::Shl,
                "LEA" => Op::Lea,
                "CMP" => Op::Cmp,
                _ => Op::Test,
            };
            Instr { op, dst: Some(operands[0].clone()), src: Some(operands[1].clone()), cc: None }
        }
        "NOT" | "NEG" | "POP" | "PUSH" => {
            want(1)?;
            let op = match upper.as_str() {
                "NOT" => Op::Not,
                "NEG" => Op::Neg,
                "POP" => Op::Pop,
                _ => Op::Push,
            };
            Instr { op, dst: Some(operands[0].clone()), src: None, cc: None }
        }
        "JMP" => {
            want(1)?;
            match &operands[0] {
                Operand::Label(target) => Instr::jmp(target.clone()),
                _ => return Err(err(line, "JMP expects a label")),
            }
        }
        "JZ" => jcc(Cond::Z, &operands)?,
        "JNZ" => jcc(Cond::Nz, &operands)?,
        "JS" => jcc(Cond::S, &operands)?,
        "JNS" => jcc(Cond::Ns, &operands)?,
        "NOP" => {
            want(0)?;
            Instr::nop()
        }
        "HALT" => {
            want(0)?;
            Instr::halt()
        }
        other => return Err(err(line, format!("unknown mnemonic {other:?}"))),
    };

    instr
        .validate()
        .map_err(|e| err(line, e.to_string()))?;
    Ok(instr)
}

/// Parse a whole program from assembly text.
pub fn parse_program(text: &str) -> Result<ToyProgram, ParseError> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut entry: Option<String> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(label) = line.strip_suffix(':') {
            let label = label.trim();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(line_no, format!("bad label {label:?}")));
            }
            if blocks.iter().any(|b| b.label == label) {
                return Err(err(line_no, format!("duplicate label {label:?}")));
            }
            blocks.push(Block::new(label, Vec::new()));
            if entry.is_none() {
                entry = Some(label.to_string());
            }
            continue;
        }
        let instr = parse_instr(line, line_no)?;
        if blocks.is_empty() {
            blocks.push(Block::new("entry", Vec::new()));
            entry = Some("entry".to_string());
        }
        blocks.last_mut().unwrap().instrs.push(instr);
    }

    if blocks.is_empty() {
        return Err(err(0, "program is empty"));
    }

    // Make fall-through explicit so block order can be shuffled freely.
    let labels: Vec<String> = blocks.iter().map(|b| b.label.clone()).collect();
    for (i, block) in blocks.iter_mut().enumerate() {
        let falls = !block.instrs.last().is_some_and(Instr::is_block_end);
        if falls {
            if i + 1 == labels.len() {
                return Err(err(0, "final block falls through the end of the program"));
            }
            block.instrs.push(Instr::jmp(labels[i + 1].clone()));
        }
    }

    let program = ToyProgram { blocks, entry: entry.unwrap() };
    program.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(program)
}
