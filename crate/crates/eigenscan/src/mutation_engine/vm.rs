//! Small-step interpreter for the toy ISA.
//!
//! This is the semantic-equivalence oracle: a mutated program is accepted only
//! if executing it produces the same registers and memory as the original on
//! the same inputs. All arithmetic is modulo 2³². Flags follow the x86
//! conventions this ISA cares about: MOV/PUSH/POP/LEA/NOT leave them alone,
//! arithmetic and CMP/TEST set zero/sign from the result, and a shift by an
//! effective count of zero changes nothing.

use thiserror::Error;

use super::isa::{Cond, Instr, Op, Operand, Reg, ToyProgram, REG_COUNT};

pub const MEMORY_SLOTS: usize = 256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),
    #[error("pop from an empty stack")]
    StackUnderflow,
    #[error("jump to unknown label {0:?}")]
    BadJumpTarget(String),
    #[error("control ran past the end of the program")]
    RanOffEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmState {
    pub registers: [u32; REG_COUNT],
    pub memory: [u32; MEMORY_SLOTS],
    pub stack: Vec<u32>,
    pub zero: bool,
    pub sign: bool,
    pub steps: u64,
}

impl Default for VmState {
    fn default() -> Self {
        VmState {
            registers: [0; REG_COUNT],
            memory: [0; MEMORY_SLOTS],
            stack: Vec::new(),
            zero: false,
            sign: false,
            steps: 0,
        }
    }
}

impl VmState {
    fn set_flags(&mut self, result: u32) {
        self.zero = result == 0;
        self.sign = result & 0x8000_0000 != 0;
    }

    fn cond(&self, cc: Cond) -> bool {
        match cc {
            Cond::Z => self.zero,
            Cond::Nz => !self.zero,
            Cond::S => self.sign,
            Cond::Ns => !self.sign,
        }
    }
}

fn value(state: &VmState, operand: &Operand) -> u32 {
    match operand {
        Operand::Reg(r) => state.registers[r.index()],
        Operand::Imm(v) => *v,
        Operand::Mem(slot) => state.memory[*slot as usize],
        Operand::Label(_) => unreachable!("labels are not value operands"),
    }
}

fn reg_of(operand: &Option<Operand>) -> Reg {
    match operand {
        Some(Operand::Reg(r)) => *r,
        other => unreachable!("expected register operand, got {other:?}"),
    }
}

/// Run `program` from its entry label until HALT.
///
/// `fuel` bounds the number of executed instructions; exceeding it means the
/// program (or a bad mutation) diverged. The input state's `steps` field is
/// reset, everything else is taken as the machine's initial contents.
pub fn execute(program: &ToyProgram, input: &VmState, fuel: u64) -> Result<VmState, ExecError> {
    assert!(fuel > 0, "fuel must be positive");
    let (flat, starts) = program.flatten();
    let mut state = input.clone();
    state.steps = 0;

    let target_of = |instr: &Instr| -> Result<usize, ExecError> {
        match &instr.dst {
            Some(Operand::Label(l)) => starts
                .get(l.as_str())
                .copied()
                .ok_or_else(|| ExecError::BadJumpTarget(l.clone())),
            other => unreachable!("jump without label operand: {other:?}"),
        }
    };

    let mut ip = *starts
        .get(program.entry.as_str())
        .ok_or_else(|| ExecError::BadJumpTarget(program.entry.clone()))?;

    loop {
        let instr = *flat.get(ip).ok_or(ExecError::RanOffEnd)?;
        if state.steps == fuel {
            return Err(ExecError::FuelExhausted(state.steps));
        }
        state.steps += 1;

        match instr.op {
            Op::Mov => {
                let v = value(&state, instr.src.as_ref().unwrap());
                match instr.dst.as_ref().unwrap() {
                    Operand::Reg(r) => state.registers[r.index()] = v,
                    Operand::Mem(slot) => state.memory[*slot as usize] = v,
                    other => unreachable!("illegal MOV destination {other:?}"),
                }
            }
            Op::Add | Op::Sub | Op::Xor | Op::And | Op::Or => {
                let r = reg_of(&instr.dst);
                let a = state.registers[r.index()];
                let b = value(&state, instr.src.as_ref().unwrap());
                let result = match instr.op {
                    Op::Add => a.wrapping_add(b),
                    Op::Sub => a.wrapping_sub(b),
                    Op::Xor => a ^ b,
                    Op::And => a & b,
                    Op::Or => a | b,
                    _ => unreachable!(),
                };
                state.registers[r.index()] = result;
                state.set_flags(result);
            }
            Op::Shl => {
                let r = reg_of(&instr.dst);
                let amount = value(&state, instr.src.as_ref().unwrap()) & 31;
                if amount != 0 {
                    let result = state.registers[r.index()] << amount;
                    state.registers[r.index()] = result;
                    state.set_flags(result);
                }
            }
            Op::Not => {
                let r = reg_of(&instr.dst);
                state.registers[r.index()] = !state.registers[r.index()];
            }
            Op::Neg => {
                let r = reg_of(&instr.dst);
                let result = 0u32.wrapping_sub(state.registers[r.index()]);
                state.registers[r.index()] = result;
                state.set_flags(result);
            }
            Op::Lea => {
                let r = reg_of(&instr.dst);
                state.registers[r.index()] = match instr.src.as_ref().unwrap() {
                    Operand::Imm(v) => *v,
                    Operand::Mem(slot) => u32::from(*slot),
                    other => unreachable!("illegal LEA source {other:?}"),
                };
            }
            Op::Push => {
                let v = value(&state, instr.dst.as_ref().unwrap());
                state.stack.push(v);
            }
            Op::Pop => {
                let r = reg_of(&instr.dst);
                let v = state.stack.pop().ok_or(ExecError::StackUnderflow)?;
                state.registers[r.index()] = v;
            }
            Op::Cmp => {
                let a = value(&state, instr.dst.as_ref().unwrap());
                let b = value(&state, instr.src.as_ref().unwrap());
                state.set_flags(a.wrapping_sub(b));
            }
            Op::Test => {
                let a = value(&state, instr.dst.as_ref().unwrap());
                let b = value(&state, instr.src.as_ref().unwrap());
                state.set_flags(a & b);
            }
            Op::Nop => {}
            Op::Jmp => {
                ip = target_of(instr)?;
                continue;
            }
            Op::Jcc => {
                if state.cond(instr.cc.unwrap()) {
                    ip = target_of(instr)?;
                    continue;
                }
            }
            Op::Halt => return Ok(state),
        }
        ip += 1;
    }
}
