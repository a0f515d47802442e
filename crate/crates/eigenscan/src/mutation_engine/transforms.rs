//! The five metamorphism techniques.
//!
//! Every transform is behavior-preserving by construction and checked against
//! the interpreter in tests: garbage insertion only uses forms that touch
//! nothing observable, substitution rewrites through a bidirectional
//! equivalence table (gated on flags liveness where the two sides disagree on
//! flags), transposition swaps adjacent instructions only when their
//! read/write sets are provably disjoint, renaming applies one register
//! permutation consistently, and block permutation repairs every fall-through
//! edge it breaks with an explicit JMP.

use rand::prelude::*;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::isa::{Instr, Op, Operand, Reg, ToyProgram, REG_COUNT};

/// A register permutation: `map[i]` is the new index of Rᵢ.
pub type RegPerm = [u8; REG_COUNT];

pub const IDENTITY_PERM: RegPerm = [0, 1, 2, 3, 4, 5, 6, 7];

pub fn compose_perms(outer: RegPerm, inner: RegPerm) -> RegPerm {
    let mut out = IDENTITY_PERM;
    for i in 0..REG_COUNT {
        out[i] = outer[inner[i] as usize];
    }
    out
}

pub fn invert_perm(perm: RegPerm) -> RegPerm {
    let mut inv = IDENTITY_PERM;
    for i in 0..REG_COUNT {
        inv[perm[i] as usize] = i as u8;
    }
    inv
}

// ---------------------------------------------------------------------------
// Garbage insertion

/// The garbage repertoire: NOP, `MOV R,R`, adjacent `PUSH R` / `POP R`, and
/// `SHL R,#0`. Each is invisible to registers, memory, flags (shift count 0
/// leaves flags alone) and net stack depth.
fn garbage_sequence(rng: &mut ChaCha8Rng) -> Vec<Instr> {
    match rng.random_range(0u32..4) {
        0 => vec![Instr::nop()],
        1 => {
            let r = Reg::new(rng.random_range(0..REG_COUNT as u8));
            vec![Instr::mov(Operand::Reg(r), Operand::Reg(r))]
        }
        2 => {
            let r = Reg::new(rng.random_range(0..REG_COUNT as u8));
            vec![Instr::push(Operand::Reg(r)), Instr::pop(r)]
        }
        _ => {
            let r = Reg::new(rng.random_range(0..REG_COUNT as u8));
            vec![Instr::shl(r, Operand::Imm(0))]
        }
    }
}

/// Insert garbage at random points. Each legal insertion point (never after a
/// block terminator) fires independently with probability `rate`.
pub fn insert_garbage(program: &ToyProgram, rate: f64, rng: &mut ChaCha8Rng) -> ToyProgram {
    assert!((0.0..=1.0).contains(&rate), "garbage rate must be a probability");
    let mut out = program.clone();
    for block in &mut out.blocks {
        let old = std::mem::take(&mut block.instrs);
        let terminated = old.last().is_some_and(Instr::is_control);
        let mut rebuilt = Vec::with_capacity(old.len());
        let len = old.len();
        for (k, instr) in old.into_iter().enumerate() {
            if rng.random_bool(rate) {
                rebuilt.extend(garbage_sequence(rng));
            }
            rebuilt.push(instr);
            // Appending after the final instruction is only legal when the
            // block falls through.
            if k + 1 == len && !terminated && rng.random_bool(rate) {
                rebuilt.extend(garbage_sequence(rng));
            }
        }
        block.instrs = rebuilt;
    }
    out
}

// ---------------------------------------------------------------------------
// Register renaming

fn rename_operand(operand: &Operand, perm: &RegPerm) -> Operand {
    match operand {
        Operand::Reg(r) => Operand::Reg(Reg::new(perm[r.index()])),
        other => other.clone(),
    }
}

/// Apply one register permutation to every operand of every instruction.
pub fn apply_rename(program: &ToyProgram, perm: &RegPerm) -> ToyProgram {
    let mut out = program.clone();
    for block in &mut out.blocks {
        for instr in &mut block.instrs {
            instr.dst = instr.dst.as_ref().map(|o| rename_operand(o, perm));
            instr.src = instr.src.as_ref().map(|o| rename_operand(o, perm));
        }
    }
    out
}

/// Draw a random permutation of R0–R7 and apply it consistently. The
/// permutation is returned so callers can record it and the equivalence
/// oracle can invert it.
pub fn rename_registers(program: &ToyProgram, rng: &mut ChaCha8Rng) -> (ToyProgram, RegPerm) {
    let mut perm = IDENTITY_PERM;
    perm.shuffle(rng);
    (apply_rename(program, &perm), perm)
}

// ---------------------------------------------------------------------------
// Instruction substitution

/// One rewrite of a window of 1–2 instructions into an equivalent sequence.
struct Rewrite {
    consumed: usize,
    replacement: Vec<Instr>,
    /// The two sides disagree on flags, so the rewrite is legal only where
    /// the flags are provably dead.
    needs_dead_flags: bool,
}

fn reg_dst(instr: &Instr) -> Option<Reg> {
    match instr.dst {
        Some(Operand::Reg(r)) => Some(r),
        _ => None,
    }
}

/// Equivalence table, both directions. The zeroing family and the XOR/NOT
/// complement pair differ on flags (MOV and NOT write none); TEST↔CMP against
/// the same value and the NOT+NEG↔ADD#1 pair set identical flags and need no
/// gate, as do the pure data-move pairs.
fn rewrites_at(instrs: &[Instr], i: usize) -> Vec<Rewrite> {
    let mut out = Vec::new();
    let a = &instrs[i];
    let b = instrs.get(i + 1);

    match (a.op, &a.dst, &a.src) {
        // XOR R,R → MOV R,#0 and SUB R,R → MOV R,#0
        (Op::Xor | Op::Sub, Some(Operand::Reg(d)), Some(Operand::Reg(s))) if d == s => {
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::mov(Operand::Reg(*d), Operand::Imm(0))],
                needs_dead_flags: true,
            });
        }
        // XOR R,#-1 → NOT R
        (Op::Xor, Some(Operand::Reg(d)), Some(Operand::Imm(0xffff_ffff))) => {
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::not(*d)],
                needs_dead_flags: true,
            });
        }
        // TEST R,R ↔ CMP R,#0
        (Op::Test, Some(Operand::Reg(d)), Some(Operand::Reg(s))) if d == s => {
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::cmp(*d, Operand::Imm(0))],
                needs_dead_flags: false,
            });
        }
        (Op::Cmp, Some(Operand::Reg(d)), Some(Operand::Imm(0))) => {
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::test(*d, Operand::Reg(*d))],
                needs_dead_flags: false,
            });
        }
        // NOT R → XOR R,#-1
        (Op::Not, Some(Operand::Reg(d)), None) => {
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::xor(*d, Operand::Imm(0xffff_ffff))],
                needs_dead_flags: true,
            });
            // NOT R + NEG R → ADD R,#1 (both sides end with flags of R+1)
            if let Some(next) = b {
                if next.op == Op::Neg && reg_dst(next) == Some(*d) {
                    out.push(Rewrite {
                        consumed: 2,
                        replacement: vec![Instr::add(*d, Operand::Imm(1))],
                        needs_dead_flags: false,
                    });
                }
            }
        }
        // ADD R,#1 → NOT R + NEG R
        (Op::Add, Some(Operand::Reg(d)), Some(Operand::Imm(1))) => {
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::not(*d), Instr::neg(*d)],
                needs_dead_flags: false,
            });
        }
        // MOV R,#imm → PUSH #imm + POP R, → LEA R,#imm, and the zeroing
        // expansions for #0.
        (Op::Mov, Some(Operand::Reg(d)), Some(Operand::Imm(v))) => {
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::push(Operand::Imm(*v)), Instr::pop(*d)],
                needs_dead_flags: false,
            });
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::lea(*d, Operand::Imm(*v))],
                needs_dead_flags: false,
            });
            if *v == 0 {
                out.push(Rewrite {
                    consumed: 1,
                    replacement: vec![Instr::xor(*d, Operand::Reg(*d))],
                    needs_dead_flags: true,
                });
                out.push(Rewrite {
                    consumed: 1,
                    replacement: vec![Instr::sub(*d, Operand::Reg(*d))],
                    needs_dead_flags: true,
                });
            }
        }
        // LEA R,#imm → MOV R,#imm
        (Op::Lea, Some(Operand::Reg(d)), Some(Operand::Imm(v))) => {
            out.push(Rewrite {
                consumed: 1,
                replacement: vec![Instr::mov(Operand::Reg(*d), Operand::Imm(*v))],
                needs_dead_flags: false,
            });
        }
        _ => {}
    }

    // PUSH #imm + POP R → MOV R,#imm
    if let (Op::Push, Some(Operand::Imm(v)), Some(next)) = (a.op, &a.dst, b) {
        if next.op == Op::Pop {
            if let Some(d) = reg_dst(next) {
                out.push(Rewrite {
                    consumed: 2,
                    replacement: vec![Instr::mov(Operand::Reg(d), Operand::Imm(*v))],
                    needs_dead_flags: false,
                });
            }
        }
    }

    out
}

/// Definitely-dead flags analysis, forward from `instrs[after]+1` within one
/// block. Conservative: a JCC or reaching the block boundary through a JMP or
/// a fall-through counts as live; only a definite flag write or HALT before
/// any possible read proves death.
fn flags_dead_after(instrs: &[Instr], after: usize) -> bool {
    for instr in &instrs[after + 1..] {
        match instr.op {
            Op::Jcc => return false,
            Op::Jmp => return false,
            Op::Halt => return true,
            Op::Add | Op::Sub | Op::Xor | Op::And | Op::Or | Op::Neg | Op::Cmp | Op::Test => {
                return true;
            }
            // A shift by a nonzero constant definitely writes flags; any
            // other shift may or may not, so it neither kills nor reads.
            Op::Shl => {
                if let Some(Operand::Imm(v)) = instr.src {
                    if v & 31 != 0 {
                        return true;
                    }
                }
            }
            Op::Mov | Op::Not | Op::Push | Op::Pop | Op::Nop | Op::Lea => {}
        }
    }
    false
}

/// Rewrite instructions through the equivalence table. Each site with at
/// least one applicable (and flags-legal) rewrite fires with probability ½,
/// choosing uniformly among the candidates.
pub fn substitute_instructions(program: &ToyProgram, rng: &mut ChaCha8Rng) -> ToyProgram {
    let mut out = program.clone();
    for block in &mut out.blocks {
        let old = std::mem::take(&mut block.instrs);
        let mut rebuilt = Vec::with_capacity(old.len());
        let mut i = 0;
        while i < old.len() {
            let candidates: Vec<Rewrite> = rewrites_at(&old, i)
                .into_iter()
                .filter(|rw| {
                    !rw.needs_dead_flags || flags_dead_after(&old, i + rw.consumed - 1)
                })
                .collect();
            if !candidates.is_empty() && rng.random_bool(0.5) {
                let chosen = &candidates[rng.random_range(0..candidates.len())];
                rebuilt.extend(chosen.replacement.iter().cloned());
                i += chosen.consumed;
            } else {
                rebuilt.push(old[i].clone());
                i += 1;
            }
        }
        block.instrs = rebuilt;
    }
    out
}

// ---------------------------------------------------------------------------
// Instruction transposition

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct Effects {
    reads_regs: u8,
    writes_regs: u8,
    reads_mem: Option<u8>,
    writes_mem: Option<u8>,
    reads_flags: bool,
    writes_flags: bool,
    touches_stack: bool,
    control: bool,
}

fn operand_read(e: &mut Effects, operand: &Operand) {
    match operand {
        Operand::Reg(r) => e.reads_regs |= 1 << r.index(),
        Operand::Mem(slot) => e.reads_mem = Some(*slot),
        Operand::Imm(_) | Operand::Label(_) => {}
    }
}

fn effects(instr: &Instr) -> Effects {
    let mut e = Effects::default();
    match instr.op {
        Op::Mov => {
            operand_read(&mut e, instr.src.as_ref().unwrap());
            match instr.dst.as_ref().unwrap() {
                Operand::Reg(r) => e.writes_regs |= 1 << r.index(),
                Operand::Mem(slot) => e.writes_mem = Some(*slot),
                _ => unreachable!(),
            }
        }
        Op::Add | Op::Sub | Op::Xor | Op::And | Op::Or | Op::Shl => {
            operand_read(&mut e, instr.src.as_ref().unwrap());
            operand_read(&mut e, instr.dst.as_ref().unwrap());
            if let Some(Operand::Reg(r)) = instr.dst {
                e.writes_regs |= 1 << r.index();
            }
            e.writes_flags = true;
        }
        Op::Not | Op::Neg => {
            operand_read(&mut e, instr.dst.as_ref().unwrap());
            if let Some(Operand::Reg(r)) = instr.dst {
                e.writes_regs |= 1 << r.index();
            }
            e.writes_flags = instr.op == Op::Neg;
        }
        Op::Lea => {
            // The source is an address computation, not a memory access.
            if let Some(Operand::Reg(r)) = instr.dst {
                e.writes_regs |= 1 << r.index();
            }
        }
        Op::Push => {
            operand_read(&mut e, instr.dst.as_ref().unwrap());
            e.touches_stack = true;
        }
        Op::Pop => {
            if let Some(Operand::Reg(r)) = instr.dst {
                e.writes_regs |= 1 << r.index();
            }
            e.touches_stack = true;
        }
        Op::Cmp | Op::Test => {
            operand_read(&mut e, instr.dst.as_ref().unwrap());
            operand_read(&mut e, instr.src.as_ref().unwrap());
            e.writes_flags = true;
        }
        Op::Nop => {}
        Op::Jmp | Op::Jcc | Op::Halt => {
            e.control = true;
            e.reads_flags = instr.op == Op::Jcc;
        }
    }
    e
}

/// True when swapping the adjacent pair cannot change behavior: no
/// write-write, write-read or read-write overlap on registers, flags, memory
/// slots or the stack, and neither instruction transfers control.
pub fn independent(a: &Instr, b: &Instr) -> bool {
    let ea = effects(a);
    let eb = effects(b);
    if ea.control || eb.control {
        return false;
    }
    if ea.writes_regs & (eb.reads_regs | eb.writes_regs) != 0
        || eb.writes_regs & ea.reads_regs != 0
    {
        return false;
    }
    let mem_overlap = |x: Option<u8>, y: Option<u8>| x.is_some() && x == y;
    if mem_overlap(ea.writes_mem, eb.reads_mem)
        || mem_overlap(ea.writes_mem, eb.writes_mem)
        || mem_overlap(eb.writes_mem, ea.reads_mem)
    {
        return false;
    }
    if (ea.writes_flags && (eb.reads_flags || eb.writes_flags))
        || (eb.writes_flags && ea.reads_flags)
    {
        return false;
    }
    if ea.touches_stack && eb.touches_stack {
        return false;
    }
    true
}

/// Swap adjacent instruction pairs whose effect sets are disjoint, each
/// eligible pair firing with probability ½. Pairs never span a control
/// instruction or a block boundary.
pub fn transpose_independent(program: &ToyProgram, rng: &mut ChaCha8Rng) -> ToyProgram {
    let mut out = program.clone();
    for block in &mut out.blocks {
        let instrs = &mut block.instrs;
        let mut k = 0;
        while k + 1 < instrs.len() {
            if independent(&instrs[k], &instrs[k + 1]) && rng.random_bool(0.5) {
                instrs.swap(k, k + 1);
                k += 2;
            } else {
                k += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Block permutation

/// Emit the blocks in a random order, repairing every fall-through edge the
/// reordering breaks with an explicit JMP to the original successor. The
/// entry label is untouched; execution still starts there.
pub fn permute_blocks(program: &ToyProgram, rng: &mut ChaCha8Rng) -> ToyProgram {
    let block_count = program.blocks.len();
    if block_count <= 1 {
        return program.clone();
    }

    // Fall-through successor in the *original* order, None when the block
    // already ends with no fall-through path.
    let successors: Vec<Option<String>> = program
        .blocks
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let ends = block.instrs.last().is_some_and(Instr::is_block_end);
            if ends || i + 1 == block_count {
                None
            } else {
                Some(program.blocks[i + 1].label.clone())
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..block_count).collect();
    order.shuffle(rng);

    let mut blocks = Vec::with_capacity(block_count);
    for (pos, &bi) in order.iter().enumerate() {
        let mut block = program.blocks[bi].clone();
        if let Some(successor) = &successors[bi] {
            let next_label = order.get(pos + 1).map(|&ni| program.blocks[ni].label.as_str());
            if next_label != Some(successor.as_str()) {
                block.instrs.push(Instr::jmp(successor.clone()));
            }
        }
        blocks.push(block);
    }
    ToyProgram { blocks, entry: program.entry.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation_engine::isa::Block;
    use crate::mutation_engine::vm::{execute, VmState};

    fn r(i: u8) -> Reg {
        Reg::new(i)
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn demo_program() -> ToyProgram {
        ToyProgram {
            blocks: vec![
                Block::new(
                    "entry",
                    vec![
                        Instr::mov(Operand::Reg(r(0)), Operand::Imm(7)),
                        Instr::mov(Operand::Reg(r(1)), Operand::Imm(0)),
                        Instr::add(r(1), Operand::Reg(r(0))),
                        Instr::cmp(r(1), Operand::Imm(7)),
                        Instr::jcc(super::super::isa::Cond::Z, "store"),
                        Instr::jmp("done"),
                    ],
                ),
                Block::new(
                    "store",
                    vec![
                        Instr::mov(Operand::Mem(3), Operand::Reg(r(1))),
                        Instr::xor(r(2), Operand::Reg(r(2))),
                        Instr::jmp("done"),
                    ],
                ),
                Block::new("done", vec![Instr::halt()]),
            ],
            entry: "entry".into(),
        }
    }

    fn random_states(seed: u64, count: usize) -> Vec<VmState> {
        let mut g = rng(seed);
        (0..count)
            .map(|_| {
                let mut s = VmState::default();
                for reg in &mut s.registers {
                    *reg = g.random();
                }
                for slot in 0..16 {
                    s.memory[slot] = g.random();
                }
                s
            })
            .collect()
    }

    fn assert_same_behavior(original: &ToyProgram, variant: &ToyProgram, states: &[VmState]) {
        for state in states {
            let a = execute(original, state, 100_000).expect("original must run");
            let b = execute(variant, state, 100_000).expect("variant must run");
            assert_eq!(a.registers, b.registers, "register files diverged");
            assert_eq!(a.memory[..], b.memory[..], "memory diverged");
        }
    }

    #[test]
    fn zero_rate_inserts_nothing() {
        let p = demo_program();
        let out = insert_garbage(&p, 0.0, &mut rng(1));
        assert_eq!(out, p);
    }

    #[test]
    fn forced_insertion_before_halt() {
        let p = ToyProgram::straight_line(vec![Instr::halt()]);
        // Seed chosen so the single insertion point draws a NOP.
        let out = insert_garbage(&p, 1.0, &mut rng(2));
        assert_eq!(out.blocks[0].instrs, vec![Instr::nop(), Instr::halt()]);
    }

    #[test]
    fn garbage_never_lands_after_a_terminator() {
        let p = demo_program();
        for seed in 0..20 {
            let out = insert_garbage(&p, 1.0, &mut rng(seed));
            for block in &out.blocks {
                for instr in &block.instrs[..block.instrs.len() - 1] {
                    assert!(!instr.is_control() || instr.op == Op::Jcc);
                }
            }
            assert!(out.instruction_count() > p.instruction_count());
        }
    }

    #[test]
    fn heavy_garbage_preserves_behavior() {
        let p = demo_program();
        let states = random_states(77, 10);
        for seed in 0..10 {
            let out = insert_garbage(&p, 0.9, &mut rng(seed));
            assert_same_behavior(&p, &out, &states);
        }
    }

    #[test]
    fn identity_rename_is_identity() {
        let p = demo_program();
        assert_eq!(apply_rename(&p, &IDENTITY_PERM), p);
    }

    #[test]
    fn swap_rename_matches_hand_rewrite() {
        let p = ToyProgram::straight_line(vec![
            Instr::mov(Operand::Reg(r(0)), Operand::Imm(5)),
            Instr::add(r(1), Operand::Reg(r(0))),
            Instr::halt(),
        ]);
        let mut perm = IDENTITY_PERM;
        perm.swap(0, 1);
        let out = apply_rename(&p, &perm);
        assert_eq!(
            out.blocks[0].instrs,
            vec![
                Instr::mov(Operand::Reg(r(1)), Operand::Imm(5)),
                Instr::add(r(0), Operand::Reg(r(1))),
                Instr::halt(),
            ]
        );
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn rename_behavior_equal_after_inverting_the_permutation() {
        let p = demo_program();
        let states = random_states(99, 10);
        for seed in 0..10 {
            let (variant, perm) = rename_registers(&p, &mut rng(seed));
            for state in &states {
                // The variant reads σ(r) where the original reads r, so the
                // input registers are permuted forward and the outputs mapped
                // back before comparing.
                let mut permuted = state.clone();
                for i in 0..REG_COUNT {
                    permuted.registers[perm[i] as usize] = state.registers[i];
                }
                let a = execute(&p, state, 100_000).unwrap();
                let b = execute(&variant, &permuted, 100_000).unwrap();
                let mut mapped_back = [0u32; REG_COUNT];
                for i in 0..REG_COUNT {
                    mapped_back[i] = b.registers[perm[i] as usize];
                }
                assert_eq!(a.registers, mapped_back);
                assert_eq!(a.memory[..], b.memory[..]);
            }
        }
    }

    #[test]
    fn substitution_table_contains_the_required_pairs() {
        // XOR R2,R2 → MOV R2,#0 (needs dead flags).
        let xor = [Instr::xor(r(2), Operand::Reg(r(2))), Instr::halt()];
        let rws = rewrites_at(&xor, 0);
        assert!(rws
            .iter()
            .any(|rw| rw.replacement == vec![Instr::mov(Operand::Reg(r(2)), Operand::Imm(0))]
                && rw.needs_dead_flags));

        // MOV R1,#7 → PUSH #7 + POP R1.
        let mov = [Instr::mov(Operand::Reg(r(1)), Operand::Imm(7)), Instr::halt()];
        let rws = rewrites_at(&mov, 0);
        assert!(rws.iter().any(
            |rw| rw.replacement == vec![Instr::push(Operand::Imm(7)), Instr::pop(r(1))]
        ));

        // PUSH #9 + POP R3 → MOV R3,#9.
        let pair = [Instr::push(Operand::Imm(9)), Instr::pop(r(3)), Instr::halt()];
        let rws = rewrites_at(&pair, 0);
        assert!(rws.iter().any(|rw| rw.consumed == 2
            && rw.replacement == vec![Instr::mov(Operand::Reg(r(3)), Operand::Imm(9))]));

        // NOT R0 + NEG R0 → ADD R0,#1, flags identical so no gate.
        let notneg = [Instr::not(r(0)), Instr::neg(r(0)), Instr::halt()];
        let rws = rewrites_at(&notneg, 0);
        assert!(rws.iter().any(|rw| rw.consumed == 2
            && rw.replacement == vec![Instr::add(r(0), Operand::Imm(1))]
            && !rw.needs_dead_flags));

        // TEST R4,R4 → CMP R4,#0 and back.
        let test = [Instr::test(r(4), Operand::Reg(r(4))), Instr::halt()];
        assert!(rewrites_at(&test, 0)
            .iter()
            .any(|rw| rw.replacement == vec![Instr::cmp(r(4), Operand::Imm(0))]));
        let cmp = [Instr::cmp(r(4), Operand::Imm(0)), Instr::halt()];
        assert!(rewrites_at(&cmp, 0)
            .iter()
            .any(|rw| rw.replacement == vec![Instr::test(r(4), Operand::Reg(r(4)))]));

        // SUB R5,R5 → MOV R5,#0.
        let sub = [Instr::sub(r(5), Operand::Reg(r(5))), Instr::halt()];
        assert!(rewrites_at(&sub, 0)
            .iter()
            .any(|rw| rw.replacement == vec![Instr::mov(Operand::Reg(r(5)), Operand::Imm(0))]));

        // XOR R6,#-1 ↔ NOT R6.
        let xorm1 = [Instr::xor(r(6), Operand::Imm(0xffff_ffff)), Instr::halt()];
        assert!(rewrites_at(&xorm1, 0)
            .iter()
            .any(|rw| rw.replacement == vec![Instr::not(r(6))]));
    }

    #[test]
    fn flag_divergent_rewrites_are_blocked_when_a_jcc_watches() {
        // XOR R0,R0 feeds the JZ: replacing it with MOV would lose the flags.
        let instrs = [
            Instr::xor(r(0), Operand::Reg(r(0))),
            Instr::jcc(super::super::isa::Cond::Z, "entry"),
            Instr::halt(),
        ];
        assert!(!flags_dead_after(&instrs, 0));
        let gated: Vec<Rewrite> = rewrites_at(&instrs, 0)
            .into_iter()
            .filter(|rw| !rw.needs_dead_flags || flags_dead_after(&instrs, 0))
            .collect();
        assert!(gated.is_empty());

        // With an intervening CMP the flags are definitely rewritten first.
        let shielded = [
            Instr::xor(r(0), Operand::Reg(r(0))),
            Instr::cmp(r(1), Operand::Imm(0)),
            Instr::jcc(super::super::isa::Cond::Z, "entry"),
            Instr::halt(),
        ];
        assert!(flags_dead_after(&shielded, 0));
    }

    #[test]
    fn substitution_preserves_behavior() {
        let p = demo_program();
        let states = random_states(1234, 10);
        for seed in 0..200 {
            let out = substitute_instructions(&p, &mut rng(seed));
            assert_same_behavior(&p, &out, &states);
        }
    }

    #[test]
    fn paper_example_pair_is_independent() {
        // MOV R0,R3 / ADD R2,#5: fully disjoint.
        assert!(independent(
            &Instr::mov(Operand::Reg(r(0)), Operand::Reg(r(3))),
            &Instr::add(r(2), Operand::Imm(5)),
        ));
    }

    #[test]
    fn register_dependency_blocks_transposition() {
        assert!(!independent(
            &Instr::mov(Operand::Reg(r(0)), Operand::Imm(1)),
            &Instr::add(r(0), Operand::Imm(2)),
        ));
    }

    #[test]
    fn flag_writers_conflict_with_each_other() {
        // Both write flags; swapping would change which result the flags
        // describe.
        assert!(!independent(
            &Instr::add(r(0), Operand::Imm(1)),
            &Instr::add(r(1), Operand::Imm(2)),
        ));
    }

    #[test]
    fn stack_operations_never_commute() {
        assert!(!independent(
            &Instr::push(Operand::Reg(r(0))),
            &Instr::push(Operand::Reg(r(1))),
        ));
    }

    #[test]
    fn transposition_preserves_behavior() {
        let p = demo_program();
        let states = random_states(4321, 10);
        for seed in 0..500 {
            let out = transpose_independent(&p, &mut rng(seed));
            assert_same_behavior(&p, &out, &states);
            assert_eq!(out.instruction_count(), p.instruction_count());
        }
    }

    #[test]
    fn single_block_permutation_is_identity() {
        let p = ToyProgram::straight_line(vec![Instr::nop(), Instr::halt()]);
        assert_eq!(permute_blocks(&p, &mut rng(5)), p);
    }

    #[test]
    fn broken_fall_through_gets_an_explicit_jmp() {
        // A falls through to B; any order that separates them must repair A.
        let p = ToyProgram {
            blocks: vec![
                Block::new("a", vec![Instr::mov(Operand::Reg(r(0)), Operand::Imm(1))]),
                Block::new("b", vec![Instr::halt()]),
            ],
            entry: "a".into(),
        };
        // Find a seed that emits b before a.
        let out = (0..64)
            .map(|seed| permute_blocks(&p, &mut rng(seed)))
            .find(|out| out.blocks[0].label == "b")
            .expect("some seed reorders two blocks");
        let a = out.block("a").unwrap();
        assert_eq!(a.instrs.last(), Some(&Instr::jmp("b")));
        let states = random_states(1, 4);
        assert_same_behavior(&p, &out, &states);
    }

    #[test]
    fn six_block_permutations_preserve_behavior() {
        let blocks: Vec<Block> = (0..6)
            .map(|i| {
                let next = format!("blk{}", i + 1);
                let mut instrs = vec![
                    Instr::add(r(1), Operand::Imm(10 + i)),
                    Instr::mov(Operand::Mem(i as u8), Operand::Reg(r(1))),
                ];
                instrs.push(if i == 5 { Instr::halt() } else { Instr::jmp(next) });
                Block::new(format!("blk{i}"), instrs)
            })
            .collect();
        let p = ToyProgram { blocks, entry: "blk0".into() };
        let states = random_states(42, 5);
        for seed in 0..30 {
            let out = permute_blocks(&p, &mut rng(seed));
            assert_eq!(out.instruction_count(), p.instruction_count());
            assert_same_behavior(&p, &out, &states);
        }
    }

    #[test]
    fn permutation_of_terminated_blocks_preserves_count_and_behavior() {
        let p = demo_program();
        let states = random_states(5678, 10);
        for seed in 0..50 {
            let out = permute_blocks(&p, &mut rng(seed));
            assert_eq!(out.instruction_count(), p.instruction_count());
            assert_eq!(out.entry, p.entry);
            assert_same_behavior(&p, &out, &states);
        }
    }
}
