//! Behavior-preserving metamorphic mutation of toy-ISA programs.
//!
//! The engine generates the training and evaluation corpus: variants of a
//! seed program that look different byte-for-byte but provably compute the
//! same thing, which gives the classifier ground truth that real malware
//! corpora cannot. Techniques: garbage insertion, register renaming,
//! instruction substitution, block permutation and transposition of
//! independent instructions. [`vm::execute`] is the equivalence oracle.

pub mod encode;
pub mod isa;
pub mod parse;
pub mod transforms;
pub mod vm;

pub use encode::{assemble, disassemble, AssembleError, DisassembleError, INSTR_BYTES};
pub use isa::{Block, Cond, Instr, IsaError, Op, Operand, Reg, ToyProgram, REG_COUNT};
pub use parse::{parse_program, ParseError};
pub use transforms::{
    apply_rename, insert_garbage, invert_perm, permute_blocks, rename_registers,
    substitute_instructions, transpose_independent, RegPerm, IDENTITY_PERM,
};
pub use vm::{execute, ExecError, VmState, MEMORY_SLOTS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which techniques run, how often garbage fires, and the seed that makes the
/// whole mutation deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationConfig {
    pub seed: u64,
    /// Probability of inserting a garbage sequence at each legal point.
    pub garbage_rate: f64,
    pub garbage: bool,
    pub rename: bool,
    pub substitute: bool,
    pub permute: bool,
    pub transpose: bool,
    pub rounds: u32,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            seed: 0,
            garbage_rate: 0.05,
            garbage: true,
            rename: true,
            substitute: true,
            permute: true,
            transpose: true,
            rounds: 1,
        }
    }
}

impl MutationConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// All techniques off: `mutate` becomes the identity.
    pub fn disabled(seed: u64) -> Self {
        MutationConfig {
            seed,
            garbage_rate: 0.0,
            garbage: false,
            rename: false,
            substitute: false,
            permute: false,
            transpose: false,
            rounds: 1,
        }
    }
}

/// A mutated program plus the accumulated register permutation, recorded so
/// the equivalence oracle can invert the renaming.
#[derive(Debug, Clone, PartialEq)]
pub struct MutatedProgram {
    pub program: ToyProgram,
    pub reg_perm: RegPerm,
}

/// Apply the enabled techniques in a fixed order (substitute → transpose →
/// garbage → rename → permute) for `rounds` rounds. All randomness comes from
/// `cfg.seed`, so the result is a pure function of `(program, cfg)`.
pub fn mutate(program: &ToyProgram, cfg: &MutationConfig) -> MutatedProgram {
    assert!(cfg.rounds >= 1, "at least one round");
    assert!(
        (0.0..=1.0).contains(&cfg.garbage_rate),
        "garbage rate must be a probability"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = program.clone();
    let mut total_perm = IDENTITY_PERM;
    for _ in 0..cfg.rounds {
        if cfg.substitute {
            current = substitute_instructions(&current, &mut rng);
        }
        if cfg.transpose {
            current = transpose_independent(&current, &mut rng);
        }
        if cfg.garbage {
            current = insert_garbage(&current, cfg.garbage_rate, &mut rng);
        }
        if cfg.rename {
            let (renamed, perm) = rename_registers(&current, &mut rng);
            current = renamed;
            total_perm = transforms::compose_perms(perm, total_perm);
        }
        if cfg.permute {
            current = permute_blocks(&current, &mut rng);
        }
    }
    MutatedProgram { program: current, reg_perm: total_perm }
}

/// Deterministic per-variant seed: FNV-1a over the family name folded with
/// the master seed and variant index through splitmix64. Stable across
/// platforms and releases so corpora are reproducible from their manifests.
pub fn variant_seed(master_seed: u64, family: &str, index: u32) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in family.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master_seed ^ h ^ (u64::from(index) << 1 | 1))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
