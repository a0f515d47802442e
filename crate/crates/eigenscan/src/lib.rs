//! Recognition of metamorphic binary families by projection into a PCA
//! eigenspace, plus a toy-ISA mutation engine that generates provably
//! behavior-preserving variants to train and evaluate against.
//!
//! The pipeline: [`sample_prep`] turns files into fixed-length byte vectors,
//! [`eigencore`] builds an orthonormal eigenbasis from the training matrix
//! using the M×M Gram trick, [`classifier`] calibrates per-class distance
//! thresholds and classifies new samples, and [`model_store`] persists the
//! trained model bit-exactly. [`mutation_engine`] is the corpus side: a small
//! register ISA, an interpreter used as a semantic-equivalence oracle, and
//! five classic metamorphism transforms.

pub mod classifier;
pub mod eigencore;
pub mod model_store;
pub mod mutation_engine;
pub mod sample_prep;

pub use classifier::{ClassProfile, Decision, DecisionCase, EigenModel, Verdict};
pub use eigencore::{Eigenbasis, TrainingMatrix, WeightVector};
pub use sample_prep::{RawSample, SampleVector};
