//! Bit-exact persistence of a trained model.
//!
//! Single-file little-endian binary layout, versioned, with a trailing CRC-32
//! over everything before it:
//!
//! ```text
//! magic "EIGV" (4) · version u32 · n u64 · m_prime u32 · class_count u32
//! eigenvalues  m_prime × f64
//! basis        m_prime × n × f64, row-major
//! per class    label_len u16 · label utf-8 · replicate_count u32
//!              · weights replicate_count × m_prime × f64 · θ f64 · β f64
//! checksum     u32, CRC-32 of all preceding bytes
//! ```
//!
//! Floats are serialized as their 64-bit patterns, never as text, so a
//! saved-and-reloaded model classifies bit-identically to the original.

use std::io;
use std::path::Path;

use thiserror::Error;

use crate::classifier::{ClassProfile, EigenModel};
use crate::eigencore::{Eigenbasis, WeightVector};

const MAGIC: [u8; 4] = *b"EIGV";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelStoreError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: file is corrupted")]
    ChecksumMismatch,
    #[error("file truncated: {0}")]
    TruncatedFile(&'static str),
    #[error("trailing bytes after checksum")]
    TrailingData,
    #[error("invalid payload: {0}")]
    InvalidPayload(&'static str),
}

/// Serialize a model to its on-disk byte form. Deterministic: the same model
/// always produces the same bytes.
pub fn model_to_bytes(model: &EigenModel) -> Vec<u8> {
    let basis = &model.basis;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(basis.n() as u64).to_le_bytes());
    out.extend_from_slice(&(basis.m_prime() as u32).to_le_bytes());
    out.extend_from_slice(&(model.classes.len() as u32).to_le_bytes());
    for &lambda in basis.eigenvalues() {
        out.extend_from_slice(&lambda.to_le_bytes());
    }
    for vector in basis.vectors() {
        for &x in vector {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    for class in &model.classes {
        let label = class.label.as_bytes();
        assert!(label.len() <= u16::MAX as usize, "class label too long");
        out.extend_from_slice(&(label.len() as u16).to_le_bytes());
        out.extend_from_slice(label);
        out.extend_from_slice(&(class.training_weights.len() as u32).to_le_bytes());
        for weights in &class.training_weights {
            for &w in weights.weights() {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out.extend_from_slice(&class.class_threshold.to_le_bytes());
        out.extend_from_slice(&class.space_threshold.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_model(model: &EigenModel, destination: &Path) -> Result<(), ModelStoreError> {
    std::fs::write(destination, model_to_bytes(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], ModelStoreError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(ModelStoreError::TruncatedFile(what))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, ModelStoreError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ModelStoreError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, ModelStoreError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64_vec(&mut self, count: usize, what: &'static str) -> Result<Vec<f64>, ModelStoreError> {
        let b = self.take(count.checked_mul(8).ok_or(ModelStoreError::TruncatedFile(what))?, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Reconstruct a model from bytes produced by [`model_to_bytes`].
///
/// Structural errors (magic, version, truncation, trailing bytes) are
/// reported before the checksum is consulted, so a short file reads as
/// truncated rather than corrupted.
pub fn model_from_bytes(bytes: &[u8]) -> Result<EigenModel, ModelStoreError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(ModelStoreError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(ModelStoreError::UnsupportedVersion(version));
    }
    let n = usize::try_from(r.u64("vector length")?)
        .map_err(|_| ModelStoreError::InvalidPayload("vector length exceeds address space"))?;
    let m_prime = r.u32("basis width")? as usize;
    let class_count = r.u32("class count")? as usize;
    if n == 0 || m_prime == 0 {
        return Err(ModelStoreError::InvalidPayload("empty basis dimensions"));
    }

    // Reject impossible sizes before allocating anything proportional.
    let payload_len = (m_prime as u64)
        .checked_mul(8)
        .and_then(|ev| (m_prime as u64).checked_mul(n as u64)?.checked_mul(8)?.checked_add(ev))
        .ok_or(ModelStoreError::TruncatedFile("basis payload"))?;
    if payload_len > bytes.len() as u64 {
        return Err(ModelStoreError::TruncatedFile("basis payload"));
    }

    let eigenvalues = r.f64_vec(m_prime, "eigenvalues")?;
    let mut vectors = Vec::with_capacity(m_prime);
    for _ in 0..m_prime {
        vectors.push(r.f64_vec(n, "basis vector")?);
    }

    let mut classes = Vec::with_capacity(class_count.min(1024));
    let mut seen = std::collections::HashSet::new();
    for _ in 0..class_count {
        let label_len = r.u16("label length")? as usize;
        let label = std::str::from_utf8(r.take(label_len, "label")?)
            .map_err(|_| ModelStoreError::InvalidPayload("label is not utf-8"))?
            .to_string();
        if label.is_empty() || !seen.insert(label.clone()) {
            return Err(ModelStoreError::InvalidPayload("empty or duplicate class label"));
        }
        let replicate_count = r.u32("replicate count")? as usize;
        let mut training_weights = Vec::with_capacity(replicate_count.min(65536));
        for _ in 0..replicate_count {
            training_weights.push(WeightVector::new(r.f64_vec(m_prime, "weights")?));
        }
        let class_threshold = f64::from_le_bytes(r.take(8, "class threshold")?.try_into().unwrap());
        let space_threshold = f64::from_le_bytes(r.take(8, "space threshold")?.try_into().unwrap());
        classes.push(ClassProfile { label, training_weights, class_threshold, space_threshold });
    }

    let stored_crc = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(ModelStoreError::TrailingData);
    }
    if crc32fast::hash(&bytes[..bytes.len() - 4]) != stored_crc {
        return Err(ModelStoreError::ChecksumMismatch);
    }

    Ok(EigenModel { basis: Eigenbasis::from_parts(vectors, eigenvalues, n), classes })
}

pub fn load_model(source: &Path) -> Result<EigenModel, ModelStoreError> {
    let bytes = std::fs::read(source)?;
    model_from_bytes(&bytes)
}
