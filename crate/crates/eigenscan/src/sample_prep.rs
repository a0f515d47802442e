//! Turning an arbitrary input file into the fixed-length numeric vector the
//! eigenspace operates on.
//!
//! Two extraction modes: `Raw` takes the file bytes as-is, `PeSections`
//! strips the PE headers and concatenates the raw data of every section that
//! is flagged executable or named `.text`/`CODE`. The extracted code is then
//! zero-padded or end-truncated to the model's vector length.

use thiserror::Error;

/// Raw file contents plus a label describing where they came from.
#[derive(Debug, Clone)]
pub struct RawSample {
    pub bytes: Vec<u8>,
    /// Path or synthetic id; never empty.
    pub origin: String,
}

impl RawSample {
    pub fn new(bytes: Vec<u8>, origin: impl Into<String>) -> Self {
        let origin = origin.into();
        assert!(!origin.is_empty(), "sample origin must be non-empty");
        Self { bytes, origin }
    }
}

/// Fixed-length numeric vector: one entry per byte, zero padding at the tail.
/// Every entry is in [0, 255].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    values: Vec<f64>,
}

impl SampleVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Test/tooling constructor for vectors that did not come from bytes.
    /// Callers are responsible for keeping entries in [0, 255] if they want
    /// the byte-vector invariant.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractMode {
    /// Whole file, unchanged.
    Raw,
    /// Executable/`.text`/`CODE` sections of a PE image, headers removed.
    PeSections,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplePrepError {
    #[error("malformed PE image: {0}")]
    MalformedPe(&'static str),
    #[error("no executable, .text or CODE section present")]
    NoCodeSection,
}

/// Extract the code bytes to be vectorized from a sample.
///
/// `Raw` mode is the identity and never fails. `PeSections` mode walks the
/// DOS header → PE signature → COFF header → section table and concatenates,
/// in section-table order, the raw data of every section whose characteristics
/// have the executable bit set or whose name is `.text` or `CODE`. Raw data
/// reaching past the physical end of the file is clipped, not rejected;
/// truncated samples are normal in this domain.
pub fn extract_code(sample: &RawSample, mode: ExtractMode) -> Result<Vec<u8>, SamplePrepError> {
    match mode {
        ExtractMode::Raw => Ok(sample.bytes.clone()),
        ExtractMode::PeSections => extract_pe_sections(&sample.bytes),
    }
}

/// Pad with zeros up to `n`, or chop from the end down to `n`.
///
/// Total for any `code` and `n >= 1`; the result always has exactly `n`
/// entries, each the numeric value of one byte or 0.0 padding.
pub fn to_sample_vector(code: &[u8], n: usize) -> SampleVector {
    assert!(n >= 1, "vector length must be at least 1");
    let mut values = Vec::with_capacity(n);
    values.extend(code.iter().take(n).map(|&b| f64::from(b)));
    values.resize(n, 0.0);
    SampleVector { values }
}

// PE/COFF on-disk layout constants. Only the fields needed to locate section
// raw data are read; this is not a loader.
const DOS_MAGIC: [u8; 2] = *b"MZ";
const PE_SIGNATURE: [u8; 4] = *b"PE\0\0";
const E_LFANEW_OFFSET: usize = 0x3c;
const COFF_HEADER_SIZE: usize = 20;
const SECTION_HEADER_SIZE: usize = 40;
const IMAGE_SCN_MEM_EXECUTE: u32 = 0x2000_0000;

fn read_u16(bytes: &[u8], offset: usize) -> Option<u16> {
    let b = bytes.get(offset..offset + 2)?;
    Some(u16::from_le_bytes([b[0], b[1]]))
}

fn read_u32(bytes: &[u8], offset: usize) -> Option<u32> {
    let b = bytes.get(offset..offset + 4)?;
    Some(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn extract_pe_sections(bytes: &[u8]) -> Result<Vec<u8>, SamplePrepError> {
    use SamplePrepError::MalformedPe;

    if bytes.len() < E_LFANEW_OFFSET + 4 || bytes[..2] != DOS_MAGIC {
        return Err(MalformedPe("missing or short DOS header"));
    }
    let e_lfanew = read_u32(bytes, E_LFANEW_OFFSET).unwrap() as usize;
    let sig = bytes
        .get(e_lfanew..e_lfanew + 4)
        .ok_or(MalformedPe("e_lfanew points past end of file"))?;
    if sig != PE_SIGNATURE {
        return Err(MalformedPe("PE signature mismatch"));
    }

    let coff = e_lfanew + 4;
    let section_count = read_u16(bytes, coff + 2).ok_or(MalformedPe("truncated COFF header"))?;
    let opt_header_size =
        read_u16(bytes, coff + 16).ok_or(MalformedPe("truncated COFF header"))? as usize;

    let table_start = coff + COFF_HEADER_SIZE + opt_header_size;
    let table_end = table_start + section_count as usize * SECTION_HEADER_SIZE;
    if table_end > bytes.len() {
        return Err(MalformedPe("section table out of bounds"));
    }

    let mut code = Vec::new();
    let mut matched = false;
    for i in 0..section_count as usize {
        let entry = table_start + i * SECTION_HEADER_SIZE;
        let name_raw = &bytes[entry..entry + 8];
        let name_end = name_raw.iter().position(|&b| b == 0).unwrap_or(8);
        let name = &name_raw[..name_end];
        let raw_size = read_u32(bytes, entry + 16).unwrap() as usize;
        let raw_ptr = read_u32(bytes, entry + 20).unwrap() as usize;
        let characteristics = read_u32(bytes, entry + 36).unwrap();

        let executable = characteristics & IMAGE_SCN_MEM_EXECUTE != 0;
        if !(executable || name == b".text" || name == b"CODE") {
            continue;
        }
        matched = true;

        // Clip to physical file bounds.
        let start = raw_ptr.min(bytes.len());
        let end = raw_ptr.saturating_add(raw_size).min(bytes.len());
        code.extend_from_slice(&bytes[start..end]);
    }

    if !matched {
        return Err(SamplePrepError::NoCodeSection);
    }
    Ok(code)
}
