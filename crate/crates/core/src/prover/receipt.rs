//! Receipt types and the canonical `ZKPC` file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ZKPC" | version u16 | image_id 32 | input_digest 32 | exit_code u32
//! | trace_len u64 | trace_root 32 | k u32 | output_len u64 | output
//! | k sampled openings | opening of step 0 | opening of step trace_len-2
//! ```
//!
//! Each opening is `step_index u64 | row_i 105 | path_len u16 | path
//! | row_i1 105 | path_len u16 | path | mem_flag u8` followed, when the flag
//! is 1 (load) or 2 (store), by `address u32 | old_value u32 | 16 digests`.

use thiserror::Error;

use crate::commit::{chain, ClaimBinding, Digest, MemoryWitness, MerklePath, MEMORY_DEPTH};

use super::trace::{TraceRow, ROW_BYTES};

pub const RECEIPT_MAGIC: &[u8; 4] = b"ZKPC";
pub const RECEIPT_VERSION: u16 = 1;
/// Upper bound on `k` accepted by the parser.
pub const MAX_SAMPLES: u32 = 1 << 16;
const MAX_PATH_LEN: u16 = 63;

/// Public statement of a receipt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiptClaim {
    pub image_id: Digest,
    pub input_digest: Digest,
    pub output: Vec<u8>,
    pub exit_code: u32,
    /// Number of trace rows.
    pub trace_len: u64,
    pub trace_root: Digest,
}

impl ReceiptClaim {
    pub fn binding(&self) -> ClaimBinding {
        ClaimBinding {
            image_id: self.image_id,
            input_digest: self.input_digest,
            output_chain: chain(&self.output),
            trace_root: self.trace_root,
            trace_len: self.trace_len,
        }
    }

    /// Index of the last step (the one producing the halted row).
    pub fn last_step(&self) -> u64 {
        self.trace_len.saturating_sub(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemAccess {
    Load,
    Store,
}

impl MemAccess {
    fn flag(self) -> u8 {
        match self {
            MemAccess::Load => 1,
            MemAccess::Store => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryOpening {
    pub access: MemAccess,
    pub witness: MemoryWitness,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowOpening {
    pub row: TraceRow,
    pub path: MerklePath,
}

/// Two adjacent authenticated rows plus the memory witness for the step
/// between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOpening {
    pub step_index: u64,
    pub before: RowOpening,
    pub after: RowOpening,
    pub memory: Option<MemoryOpening>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub claim: ReceiptClaim,
    /// Openings at the transcript-derived steps, in transcript order.
    pub samples: Vec<StepOpening>,
    /// Opening of step 0 (binds the initial row).
    pub first: StepOpening,
    /// Opening of the final step (binds the halted row).
    pub last: StepOpening,
}

impl Receipt {
    pub fn sample_count(&self) -> u32 {
        self.samples.len() as u32
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serialize_receipt(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ParseError> {
        deserialize_receipt(bytes)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("receipt truncated: missing {0}")]
    Truncated(&'static str),
    #[error("bad receipt magic")]
    BadMagic,
    #[error("unsupported receipt version {0}")]
    UnsupportedVersion(u16),
    #[error("invalid {section}: {reason}")]
    Invalid { section: &'static str, reason: String },
    #[error("{0} trailing bytes after the last opening")]
    TrailingBytes(usize),
}

fn put_path(out: &mut Vec<u8>, path: &MerklePath) {
    out.extend_from_slice(&(path.siblings.len() as u16).to_le_bytes());
    for d in &path.siblings {
        out.extend_from_slice(&d.0);
    }
}

fn put_opening(out: &mut Vec<u8>, o: &StepOpening) {
    out.extend_from_slice(&o.step_index.to_le_bytes());
    out.extend_from_slice(&o.before.row.to_bytes());
    put_path(out, &o.before.path);
    out.extend_from_slice(&o.after.row.to_bytes());
    put_path(out, &o.after.path);
    match &o.memory {
        None => out.push(0),
        Some(m) => {
            out.push(m.access.flag());
            out.extend_from_slice(&m.witness.address.to_le_bytes());
            out.extend_from_slice(&m.witness.old_value.to_le_bytes());
            for d in &m.witness.path.siblings {
                out.extend_from_slice(&d.0);
            }
        }
    }
}

pub fn serialize_receipt(r: &Receipt) -> Vec<u8> {
    let c = &r.claim;
    let mut out = Vec::new();
    out.extend_from_slice(RECEIPT_MAGIC);
    out.extend_from_slice(&RECEIPT_VERSION.to_le_bytes());
    out.extend_from_slice(&c.image_id.0);
    out.extend_from_slice(&c.input_digest.0);
    out.extend_from_slice(&c.exit_code.to_le_bytes());
    out.extend_from_slice(&c.trace_len.to_le_bytes());
    out.extend_from_slice(&c.trace_root.0);
    out.extend_from_slice(&r.sample_count().to_le_bytes());
    out.extend_from_slice(&(c.output.len() as u64).to_le_bytes());
    out.extend_from_slice(&c.output);
    for o in r.samples.iter().chain([&r.first, &r.last]) {
        put_opening(&mut out, o);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8], ParseError> {
        if self.bytes.len() - self.pos < n {
            return Err(ParseError::Truncated(section));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, section: &'static str) -> Result<[u8; N], ParseError> {
        Ok(self.take(N, section)?.try_into().unwrap())
    }

    fn u8(&mut self, section: &'static str) -> Result<u8, ParseError> {
        Ok(self.array::<1>(section)?[0])
    }

    fn u16(&mut self, section: &'static str) -> Result<u16, ParseError> {
        Ok(u16::from_le_bytes(self.array(section)?))
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, ParseError> {
        Ok(u32::from_le_bytes(self.array(section)?))
    }

    fn u64(&mut self, section: &'static str) -> Result<u64, ParseError> {
        Ok(u64::from_le_bytes(self.array(section)?))
    }

    fn digest(&mut self, section: &'static str) -> Result<Digest, ParseError> {
        Ok(Digest(self.array(section)?))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn row(&mut self, section: &'static str) -> Result<TraceRow, ParseError> {
        let raw: [u8; ROW_BYTES] = self.array(section)?;
        TraceRow::from_bytes(&raw).ok_or(ParseError::Invalid {
            section,
            reason: format!("halted flag {}", raw[100]),
        })
    }

    fn path(&mut self, leaf_index: u64, section: &'static str) -> Result<MerklePath, ParseError> {
        let len = self.u16(section)?;
        if len > MAX_PATH_LEN {
            return Err(ParseError::Invalid {
                section,
                reason: format!("path length {len}"),
            });
        }
        let siblings = (0..len)
            .map(|_| self.digest(section))
            .collect::<Result<_, _>>()?;
        Ok(MerklePath { leaf_index, siblings })
    }

    fn opening(&mut self) -> Result<StepOpening, ParseError> {
        let step_index = self.u64("opening step index")?;
        let next = step_index.checked_add(1).ok_or(ParseError::Invalid {
            section: "opening step index",
            reason: "overflow".into(),
        })?;
        let before = RowOpening {
            row: self.row("opening row_i")?,
            path: self.path(step_index, "opening row_i path")?,
        };
        let after = RowOpening {
            row: self.row("opening row_i1")?,
            path: self.path(next, "opening row_i1 path")?,
        };
        let access = match self.u8("opening memory flag")? {
            0 => None,
            1 => Some(MemAccess::Load),
            2 => Some(MemAccess::Store),
            f => {
                return Err(ParseError::Invalid {
                    section: "opening memory flag",
                    reason: format!("flag {f}"),
                })
            }
        };
        let memory = match access {
            None => None,
            Some(access) => {
                let address = self.u32("memory witness")?;
                let old_value = self.u32("memory witness")?;
                let siblings = (0..MEMORY_DEPTH)
                    .map(|_| self.digest("memory witness path"))
                    .collect::<Result<_, _>>()?;
                Some(MemoryOpening {
                    access,
                    witness: MemoryWitness {
                        address,
                        old_value,
                        path: MerklePath {
                            leaf_index: address as u64,
                            siblings,
                        },
                    },
                })
            }
        };
        Ok(StepOpening {
            step_index,
            before,
            after,
            memory,
        })
    }
}

pub fn deserialize_receipt(bytes: &[u8]) -> Result<Receipt, ParseError> {
    let mut rd = Reader { bytes, pos: 0 };
    if rd.take(4, "magic")? != RECEIPT_MAGIC {
        return Err(ParseError::BadMagic);
    }
    let version = rd.u16("version")?;
    if version != RECEIPT_VERSION {
        return Err(ParseError::UnsupportedVersion(version));
    }
    let image_id = rd.digest("image id")?;
    let input_digest = rd.digest("input digest")?;
    let exit_code = rd.u32("exit code")?;
    let trace_len = rd.u64("trace length")?;
    if trace_len < 2 {
        return Err(ParseError::Invalid {
            section: "trace length",
            reason: format!("{trace_len} rows"),
        });
    }
    let trace_root = rd.digest("trace root")?;
    let k = rd.u32("sample count")?;
    if k == 0 || k > MAX_SAMPLES {
        return Err(ParseError::Invalid {
            section: "sample count",
            reason: format!("{k}"),
        });
    }
    let output_len = rd.u64("output length")?;
    if output_len > rd.remaining() as u64 {
        return Err(ParseError::Truncated("output"));
    }
    let output = rd.take(output_len as usize, "output")?.to_vec();
    let samples = (0..k).map(|_| rd.opening()).collect::<Result<Vec<_>, _>>()?;
    let first = rd.opening()?;
    let last = rd.opening()?;
    if rd.remaining() != 0 {
        return Err(ParseError::TrailingBytes(rd.remaining()));
    }
    Ok(Receipt {
        claim: ReceiptClaim {
            image_id,
            input_digest,
            output,
            exit_code,
            trace_len,
            trace_root,
        },
        samples,
        first,
        last,
    })
}

/// Byte range of the output section inside a serialized receipt.
pub fn output_section(bytes: &[u8]) -> Option<std::ops::Range<usize>> {
    const OUTPUT_LEN_AT: usize = 4 + 2 + 32 + 32 + 4 + 8 + 32 + 4;
    let len_bytes = bytes.get(OUTPUT_LEN_AT..OUTPUT_LEN_AT + 8)?;
    let len = u64::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
    let start = OUTPUT_LEN_AT + 8;
    (start.checked_add(len)? <= bytes.len()).then_some(start..start + len)
}

/// Replaces the output section of a serialized receipt, fixing up the
/// length field. Everything else is copied verbatim.
pub fn splice_output(bytes: &[u8], new_output: &[u8]) -> Option<Vec<u8>> {
    let range = output_section(bytes)?;
    let mut out = Vec::with_capacity(bytes.len() + new_output.len());
    out.extend_from_slice(&bytes[..range.start - 8]);
    out.extend_from_slice(&(new_output.len() as u64).to_le_bytes());
    out.extend_from_slice(new_output);
    out.extend_from_slice(&bytes[range.end..]);
    Some(out)
}
