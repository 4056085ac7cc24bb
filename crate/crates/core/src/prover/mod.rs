//! Proving: run the guest with trace recording, commit the trace, derive
//! the sample transcript from the fixed claim, and open the sampled steps.

mod receipt;
mod trace;

use thiserror::Error;

pub use receipt::{
    deserialize_receipt, output_section, serialize_receipt, splice_output, MemAccess, MemoryOpening, ParseError,
    Receipt, ReceiptClaim, RowOpening, StepOpening, MAX_SAMPLES, RECEIPT_MAGIC, RECEIPT_VERSION,
};
pub use trace::{execute_traced, trace_rows, CommittedTrace, RegisterTamper, TraceRow, ROW_BYTES};

pub(crate) use trace::walk;

use crate::commit::{derive_samples, sha256, CommitError};
use crate::isa::{compute_image_id, CapacityError, GuestImage, MemOpKind, Trap, DEFAULT_MAX_STEPS};

pub const DEFAULT_SAMPLES: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProveError {
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error("guest trapped: {0}")]
    Trap(#[from] Trap),
    #[error("guest exited with code {exit_code}; no receipt for failed runs")]
    GuestFailed { exit_code: u32, output: Vec<u8> },
    #[error("sample count must be between 1 and {MAX_SAMPLES}")]
    BadSampleCount,
    #[error(transparent)]
    Commit(#[from] CommitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProveOptions {
    pub samples: u32,
    pub max_steps: u64,
}

impl Default for ProveOptions {
    fn default() -> Self {
        ProveOptions {
            samples: DEFAULT_SAMPLES,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Proves that `image` compiled `source` with `k` sampled openings.
pub fn prove(image: &GuestImage, source: &[u8], k: u32) -> Result<Receipt, ProveError> {
    prove_with(
        image,
        source,
        ProveOptions {
            samples: k,
            ..Default::default()
        },
    )
}

pub fn prove_with(image: &GuestImage, source: &[u8], opts: ProveOptions) -> Result<Receipt, ProveError> {
    prove_inner(image, source, opts, None)
}

/// Proves a run whose recorded state is perturbed at one row. The result is
/// a well-formed receipt for a trace with (typically) one invalid
/// transition; only the adversarial harness has a use for it.
pub fn prove_tampered(
    image: &GuestImage,
    source: &[u8],
    opts: ProveOptions,
    tamper: RegisterTamper,
) -> Result<Receipt, ProveError> {
    prove_inner(image, source, opts, Some(tamper))
}

fn prove_inner(
    image: &GuestImage,
    source: &[u8],
    opts: ProveOptions,
    tamper: Option<RegisterTamper>,
) -> Result<Receipt, ProveError> {
    if opts.samples == 0 || opts.samples > MAX_SAMPLES {
        return Err(ProveError::BadSampleCount);
    }
    let committed = trace::commit_trace(image, source, opts.max_steps, tamper)?;
    let claim = ReceiptClaim {
        image_id: compute_image_id(image),
        input_digest: sha256(source),
        output: committed.output.clone(),
        exit_code: committed.exit_code,
        trace_len: committed.len(),
        trace_root: committed.root(),
    };
    // The root is fixed above; only now may the challenges be drawn.
    let indices = derive_samples(&claim.binding(), opts.samples)?;
    let last_step = claim.last_step();

    let mut capture = trace::StepCapture::new(indices.iter().copied().chain([0, last_step]));
    walk(image, source, opts.max_steps, tamper, &mut capture)?;

    let open = |step: u64| -> StepOpening {
        let row_at = |i: u64| RowOpening {
            row: capture.rows[&i],
            path: committed.tree.open(i).expect("row index inside trace"),
        };
        let memory = capture.witnesses.get(&step).map(|(kind, w)| MemoryOpening {
            access: match kind {
                MemOpKind::Load => MemAccess::Load,
                _ => MemAccess::Store,
            },
            witness: w.clone(),
        });
        StepOpening {
            step_index: step,
            before: row_at(step),
            after: row_at(step + 1),
            memory,
        }
    };
    Ok(Receipt {
        samples: indices.iter().map(|&i| open(i)).collect(),
        first: open(0),
        last: open(last_step),
        claim,
    })
}
