//! Receipt verification against an agreed compiler identity and a claimed
//! source.
//!
//! Checks run in a fixed order and the first failing class is reported:
//! source digest, image binding, transcript, boundary rows, Merkle paths,
//! transitions. Within a class every opening is examined before moving on,
//! so the reported class never depends on opening order.

use std::fmt;

use crate::commit::{chain, chain_init, derive_samples, sha256, tree_depth, verify_digest_path, Digest, MemoryWitness, SparseMerkleTree, MEMORY_DEPTH};
use crate::isa::{compute_image_id, execute, fetch, input_words, DataMemory, GuestImage, Opcode, DEFAULT_MAX_STEPS};
use crate::prover::{execute_traced, MemAccess, Receipt, RowOpening, StepOpening, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureClass {
    SourceDigestMismatch,
    ImageBindingFailure,
    BoundaryViolation,
    TranscriptMismatch,
    PathFailure,
    TransitionViolation,
    OutputChainMismatch,
    MalformedReceipt,
}

impl FailureClass {
    pub fn token(self) -> &'static str {
        match self {
            FailureClass::SourceDigestMismatch => "SourceDigestMismatch",
            FailureClass::ImageBindingFailure => "ImageBindingFailure",
            FailureClass::BoundaryViolation => "BoundaryViolation",
            FailureClass::TranscriptMismatch => "TranscriptMismatch",
            FailureClass::PathFailure => "PathFailure",
            FailureClass::TransitionViolation => "TransitionViolation",
            FailureClass::OutputChainMismatch => "OutputChainMismatch",
            FailureClass::MalformedReceipt => "MalformedReceipt",
        }
    }
}

impl fmt::Display for FailureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Outcome of a verification. `failure` is `None` exactly when accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub failure: Option<FailureClass>,
    pub detail: String,
}

impl VerifyReport {
    fn accept() -> Self {
        VerifyReport {
            failure: None,
            detail: String::new(),
        }
    }

    pub fn reject(class: FailureClass, detail: impl Into<String>) -> Self {
        VerifyReport {
            failure: Some(class),
            detail: detail.into(),
        }
    }

    pub fn accepted(&self) -> bool {
        self.failure.is_none()
    }

    /// Token naming the failure class, or `none`.
    pub fn class_token(&self) -> &'static str {
        self.failure.map_or("none", FailureClass::token)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.failure {
            None => write!(f, "ACCEPT class=none"),
            Some(c) => write!(f, "REJECT class={c} detail={}", self.detail),
        }
    }
}

type Check = Result<(), (FailureClass, String)>;

fn fail(class: FailureClass, detail: impl Into<String>) -> Check {
    Err((class, detail.into()))
}

fn report(check: Check) -> VerifyReport {
    match check {
        Ok(()) => VerifyReport::accept(),
        Err((class, detail)) => VerifyReport::reject(class, detail),
    }
}

fn openings(receipt: &Receipt) -> impl Iterator<Item = &StepOpening> {
    receipt.samples.iter().chain([&receipt.first, &receipt.last])
}

fn check_source(receipt: &Receipt, source: &[u8]) -> Check {
    if sha256(source) != receipt.claim.input_digest {
        return fail(
            FailureClass::SourceDigestMismatch,
            "digest of the presented source differs from the committed input digest",
        );
    }
    Ok(())
}

fn check_image(receipt: &Receipt, expected_image_id: &Digest, image: &GuestImage) -> Check {
    if receipt.claim.image_id != *expected_image_id {
        return fail(
            FailureClass::ImageBindingFailure,
            format!("receipt names image {}, expected {}", receipt.claim.image_id, expected_image_id),
        );
    }
    if compute_image_id(image) != *expected_image_id {
        return fail(
            FailureClass::ImageBindingFailure,
            "supplied image does not hash to the agreed image id",
        );
    }
    Ok(())
}

fn check_transcript(receipt: &Receipt) -> Check {
    let claim = &receipt.claim;
    let expected = derive_samples(&claim.binding(), receipt.sample_count())
        .map_err(|e| (FailureClass::TranscriptMismatch, e.to_string()))?;
    let got: Vec<u64> = receipt.samples.iter().map(|o| o.step_index).collect();
    if got != expected {
        return fail(
            FailureClass::TranscriptMismatch,
            "opened steps differ from the transcript-derived samples",
        );
    }
    if receipt.first.step_index != 0 || receipt.last.step_index != claim.last_step() {
        return fail(FailureClass::TranscriptMismatch, "boundary openings at wrong steps");
    }
    Ok(())
}

/// Row 0 as determined by the image entry point and the public source.
pub fn expected_initial_row(image: &GuestImage, source: &[u8]) -> Option<TraceRow> {
    let words = input_words(source).ok()?;
    let mem_root = SparseMerkleTree::from_words(MEMORY_DEPTH, words).ok()?.root();
    Some(TraceRow {
        pc: image.entry_pc(),
        regs: [0; 8],
        mem_root,
        out_acc: chain_init(),
        halted: false,
        exit_code: 0,
    })
}

fn check_boundary(receipt: &Receipt, image: &GuestImage, source: &[u8]) -> Check {
    let claim = &receipt.claim;
    if claim.exit_code != 0 {
        return fail(FailureClass::BoundaryViolation, format!("claimed exit code {}", claim.exit_code));
    }
    let initial = match expected_initial_row(image, source) {
        Some(row) => row,
        None => return fail(FailureClass::BoundaryViolation, "source exceeds the input region"),
    };
    let last = claim.last_step();
    let output_chain = chain(&claim.output);
    let mut chain_ok = true;
    for o in openings(receipt) {
        if o.step_index == 0 && o.before.row != initial {
            return fail(FailureClass::BoundaryViolation, "row 0 is not the initial state for this source");
        }
        if o.step_index == last {
            let fin = &o.after.row;
            if !fin.halted || fin.exit_code != 0 {
                return fail(FailureClass::BoundaryViolation, "final row is not a clean halt");
            }
            chain_ok &= fin.out_acc == output_chain;
        }
    }
    if !chain_ok {
        return fail(
            FailureClass::OutputChainMismatch,
            "final output accumulator does not commit to the claimed output",
        );
    }
    Ok(())
}

fn row_path_ok(root: &Digest, depth: usize, index: u64, ro: &RowOpening) -> bool {
    ro.path.depth() == depth && verify_digest_path(root, index, ro.row.leaf_digest(), &ro.path)
}

fn paths_ok(opening: &StepOpening, root: &Digest, depth: Option<usize>) -> bool {
    let i = opening.step_index;
    let Some(next) = i.checked_add(1) else {
        return false;
    };
    let depth_of = |ro: &RowOpening| depth.unwrap_or(ro.path.depth());
    row_path_ok(root, depth_of(&opening.before), i, &opening.before)
        && row_path_ok(root, depth_of(&opening.after), next, &opening.after)
}

fn check_paths(receipt: &Receipt) -> Check {
    let depth = tree_depth(receipt.claim.trace_len);
    for o in openings(receipt) {
        if !paths_ok(o, &receipt.claim.trace_root, Some(depth)) {
            return fail(
                FailureClass::PathFailure,
                format!("rows of step {} do not authenticate against the trace root", o.step_index),
            );
        }
    }
    Ok(())
}

/// Memory backed by a single witnessed word. Any access other than the
/// witnessed address, or with a witness that fails against the root, is
/// refused.
struct WitnessMemory<'a> {
    root: Digest,
    witness: Option<&'a MemoryWitness>,
    stored: Option<u32>,
}

impl WitnessMemory<'_> {
    fn authentic(&self, address: u32) -> Option<&MemoryWitness> {
        self.witness
            .filter(|w| w.address == address && w.verify_old(&self.root))
    }
}

impl DataMemory for WitnessMemory<'_> {
    fn load(&mut self, address: u32) -> Option<u32> {
        self.authentic(address).map(|w| w.old_value)
    }

    fn store(&mut self, address: u32, value: u32) -> Option<u32> {
        let old = self.authentic(address)?.old_value;
        self.stored = Some(value);
        Some(old)
    }
}

/// Re-executes the instruction at `before.pc` and compares with `after`.
pub(crate) fn step_matches(opening: &StepOpening, image: &GuestImage) -> Result<(), String> {
    let before = &opening.before.row;
    let after = &opening.after.row;
    if before.halted {
        return Err("step taken from a halted row".into());
    }
    if before.regs[0] != 0 {
        return Err("register 0 is nonzero".into());
    }
    let instr = fetch(image, before.pc).map_err(|t| t.to_string())?;
    let expected_access = match instr.op {
        Opcode::Lw => Some(MemAccess::Load),
        Opcode::Sw => Some(MemAccess::Store),
        _ => None,
    };
    if opening.memory.as_ref().map(|m| m.access) != expected_access {
        return Err(format!("memory witness does not match {}", instr.op));
    }
    let mut mem = WitnessMemory {
        root: before.mem_root,
        witness: opening.memory.as_ref().map(|m| &m.witness),
        stored: None,
    };
    let mut regs = before.regs;
    let effect = execute(&instr, before.pc, &mut regs, &mut mem).map_err(|t| t.to_string())?;
    let mem_root = match (mem.stored, mem.witness) {
        (Some(v), Some(w)) => w.root_after(v),
        _ => before.mem_root,
    };
    let out_acc = match effect.written {
        Some(b) => crate::commit::chain_extend(&before.out_acc, b),
        None => before.out_acc,
    };
    let expected = TraceRow {
        pc: effect.next_pc,
        regs,
        mem_root,
        out_acc,
        halted: effect.halt.is_some(),
        exit_code: effect.halt.unwrap_or(before.exit_code),
    };
    if expected != *after {
        return Err(format!("`{instr}` at pc {} does not produce the next row", before.pc));
    }
    Ok(())
}

fn check_transitions(receipt: &Receipt, image: &GuestImage) -> Check {
    for o in openings(receipt) {
        if let Err(why) = step_matches(o, image) {
            return fail(FailureClass::TransitionViolation, format!("step {}: {why}", o.step_index));
        }
    }
    Ok(())
}

/// True iff both rows authenticate against `trace_root` and the agreed
/// image steps the first row to exactly the second.
pub fn check_transition(opening: &StepOpening, image: &GuestImage, trace_root: &Digest) -> bool {
    paths_ok(opening, trace_root, None) && step_matches(opening, image).is_ok()
}

/// Sampled verification. `image` is the compiler image exchanged at the
/// handshake; it must hash to `expected_image_id`.
pub fn verify(receipt: &Receipt, expected_image_id: &Digest, source: &[u8], image: &GuestImage) -> VerifyReport {
    report((|| {
        check_source(receipt, source)?;
        check_image(receipt, expected_image_id, image)?;
        check_transcript(receipt)?;
        check_boundary(receipt, image, source)?;
        check_paths(receipt)?;
        check_transitions(receipt, image)
    })())
}

/// Parses and verifies a serialized receipt.
pub fn verify_bytes(bytes: &[u8], expected_image_id: &Digest, source: &[u8], image: &GuestImage) -> VerifyReport {
    match Receipt::from_bytes(bytes) {
        Ok(r) => verify(&r, expected_image_id, source, image),
        Err(e) => VerifyReport::reject(FailureClass::MalformedReceipt, e.to_string()),
    }
}

fn check_reexecution(receipt: &Receipt, image: &GuestImage, source: &[u8]) -> Check {
    let claim = &receipt.claim;
    let trace = match execute_traced(image, source, DEFAULT_MAX_STEPS.max(claim.trace_len)) {
        Ok(t) => t,
        Err(e) => return fail(FailureClass::BoundaryViolation, format!("re-execution failed: {e}")),
    };
    if trace.output != claim.output {
        return fail(FailureClass::OutputChainMismatch, "re-executed output differs from the claim");
    }
    if trace.exit_code != claim.exit_code {
        return fail(FailureClass::BoundaryViolation, "re-executed exit code differs from the claim");
    }
    if trace.len() != claim.trace_len || trace.root() != claim.trace_root {
        return fail(FailureClass::TransitionViolation, "re-executed trace commitment differs from the claim");
    }
    Ok(())
}

/// Oracle mode: re-executes the guest, requires the claim to match the
/// honest run exactly, then applies every sampled check.
pub fn verify_full(receipt: &Receipt, expected_image_id: &Digest, source: &[u8], image: &GuestImage) -> VerifyReport {
    report((|| {
        check_source(receipt, source)?;
        check_image(receipt, expected_image_id, image)?;
        check_transcript(receipt)?;
        check_reexecution(receipt, image, source)?;
        check_boundary(receipt, image, source)?;
        check_paths(receipt)?;
        check_transitions(receipt, image)
    })())
}

/// Parses a serialized receipt and runs [`verify_full`].
pub fn verify_full_bytes(bytes: &[u8], expected_image_id: &Digest, source: &[u8], image: &GuestImage) -> VerifyReport {
    match Receipt::from_bytes(bytes) {
        Ok(r) => verify_full(&r, expected_image_id, source, image),
        Err(e) => VerifyReport::reject(FailureClass::MalformedReceipt, e.to_string()),
    }
}
