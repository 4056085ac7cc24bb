//! Traced execution: one committed row per machine state.

use std::collections::{BTreeMap, BTreeSet};

use crate::commit::{hash_leaf, Digest, MemoryWitness, MerkleTree, SparseMerkleTree};
use crate::isa::{self, input_words, GuestImage, MachineState, MemOp, MemOpKind, Reg, Trap, NUM_REGS};

use super::ProveError;

pub const ROW_BYTES: usize = 105;

/// Snapshot of the machine before a step. A run of `T` steps has `T + 1`
/// rows; the last one is halted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub pc: u32,
    pub regs: [u32; NUM_REGS],
    pub mem_root: Digest,
    pub out_acc: Digest,
    pub halted: bool,
    pub exit_code: u32,
}

impl TraceRow {
    pub fn capture(state: &MachineState, mem_root: Digest) -> Self {
        TraceRow {
            pc: state.pc,
            regs: state.regs,
            mem_root,
            out_acc: state.out_acc,
            halted: state.halted,
            exit_code: state.exit_code,
        }
    }

    pub fn to_bytes(&self) -> [u8; ROW_BYTES] {
        let mut out = [0u8; ROW_BYTES];
        out[0..4].copy_from_slice(&self.pc.to_le_bytes());
        for (i, r) in self.regs.iter().enumerate() {
            out[4 + 4 * i..8 + 4 * i].copy_from_slice(&r.to_le_bytes());
        }
        out[36..68].copy_from_slice(&self.mem_root.0);
        out[68..100].copy_from_slice(&self.out_acc.0);
        out[100] = self.halted as u8;
        out[101..105].copy_from_slice(&self.exit_code.to_le_bytes());
        out
    }

    /// Parses a row; `None` if the halted byte is not 0 or 1.
    pub fn from_bytes(bytes: &[u8; ROW_BYTES]) -> Option<Self> {
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let digest = |at: usize| Digest(bytes[at..at + 32].try_into().unwrap());
        let halted = match bytes[100] {
            0 => false,
            1 => true,
            _ => return None,
        };
        let mut regs = [0u32; NUM_REGS];
        for (i, r) in regs.iter_mut().enumerate() {
            *r = word(4 + 4 * i);
        }
        Some(TraceRow {
            pc: word(0),
            regs,
            mem_root: digest(36),
            out_acc: digest(68),
            halted,
            exit_code: word(101),
        })
    }

    pub fn leaf_digest(&self) -> Digest {
        hash_leaf(&self.to_bytes())
    }
}

/// Register perturbation applied to the state recorded as row `row`. Used
/// by the adversarial harness to build traces with one bad transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterTamper {
    pub row: u64,
    pub reg: Reg,
    pub xor: u32,
}

/// Callbacks driven by [`walk`].
pub(crate) trait TraceVisitor {
    fn row(&mut self, index: u64, row: &TraceRow);

    /// Called for LW/SW steps with the memory tree as it was before the step.
    fn access(&mut self, _step: u64, _memop: &MemOp, _tree: &SparseMerkleTree) {}
}

/// What a completed walk produced besides the visited rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct WalkSummary {
    pub output: Vec<u8>,
    pub exit_code: u32,
    pub rows: u64,
}

/// Executes the image, maintaining the sparse memory root incrementally and
/// reporting every row. Traps become errors.
pub(crate) fn walk<V: TraceVisitor>(
    image: &GuestImage,
    input: &[u8],
    max_steps: u64,
    tamper: Option<RegisterTamper>,
    visitor: &mut V,
) -> Result<WalkSummary, ProveError> {
    let mut state = MachineState::boot(image, input)?;
    let mut tree = SparseMerkleTree::from_words(crate::commit::MEMORY_DEPTH, input_words(input)?)
        .expect("input region lies inside memory");
    let mut output = Vec::new();
    loop {
        let index = state.step_count;
        if let Some(t) = tamper {
            if t.row == index {
                state.regs[t.reg.index()] ^= t.xor;
            }
        }
        visitor.row(index, &TraceRow::capture(&state, tree.root()));
        if state.halted {
            break;
        }
        if index >= max_steps {
            return Err(Trap::StepBudgetExhausted(max_steps).into());
        }
        let outcome = isa::step(&mut state, image)?;
        output.extend(outcome.written);
        match outcome.memop.kind {
            MemOpKind::None => {}
            MemOpKind::Load => visitor.access(index, &outcome.memop, &tree),
            MemOpKind::Store => {
                visitor.access(index, &outcome.memop, &tree);
                tree.update(outcome.memop.address, outcome.memop.new_value)
                    .expect("address checked by the VM");
            }
        }
    }
    Ok(WalkSummary {
        output,
        exit_code: state.exit_code,
        rows: state.step_count + 1,
    })
}

/// The committed trace of one clean run.
#[derive(Debug, Clone)]
pub struct CommittedTrace {
    pub tree: MerkleTree,
    pub output: Vec<u8>,
    pub exit_code: u32,
}

impl CommittedTrace {
    pub fn root(&self) -> Digest {
        self.tree.root()
    }

    /// Number of rows (steps + 1).
    pub fn len(&self) -> u64 {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }
}

struct LeafCollector(Vec<Digest>);

impl TraceVisitor for LeafCollector {
    fn row(&mut self, _index: u64, row: &TraceRow) {
        self.0.push(row.leaf_digest());
    }
}

pub(crate) fn commit_trace(
    image: &GuestImage,
    input: &[u8],
    max_steps: u64,
    tamper: Option<RegisterTamper>,
) -> Result<CommittedTrace, ProveError> {
    let mut leaves = LeafCollector(Vec::new());
    let summary = walk(image, input, max_steps, tamper, &mut leaves)?;
    if summary.exit_code != 0 {
        return Err(ProveError::GuestFailed {
            exit_code: summary.exit_code,
            output: summary.output,
        });
    }
    Ok(CommittedTrace {
        tree: MerkleTree::from_leaf_digests(leaves.0).expect("a run has at least one row"),
        output: summary.output,
        exit_code: summary.exit_code,
    })
}

/// Runs the guest with trace recording and commits the rows. Refuses runs
/// that trap or halt with a nonzero exit code.
pub fn execute_traced(image: &GuestImage, input: &[u8], max_steps: u64) -> Result<CommittedTrace, ProveError> {
    commit_trace(image, input, max_steps, None)
}

/// All rows of a run, for inspection of small programs. Does not require a
/// clean exit.
pub fn trace_rows(image: &GuestImage, input: &[u8], max_steps: u64) -> Result<Vec<TraceRow>, ProveError> {
    struct Rows(Vec<TraceRow>);
    impl TraceVisitor for Rows {
        fn row(&mut self, _index: u64, row: &TraceRow) {
            self.0.push(*row);
        }
    }
    let mut rows = Rows(Vec::new());
    walk(image, input, max_steps, None, &mut rows)?;
    Ok(rows.0)
}

/// Rows and memory witnesses gathered for a set of steps during the second
/// execution pass.
#[derive(Debug, Default)]
pub(crate) struct StepCapture {
    wanted: BTreeSet<u64>,
    pub rows: BTreeMap<u64, TraceRow>,
    pub witnesses: BTreeMap<u64, (MemOpKind, MemoryWitness)>,
}

impl StepCapture {
    pub fn new<I: IntoIterator<Item = u64>>(steps: I) -> Self {
        StepCapture {
            wanted: steps.into_iter().collect(),
            ..Default::default()
        }
    }
}

impl TraceVisitor for StepCapture {
    fn row(&mut self, index: u64, row: &TraceRow) {
        let needed = self.wanted.contains(&index) || (index > 0 && self.wanted.contains(&(index - 1)));
        if needed {
            self.rows.insert(index, *row);
        }
    }

    fn access(&mut self, step: u64, memop: &MemOp, tree: &SparseMerkleTree) {
        if self.wanted.contains(&step) {
            let witness = tree.witness(memop.address).expect("address checked by the VM");
            self.witnesses.insert(step, (memop.kind, witness));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commit::{chain, chain_init, sparse_memory_root};
    use crate::isa::{r, Instruction, Opcode};

    fn img(instrs: &[Instruction]) -> GuestImage {
        GuestImage::from_instructions(instrs, 0).unwrap()
    }

    #[test]
    fn row_layout_is_105_bytes() {
        let row = TraceRow {
            pc: 0x0403_0201,
            regs: [1, 2, 3, 4, 5, 6, 7, 8],
            mem_root: Digest([0xAA; 32]),
            out_acc: Digest([0xBB; 32]),
            halted: true,
            exit_code: 0x0D0C_0B0A,
        };
        let bytes = row.to_bytes();
        assert_eq!(&bytes[0..4], &[1, 2, 3, 4]);
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[36], 0xAA);
        assert_eq!(bytes[68], 0xBB);
        assert_eq!(bytes[100], 1);
        assert_eq!(&bytes[101..], &[0x0A, 0x0B, 0x0C, 0x0D]);
        assert_eq!(TraceRow::from_bytes(&bytes), Some(row));
        let mut bad = bytes;
        bad[100] = 2;
        assert_eq!(TraceRow::from_bytes(&bad), None);
    }

    #[test]
    fn single_halt_trace() {
        let image = img(&[Instruction::halt(r(0))]);
        let rows = trace_rows(&image, b"", 10).unwrap();
        assert_eq!(rows.len(), 2);
        let (r0, r1) = (rows[0], rows[1]);
        assert_eq!(r0.pc, 0);
        assert_eq!(r0.regs, [0; 8]);
        assert_eq!(r0.out_acc, chain_init());
        assert_eq!(r0.mem_root, sparse_memory_root(std::iter::empty()).unwrap());
        assert!(!r0.halted && r1.halted);
        assert_eq!(TraceRow { halted: false, ..r1 }, r0);
        let committed = execute_traced(&image, b"", 10).unwrap();
        assert_eq!(committed.len(), 2);
    }

    #[test]
    fn incremental_memory_roots_match_recomputation() {
        // Store a few words, then halt.
        let mut prog = Vec::new();
        for (addr, val) in [(3, 7), (0x200, 9), (3, 0), (0xFFFF, 1)] {
            prog.push(Instruction::addi(r(1), r(0), val));
            prog.push(Instruction::lui(r(2), if addr == 0xFFFF { 1 } else { 0 }));
            prog.push(Instruction::btype(Opcode::Sw, r(2), r(1), if addr == 0xFFFF { -1 } else { addr }));
        }
        prog.push(Instruction::halt(r(0)));
        let image = img(&prog);
        let rows = trace_rows(&image, b"xy", 100).unwrap();
        let mut mem = isa::init_memory(&image, b"xy").unwrap();
        let mut state = MachineState::boot(&image, b"xy").unwrap();
        for row in &rows {
            assert_eq!(row.mem_root, sparse_memory_root(mem.nonzero()).unwrap());
            if !state.halted {
                isa::step(&mut state, &image).unwrap();
                mem = state.memory.clone();
            }
        }
    }

    #[test]
    fn final_accumulator_is_output_chain() {
        let image = img(&[Instruction::addi(r(1), r(0), 72), Instruction::write(r(1)), Instruction::halt(r(0))]);
        let rows = trace_rows(&image, b"", 10).unwrap();
        assert_eq!(rows.last().unwrap().out_acc, chain(b"H"));
        assert_eq!(execute_traced(&image, b"", 10).unwrap().output, b"H");
    }

    #[test]
    fn failed_runs_are_refused() {
        let exit1 = img(&[Instruction::addi(r(1), r(0), 1), Instruction::halt(r(1))]);
        assert!(matches!(
            execute_traced(&exit1, b"", 10),
            Err(ProveError::GuestFailed { exit_code: 1, .. })
        ));
        let spin = img(&[Instruction::jal(r(0), -1)]);
        assert!(matches!(
            execute_traced(&spin, b"", 10),
            Err(ProveError::Trap(Trap::StepBudgetExhausted(10)))
        ));
    }
}
