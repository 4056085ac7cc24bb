//! Cryptographic substrate: SHA-256 digests, dense and sparse Merkle trees,
//! the output hash-chain and Fiat-Shamir sample derivation.
//!
//! Every hash is domain separated by a one-byte prefix so that a leaf can
//! never be confused with an interior node, a chain link, an image digest
//! or a transcript seed.

use std::collections::HashMap;
use std::fmt;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const LEAF_PREFIX: u8 = 0x00;
pub const NODE_PREFIX: u8 = 0x01;
pub const CHAIN_PREFIX: u8 = 0x02;
pub const IMAGE_PREFIX: u8 = 0x03;
pub const TRANSCRIPT_PREFIX: u8 = 0x04;

/// Depth of the sparse tree committing to guest data memory (2^16 words).
pub const MEMORY_DEPTH: usize = 16;

/// ASCII seed hashed to obtain the initial output accumulator.
pub const CHAIN_INIT_TAG: &[u8] = b"ZKPC.out.init";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommitError {
    #[error("cannot build a Merkle tree over zero leaves")]
    EmptyTree,
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: u64, len: u64 },
    #[error("memory address {address:#x} outside the {depth}-bit address space")]
    AddressOutOfRange { address: u64, depth: usize },
    #[error("sample count must be positive")]
    ZeroSamples,
    #[error("trace of {0} rows is too short to sample (need at least 2)")]
    TraceTooShort(u64),
}

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const LEN: usize = 32;

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut out).ok()?;
        Some(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<[u8; 32]> for Digest {
    fn from(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }
}

/// Plain SHA-256 with no domain prefix (used for source digests).
pub fn sha256(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

fn sha256_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

pub fn hash_leaf(data: &[u8]) -> Digest {
    sha256_parts(&[&[LEAF_PREFIX], data])
}

pub fn hash_node(left: &Digest, right: &Digest) -> Digest {
    sha256_parts(&[&[NODE_PREFIX], &left.0, &right.0])
}

/// Leaf digest of one little-endian memory word.
pub fn word_leaf(value: u32) -> Digest {
    hash_leaf(&value.to_le_bytes())
}

pub fn chain_init() -> Digest {
    sha256(CHAIN_INIT_TAG)
}

pub fn chain_extend(acc: &Digest, byte: u8) -> Digest {
    sha256_parts(&[&[CHAIN_PREFIX], &acc.0, &[byte]])
}

/// Folds `chain_extend` over `bytes`, starting from the initial accumulator.
pub fn chain(bytes: &[u8]) -> Digest {
    bytes.iter().fold(chain_init(), |acc, &b| chain_extend(&acc, b))
}

/// Authentication path from a leaf to the root. Siblings are ordered from
/// the leaf level upwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerklePath {
    pub leaf_index: u64,
    pub siblings: Vec<Digest>,
}

impl MerklePath {
    pub fn depth(&self) -> usize {
        self.siblings.len()
    }

    /// Recomputes the root implied by `leaf` sitting at `leaf_index`.
    pub fn root_from_leaf(&self, leaf: Digest) -> Digest {
        let mut idx = self.leaf_index;
        let mut acc = leaf;
        for sib in &self.siblings {
            acc = if idx & 1 == 0 {
                hash_node(&acc, sib)
            } else {
                hash_node(sib, &acc)
            };
            idx >>= 1;
        }
        acc
    }
}

/// Checks `path` for the leaf digest `leaf` at `index` against `root`.
pub fn verify_digest_path(root: &Digest, index: u64, leaf: Digest, path: &MerklePath) -> bool {
    if path.leaf_index != index || path.depth() >= 64 || index >> path.depth() != 0 {
        return false;
    }
    path.root_from_leaf(leaf) == *root
}

pub fn verify_path(root: &Digest, index: u64, leaf_bytes: &[u8], path: &MerklePath) -> bool {
    verify_digest_path(root, index, hash_leaf(leaf_bytes), path)
}

/// Dense binary Merkle tree. The leaf level is padded to the next power of
/// two with `hash_leaf(&[])`.
#[derive(Debug, Clone)]
pub struct MerkleTree {
    // levels[0] holds the padded leaf digests, the last level the root.
    levels: Vec<Vec<Digest>>,
    len: u64,
}

impl MerkleTree {
    pub fn build<L: AsRef<[u8]>>(leaves: &[L]) -> Result<Self, CommitError> {
        Self::from_leaf_digests(leaves.iter().map(|l| hash_leaf(l.as_ref())).collect())
    }

    pub fn from_leaf_digests(mut leaves: Vec<Digest>) -> Result<Self, CommitError> {
        if leaves.is_empty() {
            return Err(CommitError::EmptyTree);
        }
        let len = leaves.len() as u64;
        let padded = leaves.len().next_power_of_two();
        leaves.resize(padded, hash_leaf(&[]));
        let mut levels = vec![leaves];
        while levels.last().map_or(0, Vec::len) > 1 {
            let next = levels
                .last()
                .unwrap()
                .chunks_exact(2)
                .map(|pair| hash_node(&pair[0], &pair[1]))
                .collect();
            levels.push(next);
        }
        Ok(MerkleTree { levels, len })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Number of leaves supplied before padding.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn padded_len(&self) -> u64 {
        self.levels[0].len() as u64
    }

    pub fn leaf(&self, index: u64) -> Option<Digest> {
        self.levels[0].get(index as usize).copied()
    }

    pub fn open(&self, index: u64) -> Result<MerklePath, CommitError> {
        if index >= self.padded_len() {
            return Err(CommitError::IndexOutOfRange {
                index,
                len: self.padded_len(),
            });
        }
        let mut idx = index as usize;
        let siblings = self.levels[..self.depth()]
            .iter()
            .map(|level| {
                let sib = level[idx ^ 1];
                idx >>= 1;
                sib
            })
            .collect();
        Ok(MerklePath {
            leaf_index: index,
            siblings,
        })
    }
}

pub fn build_tree<L: AsRef<[u8]>>(leaves: &[L]) -> Result<(Digest, MerkleTree), CommitError> {
    let tree = MerkleTree::build(leaves)?;
    Ok((tree.root(), tree))
}

/// Depth of the tree committing to `len` leaves.
pub fn tree_depth(len: u64) -> usize {
    len.max(1).next_power_of_two().trailing_zeros() as usize
}

/// Roots of all-zero subtrees: `zero_subtrees(d)[h]` is the root of an
/// all-zero-word subtree of height `h`.
pub fn zero_subtrees(depth: usize) -> Vec<Digest> {
    let mut out = Vec::with_capacity(depth + 1);
    out.push(word_leaf(0));
    for h in 0..depth {
        let z = out[h];
        out.push(hash_node(&z, &z));
    }
    out
}

/// Witness for a single memory access: the value held before the access and
/// its authentication path. The same path authenticates the new value under
/// the post-access root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryWitness {
    pub address: u32,
    pub old_value: u32,
    pub path: MerklePath,
}

impl MemoryWitness {
    pub fn verify_old(&self, root: &Digest) -> bool {
        verify_digest_path(root, self.address as u64, word_leaf(self.old_value), &self.path)
    }

    /// Root obtained by writing `new_value` along the witnessed path.
    pub fn root_after(&self, new_value: u32) -> Digest {
        self.path.root_from_leaf(word_leaf(new_value))
    }
}

/// Fixed-depth sparse Merkle tree over word-addressed memory. Only populated
/// nodes are stored; everything else falls back to the zero subtrees.
#[derive(Debug, Clone)]
pub struct SparseMerkleTree {
    depth: usize,
    zeros: Vec<Digest>,
    // nodes[h] maps a node index at height h to its digest.
    nodes: Vec<HashMap<u64, Digest>>,
    values: HashMap<u64, u32>,
}

impl SparseMerkleTree {
    pub fn new(depth: usize) -> Self {
        assert!(depth < 64, "sparse tree depth must be below 64");
        SparseMerkleTree {
            depth,
            zeros: zero_subtrees(depth),
            nodes: vec![HashMap::new(); depth + 1],
            values: HashMap::new(),
        }
    }

    /// Tree over the guest data address space.
    pub fn memory() -> Self {
        Self::new(MEMORY_DEPTH)
    }

    pub fn from_words<I>(depth: usize, words: I) -> Result<Self, CommitError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut tree = Self::new(depth);
        for (addr, value) in words {
            tree.update(addr, value)?;
        }
        Ok(tree)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn root(&self) -> Digest {
        self.node(self.depth, 0)
    }

    pub fn value(&self, address: u32) -> u32 {
        self.values.get(&(address as u64)).copied().unwrap_or(0)
    }

    fn node(&self, height: usize, index: u64) -> Digest {
        self.nodes[height]
            .get(&index)
            .copied()
            .unwrap_or(self.zeros[height])
    }

    fn check(&self, address: u32) -> Result<u64, CommitError> {
        let a = address as u64;
        if a >> self.depth != 0 {
            return Err(CommitError::AddressOutOfRange {
                address: a,
                depth: self.depth,
            });
        }
        Ok(a)
    }

    pub fn path(&self, address: u32) -> Result<MerklePath, CommitError> {
        let a = self.check(address)?;
        let siblings = (0..self.depth)
            .map(|h| self.node(h, (a >> h) ^ 1))
            .collect();
        Ok(MerklePath {
            leaf_index: a,
            siblings,
        })
    }

    pub fn witness(&self, address: u32) -> Result<MemoryWitness, CommitError> {
        Ok(MemoryWitness {
            address,
            old_value: self.value(address),
            path: self.path(address)?,
        })
    }

    /// Writes `value` at `address`, returning the new root and a witness for
    /// the pre-write value.
    pub fn update(&mut self, address: u32, value: u32) -> Result<(Digest, MemoryWitness), CommitError> {
        let witness = self.witness(address)?;
        let a = address as u64;
        self.values.insert(a, value);
        let mut acc = word_leaf(value);
        self.nodes[0].insert(a, acc);
        for h in 0..self.depth {
            let sib = witness.path.siblings[h];
            acc = if (a >> h) & 1 == 0 {
                hash_node(&acc, &sib)
            } else {
                hash_node(&sib, &acc)
            };
            self.nodes[h + 1].insert(a >> (h + 1), acc);
        }
        Ok((acc, witness))
    }
}

/// Root of the depth-16 memory tree holding `memory`; absent words are zero.
pub fn sparse_memory_root<I>(memory: I) -> Result<Digest, CommitError>
where
    I: IntoIterator<Item = (u32, u32)>,
{
    Ok(SparseMerkleTree::from_words(MEMORY_DEPTH, memory)?.root())
}

/// Functional form of [`SparseMerkleTree::update`].
pub fn sparse_update(
    tree: &mut SparseMerkleTree,
    address: u32,
    new_value: u32,
) -> Result<(Digest, MemoryWitness), CommitError> {
    tree.update(address, new_value)
}

/// The claim fields that seed the sample transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaimBinding {
    pub image_id: Digest,
    pub input_digest: Digest,
    pub output_chain: Digest,
    pub trace_root: Digest,
    pub trace_len: u64,
}

/// Non-interactive challenge source bound to a full claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transcript {
    seed: Digest,
    sample_count: u32,
}

impl Transcript {
    pub fn new(claim: &ClaimBinding, sample_count: u32) -> Self {
        let seed = sha256_parts(&[
            &[TRANSCRIPT_PREFIX],
            &claim.image_id.0,
            &claim.input_digest.0,
            &claim.output_chain.0,
            &claim.trace_root.0,
            &claim.trace_len.to_le_bytes(),
            &sample_count.to_le_bytes(),
        ]);
        Transcript { seed, sample_count }
    }

    pub fn seed(&self) -> Digest {
        self.seed
    }

    pub fn sample_count(&self) -> u32 {
        self.sample_count
    }

    fn draw(&self, j: u32, modulus: u64) -> u64 {
        let d = sha256_parts(&[&self.seed.0, &j.to_le_bytes()]);
        let mut head = [0u8; 8];
        head.copy_from_slice(&d.0[..8]);
        u64::from_le_bytes(head) % modulus
    }

    /// Step indices in `[0, trace_len - 1)`; duplicates are allowed.
    pub fn indices(&self, trace_len: u64) -> Result<Vec<u64>, CommitError> {
        if trace_len < 2 {
            return Err(CommitError::TraceTooShort(trace_len));
        }
        Ok((0..self.sample_count)
            .map(|j| self.draw(j, trace_len - 1))
            .collect())
    }
}

pub fn derive_samples(claim: &ClaimBinding, k: u32) -> Result<Vec<u64>, CommitError> {
    if k == 0 {
        return Err(CommitError::ZeroSamples);
    }
    Transcript::new(claim, k).indices(claim.trace_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(byte: u8) -> Digest {
        Digest([byte; 32])
    }

    #[test]
    fn leaf_and_node_are_domain_separated() {
        let leaves: Vec<Vec<u8>> = vec![vec![], vec![1], vec![0; 64], [1u8; 65].to_vec()];
        let nodes = [(d(0), d(0)), (d(1), d(2)), (d(7), d(9))];
        for l in &leaves {
            for (a, b) in &nodes {
                assert_ne!(hash_leaf(l), hash_node(a, b));
            }
        }
        // A leaf whose bytes spell out a node preimage body still differs.
        let mut body = d(1).0.to_vec();
        body.extend_from_slice(&d(2).0);
        assert_ne!(hash_leaf(&body), hash_node(&d(1), &d(2)));
    }

    #[test]
    fn node_is_order_sensitive() {
        assert_ne!(hash_node(&d(1), &d(2)), hash_node(&d(2), &d(1)));
    }

    #[test]
    fn small_trees() {
        let (root, tree) = build_tree(&[b"x".to_vec()]).unwrap();
        assert_eq!(root, hash_leaf(b"x"));
        assert_eq!(tree.depth(), 0);
        assert!(tree.open(0).unwrap().siblings.is_empty());

        let (root, _) = build_tree(&[b"l0", b"l1"]).unwrap();
        assert_eq!(root, hash_node(&hash_leaf(b"l0"), &hash_leaf(b"l1")));

        let (root, tree) = build_tree(&[b"a", b"b", b"c"]).unwrap();
        assert_eq!(tree.depth(), 2);
        assert_eq!(tree.leaf(3), Some(hash_leaf(&[])));
        let expected = hash_node(
            &hash_node(&hash_leaf(b"a"), &hash_leaf(b"b")),
            &hash_node(&hash_leaf(b"c"), &hash_leaf(&[])),
        );
        assert_eq!(root, expected);
    }

    #[test]
    fn empty_tree_is_rejected() {
        let none: [&[u8]; 0] = [];
        assert_eq!(build_tree(&none).unwrap_err(), CommitError::EmptyTree);
    }

    #[test]
    fn open_out_of_range() {
        let (_, tree) = build_tree(&[b"a", b"b", b"c"]).unwrap();
        assert!(tree.open(3).is_ok());
        assert!(matches!(
            tree.open(4),
            Err(CommitError::IndexOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn swapping_leaves_changes_root() {
        let leaves = [b"w".to_vec(), b"x".to_vec(), b"y".to_vec(), b"z".to_vec()];
        let base = build_tree(&leaves).unwrap().0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let mut swapped = leaves.clone();
                swapped.swap(i, j);
                assert_ne!(build_tree(&swapped).unwrap().0, base, "swap {i},{j}");
            }
        }
    }

    #[test]
    fn open_verify_round_trip_and_corruption() {
        let leaves: Vec<Vec<u8>> = (0u8..8).map(|i| vec![i; (i as usize) + 1]).collect();
        let (root, tree) = build_tree(&leaves).unwrap();
        for (i, leaf) in leaves.iter().enumerate() {
            let path = tree.open(i as u64).unwrap();
            assert!(verify_path(&root, i as u64, leaf, &path));

            let mut bad_leaf = leaf.clone();
            bad_leaf[0] ^= 1;
            assert!(!verify_path(&root, i as u64, &bad_leaf, &path));

            let other = (i as u64) ^ 1;
            let mut moved = path.clone();
            moved.leaf_index = other;
            assert!(!verify_path(&root, other, leaf, &moved));

            for s in 0..path.depth() {
                let mut bad = path.clone();
                bad.siblings[s].0[0] ^= 0x80;
                assert!(!verify_path(&root, i as u64, leaf, &bad), "sibling {s}");
            }
        }
    }

    #[test]
    fn sparse_defaults_and_position() {
        let zero = sparse_memory_root(std::iter::empty()).unwrap();
        assert_eq!(zero, zero_subtrees(MEMORY_DEPTH)[MEMORY_DEPTH]);
        assert_eq!(sparse_memory_root([(5, 0)]).unwrap(), zero);
        assert_ne!(
            sparse_memory_root([(0, 1)]).unwrap(),
            sparse_memory_root([(1, 1)]).unwrap()
        );
        assert!(matches!(
            sparse_memory_root([(1 << 16, 1)]),
            Err(CommitError::AddressOutOfRange { .. })
        ));
    }

    #[test]
    fn sparse_update_witnesses_both_roots() {
        let mut tree = SparseMerkleTree::memory();
        tree.update(10, 3).unwrap();
        let old_root = tree.root();
        let (new_root, w) = tree.update(10, 9).unwrap();
        assert_eq!(w.old_value, 3);
        assert!(w.verify_old(&old_root));
        assert_eq!(w.root_after(9), new_root);

        let mut lie = w.clone();
        lie.old_value = 4;
        assert!(!lie.verify_old(&old_root));

        let (same, _) = tree.update(10, 9).unwrap();
        assert_eq!(same, new_root);
    }

    #[test]
    fn sparse_matches_dense_on_full_small_space() {
        let words: Vec<u32> = (0..256u32).map(|i| i.wrapping_mul(2654435761)).collect();
        let sparse = SparseMerkleTree::from_words(8, words.iter().copied().enumerate().map(|(a, v)| (a as u32, v)))
            .unwrap();
        let leaves: Vec<[u8; 4]> = words.iter().map(|w| w.to_le_bytes()).collect();
        assert_eq!(sparse.root(), build_tree(&leaves).unwrap().0);
    }

    #[test]
    fn chain_basics() {
        assert_eq!(chain(b""), chain_init());
        assert_ne!(chain(b"ab"), chain(b"ba"));
        assert_eq!(chain(b"a"), chain_extend(&chain_init(), b'a'));
    }

    #[test]
    fn chain_is_injective_on_short_sequences() {
        let mut seen = std::collections::HashSet::new();
        let mut count = 0usize;
        let mut stack: Vec<Vec<u8>> = vec![vec![]];
        while let Some(seq) = stack.pop() {
            assert!(seen.insert(chain(&seq)), "collision on {seq:?}");
            count += 1;
            if seq.len() < 2 {
                for b in 0..=255u8 {
                    let mut next = seq.clone();
                    next.push(b);
                    stack.push(next);
                }
            }
        }
        // Length-3 sequences: extend every length-2 accumulator by one byte.
        let mut pairs = Vec::new();
        for a in 0..=255u8 {
            let acc_a = chain_extend(&chain_init(), a);
            for b in 0..=255u8 {
                pairs.push(chain_extend(&acc_a, b));
            }
        }
        for acc in pairs {
            for c in 0..=255u8 {
                assert!(seen.insert(chain_extend(&acc, c)));
                count += 1;
            }
        }
        assert_eq!(count, 1 + 256 + 256 * 256 + 256 * 256 * 256);
    }

    fn binding(trace_len: u64, tag: u8) -> ClaimBinding {
        ClaimBinding {
            image_id: d(1),
            input_digest: d(2),
            output_chain: d(tag),
            trace_root: d(4),
            trace_len,
        }
    }

    #[test]
    fn samples_are_deterministic_and_in_range() {
        let c = binding(1000, 3);
        let a = derive_samples(&c, 64).unwrap();
        assert_eq!(a, derive_samples(&c, 64).unwrap());
        assert_eq!(a.len(), 64);
        assert!(a.iter().all(|&i| i < 999));
        assert_ne!(a, derive_samples(&binding(1000, 5), 64).unwrap());
    }

    #[test]
    fn sample_errors() {
        assert_eq!(derive_samples(&binding(1, 3), 4), Err(CommitError::TraceTooShort(1)));
        assert_eq!(derive_samples(&binding(10, 3), 0), Err(CommitError::ZeroSamples));
        assert_eq!(derive_samples(&binding(2, 3), 8).unwrap(), vec![0; 8]);
    }
}
