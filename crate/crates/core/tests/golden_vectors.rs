use std::collections::HashMap;

use zkpc_core::commit::{chain, chain_init, derive_samples, hash_leaf, hash_node, ClaimBinding, Digest, Transcript};
use zkpc_core::exprlang::exprcc_image;
use zkpc_core::isa::{compute_image_id, r, GuestImage, Instruction};

fn vectors() -> HashMap<String, Digest> {
    include_str!("vectors/golden.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.trim().to_string(), Digest::from_hex(v).unwrap())
        })
        .collect()
}

fn golden(name: &str) -> Digest {
    vectors()[name]
}

#[test]
fn merkle_hashes() {
    let a = Digest([0x11; 32]);
    let b = Digest(std::array::from_fn(|i| i as u8));
    assert_eq!(hash_leaf(b""), golden("hash_leaf_empty"));
    assert_eq!(hash_node(&a, &b), golden("hash_node_a_b"));
    assert_eq!(hash_node(&b, &a), golden("hash_node_b_a"));
}

#[test]
fn output_chain() {
    assert_eq!(chain_init(), golden("chain_init"));
    assert_eq!(chain(b""), golden("chain_init"));
    let bytes: Vec<u8> = (0..100u32).map(|i| ((i * 37 + 11) % 256) as u8).collect();
    assert_eq!(chain(&bytes), golden("chain_100"));
}

#[test]
fn image_ids() {
    let halt = GuestImage::from_instructions(&[Instruction::halt(r(0))], 0).unwrap();
    assert_eq!(compute_image_id(&halt), golden("image_id_halt"));
    assert_eq!(compute_image_id(exprcc_image()), golden("exprcc_image_id"));
}

#[test]
fn transcript() {
    let d = |b| Digest([b; 32]);
    let claim = ClaimBinding {
        image_id: d(1),
        input_digest: d(2),
        output_chain: d(3),
        trace_root: d(4),
        trace_len: 1000,
    };
    assert_eq!(Transcript::new(&claim, 8).seed(), golden("transcript_seed"));
    assert_eq!(derive_samples(&claim, 8).unwrap(), [350, 831, 8, 670, 484, 33, 603, 680]);
}
