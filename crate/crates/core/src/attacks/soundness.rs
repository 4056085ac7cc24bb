//! Monte-Carlo check of the sampling soundness bound.
//!
//! A forger commits to a trace with exactly one invalid transition and
//! hopes none of the `k` sampled steps lands on it. With `T` transitions
//! and indices uniform on them the escape probability is `(1 - 1/T)^k`.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::isa::{compute_image_id, r, GuestImage, Instruction, Opcode};
use crate::prover::{prove_tampered, ProveOptions, RegisterTamper};
use crate::verifier::{verify, verify_full, FailureClass};

/// Transitions in the forgery program's trace.
pub const FORGERY_STEPS: u64 = 1024;

/// A program of exactly [`FORGERY_STEPS`] steps that never reads `r4`:
/// three setup instructions, 255 rounds of a four-instruction loop with a
/// store, then HALT. A power-of-two step count makes the transcript's
/// `mod` reduction exactly uniform.
pub fn forgery_program() -> GuestImage {
    GuestImage::from_instructions(
        &[
            Instruction::addi(r(1), r(0), 255),
            Instruction::addi(r(2), r(0), 0x4000),
            Instruction::addi(r(3), r(0), 0),
            Instruction::addi(r(3), r(3), 7),
            Instruction::btype(Opcode::Sw, r(2), r(3), 0),
            Instruction::addi(r(1), r(1), -1),
            Instruction::btype(Opcode::Bne, r(1), r(0), -4),
            Instruction::halt(r(0)),
        ],
        0,
    )
    .expect("static program")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoundnessReport {
    pub trials: u32,
    pub samples: u32,
    /// Forgeries the sampled verifier rejected.
    pub detected: u32,
    /// Detections reported with a class other than TransitionViolation.
    pub misclassified: u32,
    /// Forgeries the oracle verifier rejected.
    pub full_rejected: u32,
    pub expected_rate: f64,
}

impl SoundnessReport {
    pub fn observed_rate(&self) -> f64 {
        self.detected as f64 / self.trials as f64
    }

    /// Binomial standard error of the observed rate under the expected one.
    pub fn standard_error(&self) -> f64 {
        let p = self.expected_rate;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Distance between observed and expected rate in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.observed_rate() - self.expected_rate) / self.standard_error()
    }
}

/// Detection probability of a single bad step among `steps` transitions.
pub fn expected_detection(steps: u64, k: u32) -> f64 {
    1.0 - (1.0 - 1.0 / steps as f64).powi(k as i32)
}

/// Proves `trials` forgeries, each perturbing `r4` by a random nonzero
/// mask at a random row. The first perturbed row is `j` in `[2, 1022]`, so
/// the one bad transition `j - 1` is never a boundary opening.
pub fn soundness_trials(trials: u32, k: u32, seed: u64) -> SoundnessReport {
    let image = forgery_program();
    let id = compute_image_id(&image);
    let source = b"";
    let opts = ProveOptions {
        samples: k,
        ..ProveOptions::default()
    };
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut report = SoundnessReport {
        trials,
        samples: k,
        detected: 0,
        misclassified: 0,
        full_rejected: 0,
        expected_rate: expected_detection(FORGERY_STEPS, k),
    };
    for _ in 0..trials {
        let row = 2 + rng.next_u64() % (FORGERY_STEPS - 3);
        let xor = loop {
            let x = rng.next_u64() as u32;
            if x != 0 {
                break x;
            }
        };
        let tamper = RegisterTamper { row, reg: r(4), xor };
        let receipt = prove_tampered(&image, source, opts, tamper).expect("forgery program runs cleanly");
        debug_assert_eq!(receipt.claim.trace_len, FORGERY_STEPS + 1);
        let v = verify(&receipt, &id, source, &image);
        if let Some(class) = v.failure {
            report.detected += 1;
            if class != FailureClass::TransitionViolation {
                report.misclassified += 1;
            }
        }
        if !verify_full(&receipt, &id, source, &image).accepted() {
            report.full_rejected += 1;
        }
    }
    report
}
