//! Adversarial harness: the four threat scenarios (compiler substitution,
//! source tampering, output manipulation, replay) run against honest
//! baselines, plus the forged-row soundness experiment in [`soundness`].
//!
//! Every attack edits a serialized artifact (image file, source file or
//! receipt file) and runs both verifiers on the result.

pub mod soundness;

use std::fmt;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::commit::Digest;
use crate::isa::{compute_image_id, GuestImage};
use crate::prover::{prove, splice_output, ProveError};
use crate::verifier::{verify_bytes, FailureClass, VerifyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    CompilerSubstitution,
    SourceTampering,
    OutputManipulation,
    Replay,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::CompilerSubstitution,
        AttackKind::SourceTampering,
        AttackKind::OutputManipulation,
        AttackKind::Replay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::CompilerSubstitution => "compiler",
            AttackKind::SourceTampering => "source",
            AttackKind::OutputManipulation => "output",
            AttackKind::Replay => "replay",
        }
    }

    pub fn from_name(s: &str) -> Option<AttackKind> {
        AttackKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Classes a rejection of this kind may carry. Output edits change the
    /// transcript seed, so the re-derived sample indices no longer match;
    /// only if they happened to coincide would the boundary check report
    /// the accumulator instead.
    pub fn expected_classes(self) -> &'static [FailureClass] {
        match self {
            AttackKind::CompilerSubstitution => &[FailureClass::ImageBindingFailure],
            AttackKind::SourceTampering => &[FailureClass::SourceDigestMismatch],
            AttackKind::OutputManipulation => &[FailureClass::TranscriptMismatch, FailureClass::OutputChainMismatch],
            AttackKind::Replay => &[FailureClass::SourceDigestMismatch],
        }
    }
}

/// One mutation relative to an honest baseline. `control` scenarios apply
/// an identity edit and must be accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackScenario {
    pub kind: AttackKind,
    pub mutation: String,
    pub control: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioOutcome {
    pub scenario: AttackScenario,
    /// Sampled verification.
    pub report: VerifyReport,
    /// Oracle verification of the same artifacts.
    pub full: VerifyReport,
}

impl ScenarioOutcome {
    /// True when both verifiers did what the scenario expects: accept a
    /// control, reject an attack with one of its documented classes.
    pub fn as_expected(&self) -> bool {
        if self.scenario.control {
            return self.report.accepted() && self.full.accepted();
        }
        let allowed = self.scenario.kind.expected_classes();
        self.report.failure.is_some_and(|c| allowed.contains(&c)) && !self.full.accepted()
    }
}

impl fmt::Display for ScenarioOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.scenario;
        let got = if self.report.accepted() { "ACCEPT" } else { "REJECT" };
        write!(
            f,
            "scenario={}{}:{} expected={} got={got} class={}",
            s.kind.name(),
            if s.control { "-control" } else { "" },
            s.mutation,
            if s.control { "ACCEPT" } else { "REJECT" },
            self.report.class_token()
        )
    }
}

/// Honest artifacts for one program: the agreed image, the source and the
/// serialized receipt.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub image: GuestImage,
    pub image_id: Digest,
    pub source: Vec<u8>,
    pub receipt: Vec<u8>,
    pub output: Vec<u8>,
}

impl Baseline {
    pub fn prove(image: &GuestImage, source: &[u8], k: u32) -> Result<Baseline, ProveError> {
        let receipt = prove(image, source, k)?;
        Ok(Baseline {
            image: image.clone(),
            image_id: compute_image_id(image),
            source: source.to_vec(),
            output: receipt.claim.output.clone(),
            receipt: receipt.to_bytes(),
        })
    }
}

fn check(
    scenario: AttackScenario,
    receipt: &[u8],
    image_id: &Digest,
    source: &[u8],
    image: &GuestImage,
) -> ScenarioOutcome {
    ScenarioOutcome {
        report: verify_bytes(receipt, image_id, source, image),
        full: crate::verifier::verify_full_bytes(receipt, image_id, source, image),
        scenario,
    }
}

const IMAGE_HEADER_BYTES: usize = 14;

/// Substitutes a compiler whose code word `word` is XORed with `xor`, by
/// editing the serialized image. The verifier is handed the substitute and
/// its ImageID together with the original receipt. `xor == 0` is the
/// control.
pub fn attack_compiler(b: &Baseline, word: usize, xor: u32) -> ScenarioOutcome {
    let mut file = b.image.to_bytes();
    let at = IMAGE_HEADER_BYTES + 4 * word;
    let w = u32::from_le_bytes(file[at..at + 4].try_into().unwrap()) ^ xor;
    file[at..at + 4].copy_from_slice(&w.to_le_bytes());
    let substitute = GuestImage::from_bytes(&file).expect("a word edit keeps the image well-formed");
    let scenario = AttackScenario {
        kind: AttackKind::CompilerSubstitution,
        mutation: format!("word={word},xor={xor:#010x}"),
        control: xor == 0,
    };
    check(scenario, &b.receipt, &compute_image_id(&substitute), &b.source, &substitute)
}

/// Verifies the baseline receipt against a different presented source.
pub fn attack_source(b: &Baseline, presented: &[u8], mutation: &str) -> ScenarioOutcome {
    let scenario = AttackScenario {
        kind: AttackKind::SourceTampering,
        mutation: mutation.to_string(),
        control: presented == b.source.as_slice(),
    };
    check(scenario, &b.receipt, &b.image_id, presented, &b.image)
}

/// Rewrites the output section of the receipt file.
pub fn attack_output(b: &Baseline, new_output: &[u8], mutation: &str) -> ScenarioOutcome {
    let forged = splice_output(&b.receipt, new_output).expect("baseline receipt is well-formed");
    let scenario = AttackScenario {
        kind: AttackKind::OutputManipulation,
        mutation: mutation.to_string(),
        control: new_output == b.output.as_slice(),
    };
    check(scenario, &forged, &b.image_id, &b.source, &b.image)
}

/// Presents receipt A with source B. With `swap_output`, A's receipt also
/// carries B's compiled output, as a replayer would want.
pub fn attack_replay(a: &Baseline, b: &Baseline, swap_output: bool) -> ScenarioOutcome {
    let receipt = if swap_output {
        splice_output(&a.receipt, &b.output).expect("baseline receipt is well-formed")
    } else {
        a.receipt.clone()
    };
    let scenario = AttackScenario {
        kind: AttackKind::Replay,
        mutation: if swap_output { "receipt-with-swapped-output" } else { "receipt" }.to_string(),
        control: a.source == b.source,
    };
    check(scenario, &receipt, &a.image_id, &b.source, &a.image)
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_lowercase()
}

fn is_ident_byte(c: u8) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == b'_'
}

/// Identifier tokens of an ExprLang source with their byte ranges.
fn identifiers(src: &[u8]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < src.len() {
        if is_ident_start(src[i]) && (i == 0 || !is_ident_byte(src[i - 1]) && !src[i - 1].is_ascii_digit()) {
            let start = i;
            while i < src.len() && is_ident_byte(src[i]) {
                i += 1;
            }
            out.push(start..i);
        } else {
            i += 1;
        }
    }
    out
}

/// Consistently renames the first variable, keeping the program valid.
pub fn rename_first_variable(src: &[u8]) -> Option<Vec<u8>> {
    let ids = identifiers(src);
    let words: Vec<&[u8]> = ids.iter().map(|r| &src[r.clone()]).collect();
    let old = *words.iter().find(|w| **w != b"let" && **w != b"print")?;
    let mut new = old.to_vec();
    loop {
        if new.len() < crate::exprlang::MAX_IDENT_LEN {
            new.push(b'q');
        } else {
            new[0] = if new[0] == b'z' { b'a' } else { new[0] + 1 };
        }
        if !words.contains(&new.as_slice()) && new != b"let" && new != b"print" {
            break;
        }
    }
    let mut out = Vec::with_capacity(src.len() + new.len());
    let mut last = 0;
    for r in ids.iter().filter(|r| &src[(*r).clone()] == old) {
        out.extend_from_slice(&src[last..r.start]);
        out.extend_from_slice(&new);
        last = r.end;
    }
    out.extend_from_slice(&src[last..]);
    Some(out)
}

/// The `i`-th source edit from a rotating set of byte-level mutations.
pub fn source_mutation(src: &[u8], i: usize) -> (Vec<u8>, String) {
    match i % 4 {
        0 => match rename_first_variable(src) {
            Some(s) => (s, "rename-first-variable".into()),
            None => ([src, b" "].concat(), "append-space".into()),
        },
        1 => ([src, b" "].concat(), "append-space".into()),
        2 => {
            let mut s = src.to_vec();
            match s.iter().position(u8::is_ascii_digit) {
                Some(p) => {
                    s[p] = b'0' + (s[p] - b'0' + 1) % 10;
                    (s, format!("bump-digit@{p}"))
                }
                None => ([b"\n", src].concat(), "prepend-newline".into()),
            }
        }
        _ => ([b"\n", src].concat(), "prepend-newline".into()),
    }
}

/// The `i`-th output edit.
pub fn output_mutation(output: &[u8], i: usize) -> (Vec<u8>, String) {
    let text = String::from_utf8_lossy(output).into_owned();
    match i % 4 {
        0 => {
            let lines: Vec<String> = text
                .lines()
                .map(String::from)
                .collect();
            if let Some(p) = lines.iter().position(|l| l.starts_with("PUSH ")) {
                let n: u64 = lines[p][5..].parse().unwrap_or(0);
                let mut edited = lines.clone();
                edited[p] = format!("PUSH {}", n + 1);
                let mut out = edited.join("\n");
                out.push('\n');
                return (out.into_bytes(), format!("PUSH {n}->PUSH {}", n + 1));
            }
            ([output, b"\n"].concat(), "append-byte".into())
        }
        1 => ([output, b"\n"].concat(), "append-byte".into()),
        2 => (output[..output.len().saturating_sub(1)].to_vec(), "drop-last-byte".into()),
        _ => {
            let mut lines: Vec<&str> = text.lines().collect();
            if lines.len() >= 2 && lines[0] != lines[1] {
                lines.swap(0, 1);
                let mut out = lines.join("\n");
                out.push('\n');
                (out.into_bytes(), "swap-first-lines".into())
            } else {
                ([b"PRINT\n", output].concat(), "prepend-line".into())
            }
        }
    }
}

/// Sizes of the standard suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuitePlan {
    pub compiler_mutations: usize,
    pub source_mutations: usize,
    pub output_mutations: usize,
    /// Replay runs over all ordered pairs of this many baselines.
    pub replay_programs: usize,
    pub seed: u64,
}

impl Default for SuitePlan {
    fn default() -> Self {
        SuitePlan {
            compiler_mutations: 20,
            source_mutations: 20,
            output_mutations: 20,
            replay_programs: 20,
            seed: 0,
        }
    }
}

/// Runs the attack scenarios of `kinds` over `corpus` (honest baselines of
/// distinct programs), including one control per kind.
pub fn run_suite(corpus: &[Baseline], kinds: &[AttackKind], plan: SuitePlan) -> Vec<ScenarioOutcome> {
    assert!(!corpus.is_empty(), "attack suite needs at least one baseline");
    let mut rng = SplitMix64::seed_from_u64(plan.seed);
    let mut out = Vec::new();
    let pick = |i: usize| &corpus[i % corpus.len()];
    for &kind in kinds {
        match kind {
            AttackKind::CompilerSubstitution => {
                let b = &corpus[0];
                out.push(attack_compiler(b, 0, 0));
                out.push(attack_compiler(b, 0, 1));
                for _ in 1..plan.compiler_mutations {
                    let word = (rng.next_u64() % b.image.code().len() as u64) as usize;
                    let xor = 1u32 << (rng.next_u64() % 32);
                    out.push(attack_compiler(b, word, xor));
                }
            }
            AttackKind::SourceTampering => {
                out.push(attack_source(&corpus[0], &corpus[0].source, "none"));
                for i in 0..plan.source_mutations {
                    let b = pick(i);
                    let (src, what) = source_mutation(&b.source, i);
                    out.push(attack_source(b, &src, &what));
                }
            }
            AttackKind::OutputManipulation => {
                let b0 = &corpus[0];
                out.push(attack_output(b0, &b0.output, "byte-identical-rewrite"));
                for i in 0..plan.output_mutations {
                    let b = pick(i);
                    let (o, what) = output_mutation(&b.output, i);
                    out.push(attack_output(b, &o, &what));
                }
            }
            AttackKind::Replay => {
                let n = plan.replay_programs.min(corpus.len());
                out.push(attack_replay(&corpus[0], &corpus[0], false));
                for a in 0..n {
                    for b in 0..n {
                        if a != b {
                            let mut o = attack_replay(&corpus[a], &corpus[b], false);
                            o.scenario.mutation = format!("receipt{a}-source{b}");
                            out.push(o);
                        }
                    }
                }
                if n >= 2 {
                    out.push(attack_replay(&corpus[0], &corpus[1], true));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renaming_is_token_aware() {
        let src = b"let a = 1; let ab = a + 2; print a*ab;";
        let renamed = rename_first_variable(src).unwrap();
        assert_eq!(renamed, b"let aq = 1; let ab = aq + 2; print aq*ab;");
        let full = b"let abcdefghijklmnop = 1; print abcdefghijklmnop;";
        let r = rename_first_variable(full).unwrap();
        assert_eq!(r, b"let bbcdefghijklmnop = 1; print bbcdefghijklmnop;");
        assert_eq!(rename_first_variable(b"print 1;"), None);
    }

    #[test]
    fn output_edits_change_bytes() {
        let out = b"PUSH 7\nPRINT\nHALT\n";
        for i in 0..4 {
            let (o, what) = output_mutation(out, i);
            assert_ne!(o, out, "{what}");
        }
        assert_eq!(output_mutation(out, 0).0, b"PUSH 8\nPRINT\nHALT\n");
    }

    #[test]
    fn source_edits_change_bytes() {
        let src = b"let x = 5; print x;";
        for i in 0..8 {
            assert_ne!(source_mutation(src, i).0, src);
        }
    }
}
