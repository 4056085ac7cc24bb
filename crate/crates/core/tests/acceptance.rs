//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines are
//! always shown.

use std::process::ExitCode;
use std::time::Instant;

use zkpc_core::attacks::soundness::{expected_detection, soundness_trials, FORGERY_STEPS};
use zkpc_core::attacks::{run_suite, AttackKind, Baseline, SuitePlan};
use zkpc_core::bench::{bench_sweep, linear_fit, median, run_pipeline, PipelineRun, CORPUS_SIZE};
use zkpc_core::commit::Digest;
use zkpc_core::exprlang::{exprcc_image, reference_compile, EXPRCC_SOURCE};
use zkpc_core::isa::{compute_image_id, run, DEFAULT_MAX_STEPS};
use zkpc_core::minilang::compile_minilang;
use zkpc_core::prover::Receipt;
use zkpc_core::verifier::{verify, verify_full};

const CORPUS: u64 = 200;
const TRIALS: u32 = 2000;
const SWEEP: usize = 30;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn golden_exprcc_id() -> Digest {
    let line = include_str!("vectors/golden.txt")
        .lines()
        .find(|l| l.starts_with("exprcc_image_id"))
        .expect("golden exprcc ImageID present");
    Digest::from_hex(line.split_once('=').unwrap().1).unwrap()
}

struct Corpus {
    runs: Vec<PipelineRun>,
    receipts: Vec<Receipt>,
}

fn criterion_1(corpus: &Result<Corpus, String>) -> Outcome {
    let c = corpus.as_ref().map_err(Clone::clone)?;
    ensure(c.runs.len() == CORPUS as usize, "corpus incomplete")?;
    Ok(format!("{CORPUS}/{CORPUS} generated programs (size {CORPUS_SIZE}) proved and verified"))
}

fn edge_cases() -> Vec<Vec<u8>> {
    let long = "abcdefghijklmnop";
    let too_long = "abcdefghijklmnopq";
    let deep = |n: usize| format!("print {}1{};", "(".repeat(n), ")".repeat(n));
    let negs = |n: usize| format!("print {}1;", "-".repeat(n));
    [
        String::new(),
        "   \n\t\r\n".into(),
        "print 7;".into(),
        "print 1+2*3;".into(),
        "let x = 4; print x;".into(),
        format!("let {long} = 1; print {long};"),
        format!("let {too_long} = 1; print {too_long};"),
        deep(200),
        deep(256),
        deep(257),
        negs(256),
        negs(257),
        "print 2147483647;".into(),
        "print 2147483648;".into(),
        "print 0007;".into(),
        "print (1+;".into(),
        "print x;".into(),
        "let x = x; print 1;".into(),
        "let let = 1;".into(),
        "print 1".into(),
        "let a = 1;\nlet b = a;\n\nprint b $;".into(),
        "let a = 8; a = a / 0; print a;".into(),
        "let a = 1; let a = a + 1; print a;".into(),
        "print 1; print -(2-3)*4/2;".into(),
        "x = 1;".into(),
        "print\n(\n1\n+\n)\n;".into(),
    ]
    .into_iter()
    .map(String::into_bytes)
    .chain([b"print 1;\x00".to_vec(), vec![b'p', 0xc3, 0xa9]])
    .collect()
}

fn criterion_2(corpus: &Result<Corpus, String>) -> Outcome {
    let c = corpus.as_ref().map_err(Clone::clone)?;
    for (run, receipt) in c.runs.iter().zip(&c.receipts) {
        let reference = reference_compile(run.source.as_bytes());
        ensure(
            receipt.claim.output == reference.output && receipt.claim.exit_code == reference.exit_code,
            format!("{}: guest output differs from the reference", run.record.program_id),
        )?;
    }
    let cases = edge_cases();
    for (i, src) in cases.iter().enumerate() {
        let guest = run(exprcc_image(), src, DEFAULT_MAX_STEPS).map_err(|e| e.to_string())?;
        let reference = reference_compile(src);
        ensure(guest.trap.is_none(), format!("edge case {i}: guest trapped"))?;
        ensure(
            guest.output == reference.output && guest.exit_code == reference.exit_code,
            format!(
                "edge case {i} {:?}: guest {:?} reference {:?}",
                String::from_utf8_lossy(src),
                String::from_utf8_lossy(&guest.output),
                String::from_utf8_lossy(&reference.output)
            ),
        )?;
    }
    Ok(format!("guest exprcc byte-identical to reference on {} corpus programs and {} edge cases", c.runs.len(), cases.len()))
}

fn criterion_3(corpus: &Result<Corpus, String>, forged_full_rejected: &mut Vec<bool>) -> Outcome {
    let c = corpus.as_ref().map_err(Clone::clone)?;
    let image = exprcc_image();
    let image_id = compute_image_id(image);
    let baselines: Vec<Baseline> = c
        .runs
        .iter()
        .zip(&c.receipts)
        .take(20)
        .map(|(run, receipt)| Baseline {
            image: image.clone(),
            image_id,
            source: run.source.clone().into_bytes(),
            receipt: run.receipt.clone(),
            output: receipt.claim.output.clone(),
        })
        .collect();
    let plan = SuitePlan::default();
    let outcomes = run_suite(&baselines, &AttackKind::ALL, plan);
    let mut summary = Vec::new();
    for kind in AttackKind::ALL {
        let of_kind: Vec<_> = outcomes.iter().filter(|o| o.scenario.kind == kind).collect();
        let attacks: Vec<_> = of_kind.iter().filter(|o| !o.scenario.control).collect();
        let controls: Vec<_> = of_kind.iter().filter(|o| o.scenario.control).collect();
        let want = match kind {
            AttackKind::Replay => 380,
            _ => 20,
        };
        ensure(attacks.len() >= want, format!("{}: only {} mutations", kind.name(), attacks.len()))?;
        ensure(!controls.is_empty(), format!("{}: no control", kind.name()))?;
        for o in &of_kind {
            ensure(o.as_expected(), format!("unexpected outcome: {o}"))?;
        }
        forged_full_rejected.extend(attacks.iter().map(|o| !o.full.accepted()));
        summary.push(format!("{} {}/{} rejected", kind.name(), attacks.len(), attacks.len()));
    }
    let controls = outcomes.iter().filter(|o| o.scenario.control).count();
    Ok(format!("{}; {controls}/{controls} controls accepted", summary.join(", ")))
}

fn criterion_4(forged_full_rejected: &mut Vec<bool>) -> Outcome {
    let rep = soundness_trials(TRIALS, 64, 0x5eed);
    forged_full_rejected.extend((0..rep.trials).map(|i| i < rep.full_rejected));
    let expected = expected_detection(FORGERY_STEPS, 64);
    ensure((expected - 0.0606).abs() < 5e-5, format!("expected rate {expected} off the closed form"))?;
    let detail = format!(
        "detected {}/{} = {:.4}, expected {:.4}, se {:.4}, z {:+.2}; verify_full rejected {}/{}",
        rep.detected,
        rep.trials,
        rep.observed_rate(),
        rep.expected_rate,
        rep.standard_error(),
        rep.z_score(),
        rep.full_rejected,
        rep.trials
    );
    ensure(rep.trials >= 1000, "too few trials")?;
    ensure(rep.z_score().abs() <= 3.0, format!("outside 3 SE: {detail}"))?;
    ensure(rep.misclassified == 0, format!("{} detections not TransitionViolation", rep.misclassified))?;
    ensure(rep.full_rejected == rep.trials, format!("verify_full missed forgeries: {detail}"))?;
    Ok(detail)
}

fn criterion_5(corpus: &Result<Corpus, String>) -> Outcome {
    let c = corpus.as_ref().map_err(Clone::clone)?;
    for r in c.runs.iter().map(|r| &r.record) {
        ensure(
            r.verify_seconds < r.prove_seconds,
            format!("{}: verify {}s >= prove {}s", r.program_id, r.verify_seconds, r.prove_seconds),
        )?;
    }
    let mut prove: Vec<f64> = c.runs.iter().map(|r| r.record.prove_seconds).collect();
    let mut verify: Vec<f64> = c.runs.iter().map(|r| r.record.verify_seconds).collect();
    let mut compile: Vec<f64> = c.runs.iter().map(|r| r.record.standard_compile_seconds).collect();
    let (mp, mv, mc) = (median(&mut prove), median(&mut verify), median(&mut compile));
    let ratio = mp / mc;
    ensure(ratio > 10.0, format!("median prove/compile ratio {ratio:.1}"))?;
    Ok(format!(
        "verify < prove on all {} records; medians prove {mp:.4}s verify {mv:.4}s compile {mc:.6}s, prove/compile {ratio:.0}x",
        c.runs.len()
    ))
}

fn criterion_6() -> Outcome {
    let records = bench_sweep(SWEEP, 1000).map_err(|e| e.to_string())?;
    let x: Vec<f64> = records.iter().map(|r| r.trace_len as f64).collect();
    let y: Vec<f64> = records.iter().map(|r| r.receipt_size_bytes as f64).collect();
    let (slope, pearson) = linear_fit(&x, &y);
    let detail = format!(
        "{SWEEP} programs, trace_len {}..{}, slope {slope:.4} bytes/row, r {pearson:.4}",
        x.iter().copied().fold(f64::INFINITY, f64::min),
        x.iter().copied().fold(0.0, f64::max)
    );
    ensure(slope > 0.0 && pearson > 0.9, detail.clone())?;
    Ok(detail)
}

fn criterion_7(corpus: &Result<Corpus, String>, forged_full_rejected: &[bool]) -> Outcome {
    let c = corpus.as_ref().map_err(Clone::clone)?;
    let image = exprcc_image();
    let id = compute_image_id(image);
    for (run, receipt) in c.runs.iter().zip(&c.receipts) {
        let src = run.source.as_bytes();
        let sampled = verify(receipt, &id, src, image).accepted();
        let full = verify_full(receipt, &id, src, image).accepted();
        ensure(sampled == full, format!("{}: verify {sampled} but verify_full {full}", run.record.program_id))?;
        ensure(full, format!("{}: honest receipt rejected", run.record.program_id))?;
    }
    ensure(!forged_full_rejected.is_empty(), "no forged cases collected")?;
    let missed = forged_full_rejected.iter().filter(|r| !**r).count();
    ensure(missed == 0, format!("verify_full accepted {missed} forged receipts"))?;
    Ok(format!(
        "verify and verify_full agree on {} honest receipts; verify_full rejected {}/{} forged cases",
        c.runs.len(),
        forged_full_rejected.len(),
        forged_full_rejected.len()
    ))
}

fn criterion_8() -> Outcome {
    let a = compile_minilang(EXPRCC_SOURCE).map_err(|e| e.to_string())?;
    let b = compile_minilang(EXPRCC_SOURCE).map_err(|e| e.to_string())?;
    let (ia, ib) = (compute_image_id(&a), compute_image_id(&b));
    ensure(a.to_bytes() == b.to_bytes() && ia == ib, "two builds differ")?;
    let golden = golden_exprcc_id();
    ensure(ia == golden, format!("ImageID {ia} differs from golden {golden}"))?;
    Ok(format!("two builds bit-identical, ImageID {ia} matches golden"))
}

fn build_corpus() -> Result<Corpus, String> {
    let mut runs = Vec::with_capacity(CORPUS as usize);
    let mut receipts = Vec::with_capacity(CORPUS as usize);
    for seed in 0..CORPUS {
        let run = run_pipeline(seed, CORPUS_SIZE).map_err(|e| e.to_string())?;
        receipts.push(Receipt::from_bytes(&run.receipt).map_err(|e| e.to_string())?);
        runs.push(run);
    }
    Ok(Corpus { runs, receipts })
}

fn main() -> ExitCode {
    let start = Instant::now();
    let corpus = build_corpus();
    let mut forged = Vec::new();
    let results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1(&corpus)),
        (2, criterion_2(&corpus)),
        (3, criterion_3(&corpus, &mut forged)),
        (4, criterion_4(&mut forged)),
        (5, criterion_5(&corpus)),
        (6, criterion_6()),
        (7, criterion_7(&corpus, &forged)),
        (8, criterion_8()),
    ];
    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n} PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL: {detail}");
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
