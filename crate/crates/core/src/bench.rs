//! Benchmark records: per generated program, the host reference compile,
//! proving and verification times plus receipt size and trace length.

use std::io;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::{exprcc_image, gen_program, reference_compile};
use crate::isa::compute_image_id;
use crate::prover::{prove, ProveError, DEFAULT_SAMPLES};
use crate::verifier::verify_bytes;

/// Statement count used for the standard corpus.
pub const CORPUS_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub program_id: String,
    pub source_size_bytes: u64,
    pub standard_compile_seconds: f64,
    pub prove_seconds: f64,
    pub verify_seconds: f64,
    pub receipt_size_bytes: u64,
    pub trace_len: u64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("seed {seed}: proving failed: {source}")]
    Prove { seed: u64, source: ProveError },
    #[error("seed {seed}: honest receipt rejected: {report}")]
    Rejected { seed: u64, report: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Rounds to microseconds.
fn seconds(d: Duration) -> f64 {
    d.as_micros() as f64 / 1e6
}

/// One program taken through the pipeline, with its artifacts.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub record: BenchRecord,
    pub source: String,
    pub receipt: Vec<u8>,
}

/// Runs the full pipeline on one generated program, timing each phase.
pub fn run_pipeline(seed: u64, size: usize) -> Result<PipelineRun, BenchError> {
    let image = exprcc_image();
    let id = compute_image_id(image);
    let source = gen_program(seed, size);

    let t = Instant::now();
    let compiled = reference_compile(source.as_bytes());
    let compile = t.elapsed();
    debug_assert!(compiled.is_ok());

    let t = Instant::now();
    let receipt = prove(image, source.as_bytes(), DEFAULT_SAMPLES)
        .map_err(|source| BenchError::Prove { seed, source })?;
    let trace_len = receipt.claim.trace_len;
    let receipt = receipt.to_bytes();
    let proving = t.elapsed();

    let t = Instant::now();
    let report = verify_bytes(&receipt, &id, source.as_bytes(), image);
    let verifying = t.elapsed();
    if !report.accepted() {
        return Err(BenchError::Rejected {
            seed,
            report: report.to_string(),
        });
    }

    let record = BenchRecord {
        program_id: format!("seed{seed}-size{size}"),
        source_size_bytes: source.len() as u64,
        standard_compile_seconds: seconds(compile),
        prove_seconds: seconds(proving),
        verify_seconds: seconds(verifying),
        receipt_size_bytes: receipt.len() as u64,
        trace_len,
    };
    Ok(PipelineRun { record, source, receipt })
}

pub fn bench_one(seed: u64, size: usize) -> Result<BenchRecord, BenchError> {
    run_pipeline(seed, size).map(|r| r.record)
}

/// `count` programs of one size, seeds `seed_base..`.
pub fn bench_fixed(count: usize, seed_base: u64, size: usize) -> Result<Vec<BenchRecord>, BenchError> {
    (0..count as u64).map(|i| bench_one(seed_base + i, size)).collect()
}

/// Statement count of program `i` in a size sweep. Thirty steps run from
/// half the corpus size to fifteen times it; below a few hundred thousand
/// rows the receipt is dominated by the fixed number of openings.
pub fn sweep_size(i: usize) -> usize {
    10 + 10 * i
}

/// `count` programs of growing size, see [`sweep_size`].
pub fn bench_sweep(count: usize, seed_base: u64) -> Result<Vec<BenchRecord>, BenchError> {
    (0..count).map(|i| bench_one(seed_base + i as u64, sweep_size(i))).collect()
}

pub fn write_csv<W: io::Write>(records: &[BenchRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

/// Least-squares slope and Pearson correlation of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / sxx, sxy / (sxx * syy).sqrt())
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_round_trip() {
        let recs = bench_fixed(2, 7, 3).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "program_id,source_size_bytes,standard_compile_seconds,prove_seconds,verify_seconds,receipt_size_bytes,trace_len"
        );
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn fit_of_a_line() {
        let (slope, r) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
