//! The `zkpc` command line.
//!
//! Exit codes: 0 success or accept, 1 verification rejected, 2 usage or
//! capacity error, 3 guest trap or failed compile, 4 I/O or file format
//! error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::attacks::{self, soundness, AttackKind, Baseline, SuitePlan};
use crate::bench;
use crate::commit::Digest;
use crate::exprlang::{exprcc_image, gen_program, stackvm_run, EXPRCC_SOURCE};
use crate::isa::{compute_image_id, GuestImage, DEFAULT_MAX_STEPS};
use crate::minilang::compile_minilang;
use crate::prover::{prove_with, ProveError, ProveOptions, Receipt, DEFAULT_SAMPLES};
use crate::verifier::{verify_bytes, verify_full_bytes, FailureClass, VerifyReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECT: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_TRAP: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "zkpc", version, about = "Verifiable compilation with provenance receipts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Compiler,
    Source,
    Output,
    Replay,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the ImageID of a compiler image.
    Handshake {
        #[arg(long)]
        image: PathBuf,
    },
    /// Run the compiler under trace commitment and write a receipt.
    Prove {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u32,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
    },
    /// Check a receipt against a source file and an agreed ImageID.
    Verify {
        #[arg(long)]
        receipt: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        image_id: String,
        /// Agreed compiler image; defaults to the bundled exprcc.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Re-execute the compiler and compare the whole trace.
        #[arg(long)]
        full: bool,
        /// Also require the receipt's output to equal this file.
        #[arg(long)]
        expect_output: Option<PathBuf>,
    },
    /// Execute a StackAsm program.
    Run {
        #[arg(long)]
        asm: PathBuf,
    },
    /// Print a generated ExprLang program.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        size: usize,
    },
    /// Compile a MiniLang compiler source to a ZKPI image.
    BuildGuest {
        /// Defaults to the bundled exprcc.mini.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run adversarial scenarios against honest receipts.
    Attack {
        #[arg(long, value_enum, default_value_t = Scenario::All)]
        scenario: Scenario,
        /// Mutations per scenario and replay corpus size.
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Forge one interior trace row repeatedly and measure detection.
    Soundness {
        #[arg(long, default_value_t = 1000)]
        trials: u32,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time the pipeline over generated programs and write CSV.
    Bench {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = bench::CORPUS_SIZE)]
        size: usize,
        /// Program i gets 10 + 10i statements instead of --size.
        #[arg(long)]
        sweep: bool,
    },
}

/// A failed command: message for stderr plus exit code.
struct Failure(u8, String);

type CmdResult = Result<u8, Failure>;

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_IO, format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| io_fail(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_fail(path, e))
}

fn load_image(path: &Path) -> Result<GuestImage, Failure> {
    GuestImage::from_bytes(&read(path)?).map_err(|e| io_fail(path, e))
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("zkpc: {msg}");
            ExitCode::from(code)
        }
    }
}

fn execute(cmd: Command) -> CmdResult {
    match cmd {
        Command::Handshake { image } => {
            let img = load_image(&image)?;
            println!("{}", compute_image_id(&img).to_hex());
            Ok(EXIT_OK)
        }
        Command::Prove {
            image,
            source,
            out,
            samples,
            max_steps,
        } => cmd_prove(&image, &source, &out, ProveOptions { samples, max_steps }),
        Command::Verify {
            receipt,
            source,
            image_id,
            image,
            full,
            expect_output,
        } => cmd_verify(&receipt, &source, &image_id, image.as_deref(), full, expect_output.as_deref()),
        Command::Run { asm } => {
            let text = read(&asm)?;
            match stackvm_run(&text) {
                Ok(out) => {
                    std::io::stdout().write_all(&out).map_err(|e| Failure(EXIT_IO, e.to_string()))?;
                    Ok(EXIT_OK)
                }
                Err(trap) => Err(Failure(EXIT_TRAP, trap.to_string())),
            }
        }
        Command::Gen { seed, size } => {
            if size == 0 {
                return Err(Failure(EXIT_USAGE, "--size must be at least 1".into()));
            }
            print!("{}", gen_program(seed, size));
            Ok(EXIT_OK)
        }
        Command::BuildGuest { source, out } => {
            let src = match &source {
                Some(p) => read(p)?,
                None => EXPRCC_SOURCE.to_vec(),
            };
            let img = compile_minilang(&src).map_err(|e| Failure(EXIT_USAGE, e.to_string()))?;
            write(&out, &img.to_bytes())?;
            println!("{}", compute_image_id(&img).to_hex());
            Ok(EXIT_OK)
        }
        Command::Attack { scenario, count, seed } => cmd_attack(scenario, count, seed),
        Command::Soundness { trials, samples, seed } => {
            if trials == 0 || samples == 0 {
                return Err(Failure(EXIT_USAGE, "--trials and --samples must be positive".into()));
            }
            let rep = soundness::soundness_trials(trials, samples, seed);
            println!(
                "trials={} k={} detected={} rate={:.4} expected={:.4} se={:.4} z={:.2} full_rejected={}",
                rep.trials,
                rep.samples,
                rep.detected,
                rep.observed_rate(),
                rep.expected_rate,
                rep.standard_error(),
                rep.z_score(),
                rep.full_rejected
            );
            Ok(EXIT_OK)
        }
        Command::Bench {
            count,
            seed_base,
            out,
            size,
            sweep,
        } => {
            if size == 0 {
                return Err(Failure(EXIT_USAGE, "--size must be at least 1".into()));
            }
            let records = if sweep {
                bench::bench_sweep(count, seed_base)
            } else {
                bench::bench_fixed(count, seed_base, size)
            }
            .map_err(|e| Failure(EXIT_TRAP, e.to_string()))?;
            let file = fs::File::create(&out).map_err(|e| io_fail(&out, e))?;
            bench::write_csv(&records, file).map_err(|e| io_fail(&out, e))?;
            println!("wrote {} records to {}", records.len(), out.display());
            Ok(EXIT_OK)
        }
    }
}

fn cmd_prove(image: &Path, source: &Path, out: &Path, opts: ProveOptions) -> CmdResult {
    let img = load_image(image)?;
    let src = read(source)?;
    let receipt = prove_with(&img, &src, opts).map_err(|e| match e {
        ProveError::GuestFailed { exit_code, output } => Failure(
            EXIT_TRAP,
            format!(
                "guest exited with code {exit_code}; no receipt written\n{}",
                String::from_utf8_lossy(&output).trim_end()
            ),
        ),
        ProveError::Trap(t) => Failure(EXIT_TRAP, format!("guest trapped: {t}")),
        e @ (ProveError::Capacity(_) | ProveError::BadSampleCount | ProveError::Commit(_)) => {
            Failure(EXIT_USAGE, e.to_string())
        }
    })?;
    let bytes = receipt.to_bytes();
    write(out, &bytes)?;
    write(&out.with_extension("s"), &receipt.claim.output)?;
    println!("trace_len={} receipt_bytes={}", receipt.claim.trace_len, bytes.len());
    Ok(EXIT_OK)
}

fn cmd_verify(
    receipt: &Path,
    source: &Path,
    image_id: &str,
    image: Option<&Path>,
    full: bool,
    expect_output: Option<&Path>,
) -> CmdResult {
    let id = Digest::from_hex(image_id)
        .ok_or_else(|| Failure(EXIT_USAGE, format!("--image-id must be 64 hex digits, got `{image_id}`")))?;
    let img = match image {
        Some(p) => load_image(p)?,
        None => exprcc_image().clone(),
    };
    let bytes = read(receipt)?;
    let src = read(source)?;
    let mut report = if full {
        verify_full_bytes(&bytes, &id, &src, &img)
    } else {
        verify_bytes(&bytes, &id, &src, &img)
    };
    if let (true, Some(path)) = (report.accepted(), expect_output) {
        let expected = read(path)?;
        let claimed = Receipt::from_bytes(&bytes).expect("accepted receipts parse").claim.output;
        if claimed != expected {
            report = VerifyReport::reject(
                FailureClass::OutputChainMismatch,
                format!("{} differs from the attested output", path.display()),
            );
        }
    }
    println!("{report}");
    Ok(if report.accepted() { EXIT_OK } else { EXIT_REJECT })
}

fn cmd_attack(scenario: Scenario, count: usize, seed: u64) -> CmdResult {
    if count == 0 {
        return Err(Failure(EXIT_USAGE, "--count must be positive".into()));
    }
    let kinds: Vec<AttackKind> = match scenario {
        Scenario::Compiler => vec![AttackKind::CompilerSubstitution],
        Scenario::Source => vec![AttackKind::SourceTampering],
        Scenario::Output => vec![AttackKind::OutputManipulation],
        Scenario::Replay => vec![AttackKind::Replay],
        Scenario::All => AttackKind::ALL.to_vec(),
    };
    let corpus_len = if kinds.contains(&AttackKind::Replay) { count.max(2) } else { count.min(5) };
    let image = exprcc_image();
    let corpus = (0..corpus_len as u64)
        .map(|i| Baseline::prove(image, gen_program(seed + i, bench::CORPUS_SIZE).as_bytes(), DEFAULT_SAMPLES))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure(EXIT_TRAP, e.to_string()))?;
    let plan = SuitePlan {
        compiler_mutations: count,
        source_mutations: count,
        output_mutations: count,
        replay_programs: count,
        seed,
    };
    let outcomes = attacks::run_suite(&corpus, &kinds, plan);
    let mut all_ok = true;
    for o in &outcomes {
        println!("{o}");
        all_ok &= o.as_expected();
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_REJECT })
}
