//! The guest compiler must match the host reference byte for byte, and
//! compiled programs must mean what the source says.

use zkpc_core::exprlang::{
    ast::evaluate_source, exprcc_image, gen_program, reference_compile, stackvm_run, Compiled, EXPRCC_SOURCE,
    MAX_NESTING,
};
use zkpc_core::isa::{run, DEFAULT_MAX_STEPS};
use zkpc_core::minilang::interpret_minilang;

fn guest(src: &[u8]) -> Compiled {
    let res = run(exprcc_image(), src, DEFAULT_MAX_STEPS).unwrap();
    assert_eq!(res.trap, None, "guest trapped on {:?}", String::from_utf8_lossy(src));
    Compiled {
        output: res.output,
        exit_code: res.exit_code,
    }
}

fn edge_cases() -> Vec<Vec<u8>> {
    let mut cases: Vec<Vec<u8>> = [
        "",
        " \n\t\r\n",
        "print 7;",
        "print 1+2*3;",
        "let x = 4; print x;",
        "print (1+;",
        "let abcdefghijklmnop = 1; print abcdefghijklmnop;",
        "let abcdefghijklmnopq = 1;",
        "let a_1 = 2; let b9_ = a_1 * a_1; print b9_ - a_1;",
        "print 2147483647;",
        "print 2147483648;",
        "print 000000000000002147483647;",
        "print 0;\nprint 1 $ 2;",
        "print ; $",
        "let x = x;",
        "let x = 1;\n\n  y = x;",
        "let print = 3;",
        "print let;",
        "Print 1;",
        "print 1\n",
        "print 1 +\n\n\n",
        "let x = 1;\nx + 1;",
        "let a = 1; let b = 2; let a = b; a = a + b; print a; print b;",
        "print --5; print -(-(2)); print 0-1;",
        "print 10 / 3 / 2; print 8 - 2 - 1; print 2 * (3 + 4);",
        "print 1;;",
        "print 1; let\n",
        "let x = 5\nprint x;",
        "print (((((((((((((((((((((1)))))))))))))))))))));",
        "print 1\x00;",
        "print 1;\x7f",
        "print é;",
        "let x=1;let y=x*x+x;print y;print x/0;",
        "12ab;",
        "print 3 4;",
        "print (1));",
    ]
    .iter()
    .map(|s| s.as_bytes().to_vec())
    .collect();
    let n = MAX_NESTING;
    cases.push(format!("print {}1{};", "(".repeat(n), ")".repeat(n)).into_bytes());
    cases.push(format!("print\n{}1{};", "(".repeat(n + 1), ")".repeat(n + 1)).into_bytes());
    cases.push(format!("print {}1;", "-".repeat(n)).into_bytes());
    cases.push(format!("print\n\n{}1;", "-".repeat(n + 1)).into_bytes());
    cases.push(format!("print {}({}1));", "-".repeat(n - 1), "-").into_bytes());
    cases
}

#[test]
fn guest_matches_reference_on_edge_cases() {
    let cases = edge_cases();
    assert!(cases.len() >= 20);
    let mut errors = 0;
    for src in &cases {
        let host = reference_compile(src);
        let got = guest(src);
        assert_eq!(
            String::from_utf8_lossy(&got.output),
            String::from_utf8_lossy(&host.output),
            "source {:?}",
            String::from_utf8_lossy(src)
        );
        assert_eq!(got, host);
        errors += (!host.is_ok()) as usize;
    }
    // the list exercises both modes
    assert!(errors >= 10 && errors < cases.len() - 8, "{errors}");
}

#[test]
fn worked_examples_through_the_guest() {
    assert_eq!(guest(b"print 7;").output, b"PUSH 7\nPRINT\nHALT\n");
    assert_eq!(guest(b"print 1+2*3;").output, b"PUSH 1\nPUSH 2\nPUSH 3\nMUL\nADD\nPRINT\nHALT\n");
    let err = guest(b"print (1+;");
    assert_eq!((err.output.as_slice(), err.exit_code), (&b"error: line 1\n"[..], 1));
    assert_eq!(err.error_line(), Some(1));
}

#[test]
fn guest_matches_reference_on_generated_corpus() {
    for seed in 0..50 {
        let src = gen_program(seed, 4 + (seed % 20) as usize);
        assert_eq!(guest(src.as_bytes()), reference_compile(src.as_bytes()), "seed {seed}:\n{src}");
    }
}

#[test]
fn guest_matches_reference_on_mutated_programs() {
    // Single-byte corruptions of generated programs hit error paths at
    // assorted positions and lines.
    let mut state = 0x2545_f491_4f6c_dd1du64;
    for seed in 0..40 {
        let mut src = gen_program(1000 + seed, 8).into_bytes();
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let at = (state % src.len() as u64) as usize;
        src[at] = b"+-*/()=; \n$Aa0x_"[(state >> 32) as usize % 16];
        assert_eq!(guest(&src), reference_compile(&src), "{:?}", String::from_utf8_lossy(&src));
    }
}

#[test]
fn compiled_programs_preserve_meaning() {
    for seed in 0..200 {
        let src = gen_program(seed, 1 + (seed % 30) as usize);
        let asm = reference_compile(src.as_bytes());
        assert!(asm.is_ok(), "seed {seed}");
        let ran = stackvm_run(&asm.output).unwrap();
        let evaluated = evaluate_source(&src).unwrap();
        assert_eq!(ran, evaluated, "seed {seed}:\n{src}");
    }
    assert_eq!(
        stackvm_run(&reference_compile(b"let x=10; x = x*x; print x;").output).unwrap(),
        b"100\n"
    );
}

#[test]
fn interpreted_exprcc_agrees() {
    // The MiniLang reference interpreter running exprcc.mini is a third
    // independent path to the same bytes.
    for src in edge_cases().iter().take(30) {
        let interp = interpret_minilang(EXPRCC_SOURCE, src).unwrap();
        assert_eq!(interp.fault, None);
        let host = reference_compile(src);
        assert_eq!((interp.output, interp.exit_code), (host.output, host.exit_code));
    }
}

#[test]
fn guest_handles_the_largest_input() {
    let unit = "let a=1;print a;";
    let src = unit.repeat(32 * 1024 / unit.len());
    assert!(src.len() <= 32 * 1024);
    assert_eq!(guest(src.as_bytes()), reference_compile(src.as_bytes()));
}
