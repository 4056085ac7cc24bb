pub mod attacks;
pub mod bench;
pub mod cli;
pub mod commit;
pub mod exprlang;
pub mod isa;
pub mod minilang;
pub mod prover;
pub mod verifier;
