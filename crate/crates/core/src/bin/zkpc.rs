fn main() -> std::process::ExitCode {
    zkpc_core::cli::main_with_args(std::env::args_os())
}
