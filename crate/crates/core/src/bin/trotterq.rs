fn main() -> std::process::ExitCode {
    trotterq::cli::main_with_args(std::env::args_os())
}
