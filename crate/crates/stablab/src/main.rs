use std::process::ExitCode;

fn main() -> ExitCode {
    stablab::cli::main()
}
