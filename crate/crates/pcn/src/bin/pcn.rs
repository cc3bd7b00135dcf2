use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pcn::cli::main_entry(std::env::args_os()) as u8)
}
