use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let outcome = brwlab_cli::run(std::env::args_os());
    let _ = std::io::stdout().lock().write_all(&outcome.stdout);
    let _ = std::io::stderr().lock().write_all(&outcome.stderr);
    ExitCode::from(outcome.code as u8)
}
