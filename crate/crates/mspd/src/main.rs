use std::process::ExitCode;

use mspd::cli::{run, Style};

fn main() -> ExitCode {
    let style = Style::detect();
    let code = run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock(), style);
    ExitCode::from(code)
}
