use std::process::ExitCode;

use clap::Parser;

use quadfem_cli::{run_and_write, Args, RunConfig};

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = RunConfig::from_args(args).and_then(|cfg| run_and_write(&cfg));
    match result {
        Ok(report) => {
            print!("{}", report.text);
            ExitCode::from(report.exit_code)
        }
        Err(e) => {
            eprintln!("quadfem: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
