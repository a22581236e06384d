use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let out: PathBuf = match std::env::args_os().nth(1) {
        Some(p) => p.into(),
        None => {
            eprintln!("usage: make-toy-corpus <out-dir>");
            return ExitCode::from(2);
        }
    };
    match toy_corpus::write_corpus(&out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
