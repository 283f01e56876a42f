#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_perl-traj")
}

/// Runs the CLI in `dir` and returns its output.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).current_dir(dir).args(args).output().expect("spawn perl-traj")
}

pub fn code(output: &Output) -> i32 {
    output.status.code().unwrap_or(-1)
}

pub fn describe(args: &[&str], output: &Output) -> String {
    format!(
        "`perl-traj {}` exited {}: {}",
        args.join(" "),
        code(output),
        String::from_utf8_lossy(&output.stderr).trim()
    )
}
