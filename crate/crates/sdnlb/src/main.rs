//! Thin binary over the library's command-line front end.

use std::process::ExitCode;

fn main() -> ExitCode {
    sdnlb::cli::main()
}
