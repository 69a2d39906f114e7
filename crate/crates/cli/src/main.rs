use std::io::{stderr, stdout};
use std::process::exit;

fn main() {
    exit(arcmatch_cli::run(
        std::env::args_os().collect(),
        &mut stdout(),
        &mut stderr(),
    ));
}
