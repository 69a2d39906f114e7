//! Command-line front end: synthetic data generation, training,
//! evaluation, scoring and gradient checking.

pub mod args;
pub mod commands;
pub mod error;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;

pub use args::{parse, Cli, Command, GlobalOpts};
pub use commands::{
    cmd_eval, cmd_gen_synth, cmd_gradcheck, cmd_score, cmd_train, history_path, vectors_path,
};
pub use error::{CliError, CliResult, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::GenSynth(a) => cmd_gen_synth(g, a, out).map(drop),
        Command::Train(a) => cmd_train(g, a, out).map(drop),
        Command::Eval(a) => cmd_eval(g, a, out).map(drop),
        Command::Score(a) => cmd_score(g, a, out).map(drop),
        Command::Gradcheck(a) => cmd_gradcheck(g, a, out).map(drop),
    }
}

/// Run one command line and return the process exit code.
pub fn run(args: Vec<OsString>, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32 {
    let cli = match args::parse(args) {
        Ok(cli) => cli,
        Err(CliError::Clap(e)) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return e.exit_code();
        }
    };
    let result = match cli.global.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, out)),
            Err(e) => Err(CliError::Usage(format!(
                "cannot start {n} worker threads: {e}"
            ))),
        },
        None => dispatch(&cli, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
