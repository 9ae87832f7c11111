//! `kgmm`: datagen, pretrain, finetune, eval, sweep, ablate, inspect.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

mod args;
mod commands;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Datagen(a) => commands::datagen(a),
        Command::Pretrain(a) => commands::pretrain_cmd(a),
        Command::Finetune(a) => commands::finetune_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Ablate(a) => commands::ablate_cmd(a),
        Command::Inspect(a) => commands::inspect_cmd(a),
    }
}

/// Validation failures anywhere in the chain map to exit code 1.
fn is_validation(err: &anyhow::Error) -> bool {
    err.chain()
        .any(|cause| cause.downcast_ref::<kgmm_core::Error>().is_some_and(kgmm_core::Error::is_validation))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_validation(&err) { 1 } else { 2 })
        }
    }
}
