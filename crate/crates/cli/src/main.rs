mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Centralized(a) => commands::centralized(a),
        Command::Privirec(a) => commands::privirec(a),
        Command::PrivirecK(a) => commands::privirec_k(a),
        Command::Eval(a) => commands::eval(a),
        Command::Cost(a) => commands::cost(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
