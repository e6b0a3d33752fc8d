// SPDX-License-Identifier: Apache-2.0

mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::{Cli, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use chipnet_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::SimMismatch(_) => 5,
            CliError::Core(e) => match e {
                E::Io(_) => 2,
                E::EmptyFrame | E::MalformedFrame(_) | E::Parse { .. } | E::Container(_) => 3,
                E::FormatMismatch(_) | E::Shape(_) => 4,
                _ => 1,
            },
        }
    }
}
