mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] prem_core::Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use prem_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Domain(_)) => 2,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) | CliError::Output(_) => 3,
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Profile(a) => commands::profile(a),
        Command::Ci(a) => commands::ci(a),
        Command::Datasets(a) => commands::datasets(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use prem_core::Error as E;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(E::Domain("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(E::Data("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(E::RankDeficient { columns: vec![] }).exit_code(), 3);
        let indefinite = E::IndefiniteCurvature {
            eigenvalue: -1.0,
            coordinate: 0,
        };
        assert_eq!(CliError::Core(indefinite).exit_code(), 4);
        assert_eq!(CliError::Core(E::NonFiniteObjective { point: vec![] }).exit_code(), 4);
    }
}
