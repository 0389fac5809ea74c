mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Probabilistic fault localisation over test coverage matrices.
#[derive(Debug, Parser)]
#[command(name = "doric", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct MatrixArg {
    /// Coverage matrix, as CSV or JSON (by extension)
    #[arg(short, long, value_name = "PATH")]
    matrix: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank units by causal likelihood or a spectrum measure
    Rank {
        #[command(flatten)]
        matrix: MatrixArg,
        /// `cl` or a spectrum measure name
        #[arg(long, default_value = "cl")]
        measure: String,
        /// Amount added to each spectrum element, as a decimal or `a/b`
        #[arg(long, value_name = "Q")]
        smoothing: Option<String>,
        /// Units known not to be faulty, e.g. `u1,u4`
        #[arg(long, value_name = "UNITS", value_delimiter = ',')]
        not_faulty: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Walk a ranking until a fault is found
    Localize {
        #[command(flatten)]
        matrix: MatrixArg,
        /// The faulty units, for a simulated run
        #[arg(
            long,
            value_name = "UNITS",
            value_delimiter = ',',
            required_unless_present = "interactive"
        )]
        faults: Vec<String>,
        /// `cln`, `clu` or a spectrum measure name
        #[arg(long, default_value = "clu")]
        method: String,
        /// Cap on how many clean units are fed back in `clu`
        #[arg(long, value_name = "N", default_value_t = doric_core::eval::DEFAULT_UPDATE_BOUND)]
        update_bound: usize,
        #[arg(long, value_name = "Q")]
        smoothing: Option<String>,
        /// Read `clean` / `faulty` verdicts from standard input
        #[arg(long, conflicts_with = "faults")]
        interactive: bool,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a probability query by model enumeration
    Oracle {
        #[command(flatten)]
        matrix: MatrixArg,
        /// `P(phi)`, `P_k(phi)` or `P(phi | psi)`
        #[arg(short, long, value_name = "STR")]
        query: String,
        #[arg(long)]
        json: bool,
    },
    /// Run a benchmark described by a config file
    Eval {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Write the JSON report here and the per-instance CSV beside it
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the session API over HTTP
    Serve {
        #[arg(long, value_name = "N", default_value_t = 8080)]
        port: u16,
        #[arg(long, value_name = "ADDR", default_value = "127.0.0.1")]
        bind: String,
        /// Allowed browser origin, or `*`
        #[arg(long, value_name = "ORIGIN")]
        cors: Option<String>,
        /// Keep sessions as JSON files in this directory
        #[arg(long, value_name = "DIR")]
        persist: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let result = match cli.command {
        Command::Rank {
            matrix,
            measure,
            smoothing,
            not_faulty,
            json,
        } => commands::rank(
            &mut stdout.lock(),
            &matrix.matrix,
            &measure,
            smoothing.as_deref(),
            &not_faulty,
            json,
        ),
        Command::Localize {
            matrix,
            faults,
            method,
            update_bound,
            smoothing,
            interactive,
            json,
        } => {
            let opts = commands::LocalizeOpts {
                method,
                update_bound,
                smoothing,
                json,
            };
            if interactive {
                commands::localize_interactive(
                    &mut stdin.lock(),
                    &mut stdout.lock(),
                    &matrix.matrix,
                    &opts,
                )
            } else {
                commands::localize(&mut stdout.lock(), &matrix.matrix, &faults, &opts)
            }
        }
        Command::Oracle {
            matrix,
            query,
            json,
        } => commands::oracle(&mut stdout.lock(), &matrix.matrix, &query, json),
        Command::Eval { config, out, json } => {
            commands::eval(&mut stdout.lock(), &config, out.as_deref(), json)
        }
        Command::Serve {
            port,
            bind,
            cors,
            persist,
        } => commands::serve(&bind, port, cors.as_deref(), persist),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("doric: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
