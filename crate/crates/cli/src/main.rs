use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tensor_colombeau::catalog::Catalog;
use tensor_colombeau::harness::{self, Overrides};

#[derive(Parser)]
#[command(name = "tcolombeau", version, about = "Experiments on tensor-valued Colombeau generalized functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write results.csv, report.json and summary.txt.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Gauss nodes per panel, overriding the config.
        #[arg(long)]
        quad_nodes: Option<usize>,
        /// Seed for randomly drawn evaluation triples.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print every registered catalog entry.
    ListCatalogs,
}

fn catalog() -> Catalog {
    if cfg!(feature = "empty-catalog") {
        Catalog::empty()
    } else {
        Catalog::builtin()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::ListCatalogs => {
            print!("{}", catalog().listing());
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            quad_nodes,
            seed,
        } => match harness::run(&config, &out, Overrides { quad_nodes, seed }, &catalog()) {
            Ok(output) => {
                print!("{}", output.summary);
                ExitCode::from(output.report.exit_code() as u8)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
