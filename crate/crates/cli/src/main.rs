use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sbsde_cli::{execute, list_scenarios, ListFormat, RunArgs, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "sbsde", version, about = "Scenario runner for BSDEs with an exploding driver intensity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario.
    Run {
        scenario: String,
        /// `--key value` pairs: --config FILE, --out DIR, --seed K, --threads W, or any config key.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// List the built-in scenarios.
    List {
        #[arg(long, value_enum, default_value_t = ListFormat::Table)]
        format: ListFormat,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    match cli.command {
        Command::List { format } => {
            print!("{}", list_scenarios(format));
            ExitCode::SUCCESS
        }
        Command::Run { scenario, args } => {
            let result = RunArgs::parse(&scenario, &args).and_then(|a| execute(&a));
            match result {
                Ok(r) => {
                    let s = &r.summary;
                    println!("{}: {:?} -> {}", s.scenario, s.outcome, r.out_dir.display());
                    ExitCode::from(s.exit_code as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_ERROR as u8)
                }
            }
        }
    }
}
