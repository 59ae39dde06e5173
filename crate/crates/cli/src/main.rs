use clap::Parser;
use fodelay_cli::{run, Cli};

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                fodelay_cli::commands::EXIT_USAGE
            } else {
                0
            }
        }
    };
    std::process::exit(code);
}
