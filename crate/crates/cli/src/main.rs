use clap::Parser;
use truend_cli::error::EXIT_USAGE;
use truend_cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("truend: error: {e}");
        std::process::exit(e.exit_code());
    }
}
