use std::process::ExitCode;

use ate_fusion_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((path, lines)) => {
            for l in lines {
                println!("{l}");
            }
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category_name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
