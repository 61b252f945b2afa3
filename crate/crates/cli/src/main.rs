use clap::Parser;
use shuffle_vr_cli::commands::{self, Cli, Outcome};
use shuffle_vr_cli::exit;

fn main() {
    let cli = Cli::parse();
    let code = match commands::dispatch(cli) {
        Ok(Outcome::Success) => exit::SUCCESS,
        Ok(Outcome::ChecksFailed) => exit::CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit::USAGE
        }
    };
    std::process::exit(code);
}
