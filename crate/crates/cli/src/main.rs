use clap::Parser;

fn main() {
    let cli = opres::Cli::parse();
    match opres::run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            std::process::exit(outcome.exit_code);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
