use clap::Parser;

fn main() {
    let cli = atahrl::cli::Cli::parse();
    if let Err(e) = atahrl::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
