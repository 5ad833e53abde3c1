use clap::Parser;

fn main() {
    let cli = kssl::cli::Cli::parse();
    if let Err(e) = kssl::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
