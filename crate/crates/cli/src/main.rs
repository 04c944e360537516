use clap::Parser;

fn main() {
    let cli = ali_lab::Cli::parse();
    if let Err(e) = ali_lab::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
