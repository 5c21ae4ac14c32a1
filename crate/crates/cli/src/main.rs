use clap::Parser;

fn main() {
    let cli = qdsr_cli::Cli::parse();
    if let Err(e) = qdsr_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
