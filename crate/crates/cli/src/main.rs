use clap::Parser;

fn main() {
    let cli = duoflow_cli::Cli::parse();
    if let Err(e) = duoflow_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
