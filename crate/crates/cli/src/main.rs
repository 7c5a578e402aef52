use clap::Parser;

fn main() {
    let cli = mlcppm_cli::Cli::parse();
    if let Err(e) = mlcppm_cli::commands::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
