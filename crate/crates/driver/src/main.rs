use clap::Parser;

fn main() {
    let cli = zerotemp_driver::Cli::parse();
    if let Err(e) = zerotemp_driver::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
