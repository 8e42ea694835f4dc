use clap::Parser;

fn main() {
    let cli = geomc::cli::Cli::parse();
    std::process::exit(geomc::cli::run(cli));
}
