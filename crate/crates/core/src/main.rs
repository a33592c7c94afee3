use clap::Parser;

fn main() {
    let cli = karma::cli::Cli::parse();
    match karma::cli::run(&cli) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
