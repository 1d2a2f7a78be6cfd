use clap::Parser;

fn main() {
    match pgkd_cli::run(pgkd_cli::Cli::parse()) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
