use clap::Parser;
use hkgf::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[validation]: {}", first.trim_start_matches("error: "));
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{}", e.report());
        std::process::exit(e.exit_code());
    }
}
