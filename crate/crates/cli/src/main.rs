use clap::Parser;

fn main() {
    let cli = cce_cli::Cli::parse();
    let code = match cce_cli::run(cli) {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}
