use clap::Parser;

/// Exit code for malformed command lines; clap's own code would read as a
/// validation failure.
const USAGE_EXIT: i32 = 3;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match oamturb::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { USAGE_EXIT } else { 0 });
        }
    };
    if let Err(e) = oamturb::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
