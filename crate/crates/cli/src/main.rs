fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("GAPS_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let result = gaps_cli::run(std::env::args_os());
    if result.exit_code == 0 {
        println!("{}", result.summary);
    } else {
        eprintln!("{}", result.summary);
    }
    std::process::exit(result.exit_code);
}
