fn main() {
    if let Err(e) = loadmon::cli::run(std::env::args_os()) {
        eprintln!("loadmon: {e}");
        std::process::exit(e.exit_code());
    }
}
