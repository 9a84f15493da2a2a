fn main() {
    std::process::exit(entangle_cli::run_from(std::env::args_os()));
}
