fn main() {
    std::process::exit(digknow::cli::run(std::env::args_os()));
}
