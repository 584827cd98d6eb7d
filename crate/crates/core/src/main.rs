fn main() {
    std::process::exit(anchorlvm::cli::run(std::env::args_os()));
}
