fn main() {
    std::process::exit(uweb::cli::run_from(std::env::args_os()));
}
