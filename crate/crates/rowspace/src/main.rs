fn main() {
    std::process::exit(rowspace::cli::run_from_env());
}
