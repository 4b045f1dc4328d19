fn main() {
    std::process::exit(kmseries::cli::run_from_env());
}
