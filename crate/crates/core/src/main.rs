fn main() {
    std::process::exit(rks_core::cli::run(std::env::args_os()));
}
